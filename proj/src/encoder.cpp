#include "mre/encoder.hpp"

#include "mre/tensor_ops.hpp"

#include <stdexcept>

namespace mre {

namespace {
constexpr double kLnEps = 1e-5;
}

std::vector<int> token_ids(const AnnotatedParagraph& p, const SubwordVocab& vocab) {
    std::vector<int> ids;
    ids.reserve(p.tokens.size());
    for (const auto& t : p.tokens) ids.push_back(vocab.id_of(t));
    return ids;
}

Matrix embed_input(const std::vector<int>& ids, const ModelConfig& cfg,
                   const ModelParams& params, const Matrix* input_add) {
    const Index n = static_cast<Index>(ids.size());
    require(n >= 1, "embed_input: empty input");
    if (n > cfg.max_len) {
        throw std::invalid_argument("embed_input: paragraph length " + std::to_string(n) +
                                    " exceeds max_len " + std::to_string(cfg.max_len) +
                                    "; apply window_truncate first");
    }
    Matrix sum(n, cfg.d_z);
    for (Index i = 0; i < n; ++i) {
        const int id = ids[static_cast<size_t>(i)];
        require(id >= 0 && id < cfg.vocab_size, "embed_input: token id out of range");
        sum.row(i) = params.tok_emb.row(id) + params.pos_emb.row(i);
    }
    if (input_add && input_add->size() > 0) {
        require(input_add->rows() == n && input_add->cols() == cfg.d_z,
                "embed_input: addend shape mismatch");
        sum += *input_add;
    }
    return layer_norm_rows(sum, params.emb_ln_g, params.emb_ln_b, kLnEps);
}

const RelativeBiasTable& table_for_layer(const ModelParams& params, const ModelConfig& cfg,
                                         Index layer) {
    if (cfg.per_layer_tables) return params.layers[static_cast<size_t>(layer)].table;
    return params.shared_table;
}

Matrix run_single_layer(const Matrix& x, Index layer, const BiasGrid& grid,
                        const ModelConfig& cfg, const ModelParams& params,
                        LayerTrace* trace) {
    const LayerParams& lp = params.layers[static_cast<size_t>(layer)];
    const std::string context = "layer " + std::to_string(layer);

    MultiHeadCache mha_cache;
    MultiHeadCache* mc = trace ? &mha_cache : nullptr;
    Matrix attn;
    if (cfg.uses_entity_bias()) {
        attn = multi_head_attention(x, lp.wq, lp.wk, lp.wv, lp.wo, cfg.heads, grid,
                                    table_for_layer(params, cfg, layer), cfg.per_head_scale,
                                    context, mc);
    } else {
        attn = vanilla_multi_head_attention(x, lp.wq, lp.wk, lp.wv, lp.wo, cfg.heads,
                                            cfg.per_head_scale, context, mc);
    }

    Matrix sum1 = x + attn;
    Matrix x_mid = layer_norm_rows(sum1, lp.ln1_g, lp.ln1_b, kLnEps);
    Matrix ff_pre = (x_mid * lp.ff_w1).rowwise() + lp.ff_b1.row(0);
    Matrix ff_act = gelu(ff_pre);
    Matrix ff_out = (ff_act * lp.ff_w2).rowwise() + lp.ff_b2.row(0);
    Matrix sum2 = x_mid + ff_out;
    Matrix x_out = layer_norm_rows(sum2, lp.ln2_g, lp.ln2_b, kLnEps);

    if (!x_out.allFinite()) {
        throw std::runtime_error("encode: non-finite hidden states after " + context);
    }
    if (trace) {
        trace->x_in = x;
        trace->mha = std::move(mha_cache);
        trace->sum1 = std::move(sum1);
        trace->x_mid = std::move(x_mid);
        trace->ff_pre = std::move(ff_pre);
        trace->ff_act = std::move(ff_act);
        trace->sum2 = std::move(sum2);
    }
    return x_out;
}

void layer_backward(const LayerTrace& trace, Index layer, const BiasGrid& grid,
                    const ModelConfig& cfg, const ModelParams& params, const Matrix& dy,
                    Matrix& dx, ModelParams& grads) {
    const LayerParams& lp = params.layers[static_cast<size_t>(layer)];
    LayerParams& lg = grads.layers[static_cast<size_t>(layer)];

    Matrix dsum2;
    layer_norm_rows_backward(trace.sum2, lp.ln2_g, kLnEps, dy, dsum2, lg.ln2_g, lg.ln2_b);

    // feed-forward block
    Matrix dff_out = dsum2;
    Matrix dff_act = dff_out * lp.ff_w2.transpose();
    lg.ff_w2 += trace.ff_act.transpose() * dff_out;
    lg.ff_b2 += dff_out.colwise().sum();
    Matrix dff_pre =
        dff_act.array() * trace.ff_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
    Matrix dx_mid = dsum2 + dff_pre * lp.ff_w1.transpose();
    lg.ff_w1 += trace.x_mid.transpose() * dff_pre;
    lg.ff_b1 += dff_pre.colwise().sum();

    Matrix dsum1;
    layer_norm_rows_backward(trace.sum1, lp.ln1_g, kLnEps, dx_mid, dsum1, lg.ln1_g, lg.ln1_b);

    // attention block; residual passes dsum1 straight through to x_in
    MultiHeadGrads mg;
    mg.dh = Matrix::Zero(trace.x_in.rows(), trace.x_in.cols());
    mg.dwq = Matrix::Zero(cfg.d_z, cfg.d_z);
    mg.dwk = Matrix::Zero(cfg.d_z, cfg.d_z);
    mg.dwv = Matrix::Zero(cfg.d_z, cfg.d_z);
    mg.dwo = Matrix::Zero(cfg.d_z, cfg.d_z);
    if (cfg.uses_entity_bias()) {
        const RelativeBiasTable& table = table_for_layer(params, cfg, layer);
        mg.dw_key = Matrix::Zero(table.rows(), cfg.d_head());
        mg.dw_value = Matrix::Zero(table.rows(), cfg.d_head());
        multi_head_attention_backward(trace.x_in, lp.wq, lp.wk, lp.wv, lp.wo, cfg.heads, grid,
                                      table, cfg.per_head_scale, trace.mha, dsum1, mg);
        RelativeBiasTable& table_grads =
            cfg.per_layer_tables ? lg.table : grads.shared_table;
        table_grads.wK += mg.dw_key;
        table_grads.wV += mg.dw_value;
    } else {
        vanilla_multi_head_attention_backward(trace.x_in, lp.wq, lp.wk, lp.wv, lp.wo,
                                              cfg.heads, cfg.per_head_scale, trace.mha, dsum1,
                                              mg);
    }
    lg.wq += mg.dwq;
    lg.wk += mg.dwk;
    lg.wv += mg.dwv;
    lg.wo += mg.dwo;
    dx = dsum1 + mg.dh;
}

EncoderOutput encode_prefix(const std::vector<int>& ids, const EntityMask& mask,
                            const Matrix* input_add, const ModelConfig& cfg,
                            const ModelParams& params, Index layer_count,
                            EncoderTrace* trace, bool keep_layer_outputs) {
    require(layer_count >= 0 && layer_count <= cfg.layers, "encode: bad layer count");
    const Index n = static_cast<Index>(ids.size());

    BiasGrid grid;
    if (cfg.uses_entity_bias()) {
        require(mask.size() == n, "encode: entity mask length mismatch");
        grid = build_bias_tensors(mask, n, cfg.k);
    }

    Matrix emb_sum;  // kept only when tracing
    Matrix x = embed_input(ids, cfg, params, input_add);
    if (trace) {
        // recompute the pre-norm sum for the embedding backward
        emb_sum = Matrix(n, cfg.d_z);
        for (Index i = 0; i < n; ++i) {
            emb_sum.row(i) = params.tok_emb.row(ids[static_cast<size_t>(i)]) +
                             params.pos_emb.row(i);
        }
        if (input_add && input_add->size() > 0) emb_sum += *input_add;
        trace->ids = ids;
        trace->emb_sum = emb_sum;
        trace->x0 = x;
        trace->has_input_add = input_add && input_add->size() > 0;
        trace->grid = grid;
        trace->entity_bias = cfg.uses_entity_bias();
        trace->layers.assign(static_cast<size_t>(layer_count), LayerTrace{});
    }

    EncoderOutput out;
    if (keep_layer_outputs) out.layer_hidden.push_back(x);
    for (Index layer = 0; layer < layer_count; ++layer) {
        LayerTrace* lt = trace ? &trace->layers[static_cast<size_t>(layer)] : nullptr;
        x = run_single_layer(x, layer, grid, cfg, params, lt);
        if (keep_layer_outputs) out.layer_hidden.push_back(x);
    }
    out.hidden = std::move(x);
    return out;
}

EncoderOutput encode(const std::vector<int>& ids, const EntityMask& mask,
                     const Matrix* input_add, const ModelConfig& cfg,
                     const ModelParams& params, EncoderTrace* trace,
                     bool keep_layer_outputs) {
    return encode_prefix(ids, mask, input_add, cfg, params, cfg.layers, trace,
                         keep_layer_outputs);
}

void encode_backward(const EncoderTrace& trace, const ModelConfig& cfg,
                     const ModelParams& params, const Matrix& dhidden, ModelParams& grads,
                     Matrix* d_input_add) {
    Matrix dy = dhidden;
    for (Index layer = static_cast<Index>(trace.layers.size()) - 1; layer >= 0; --layer) {
        Matrix dx;
        layer_backward(trace.layers[static_cast<size_t>(layer)], layer, trace.grid, cfg,
                       params, dy, dx, grads);
        dy = std::move(dx);
    }
    Matrix demb;
    layer_norm_rows_backward(trace.emb_sum, params.emb_ln_g, kLnEps, dy, demb, grads.emb_ln_g,
                             grads.emb_ln_b);
    for (Index i = 0; i < demb.rows(); ++i) {
        grads.tok_emb.row(trace.ids[static_cast<size_t>(i)]) += demb.row(i);
        grads.pos_emb.row(i) += demb.row(i);
    }
    if (d_input_add && trace.has_input_add) *d_input_add = demb;
}

Matrix pool_mention(const EncoderOutput& out, const Span& span) {
    require(span.start >= 0 && span.start < span.end && span.end <= out.hidden.rows(),
            "pool_mention: bad span [" + std::to_string(span.start) + ", " +
                std::to_string(span.end) + ") for " + std::to_string(out.hidden.rows()) +
                " tokens");
    Matrix pooled = Matrix::Zero(1, out.hidden.cols());
    for (Index t = span.start; t < span.end; ++t) pooled += out.hidden.row(t);
    return pooled / static_cast<double>(span.end - span.start);
}

void pool_mention_backward(const Matrix& d_pooled, const Span& span, Matrix& dhidden) {
    const double inv = 1.0 / static_cast<double>(span.end - span.start);
    for (Index t = span.start; t < span.end; ++t) dhidden.row(t) += d_pooled.row(0) * inv;
}

}  // namespace mre
