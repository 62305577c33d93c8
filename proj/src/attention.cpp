#include "mre/attention.hpp"

#include "mre/tensor_ops.hpp"

#include <stdexcept>

namespace mre {

bool EntityMask::empty_mask() const {
    for (bool f : in_mention) {
        if (f) return false;
    }
    return true;
}

EntityMask make_entity_mask(Index n, const std::vector<Span>& mentions) {
    EntityMask mask;
    mask.in_mention.assign(static_cast<size_t>(n), false);
    mask.mention_id.assign(static_cast<size_t>(n), -1);
    std::vector<Index> owner_start(static_cast<size_t>(n), -1);
    for (size_t m = 0; m < mentions.size(); ++m) {
        const Span& s = mentions[m];
        require(s.start >= 0 && s.start < s.end && s.end <= n,
                "make_entity_mask: span out of range");
        for (Index t = s.start; t < s.end; ++t) {
            mask.in_mention[static_cast<size_t>(t)] = true;
            // overlapping spans: the earliest-starting mention owns the token
            if (owner_start[static_cast<size_t>(t)] < 0 ||
                s.start < owner_start[static_cast<size_t>(t)]) {
                owner_start[static_cast<size_t>(t)] = s.start;
                mask.mention_id[static_cast<size_t>(t)] = static_cast<Index>(m);
            }
        }
    }
    return mask;
}

BiasGrid build_bias_tensors(const EntityMask& mask, Index n, Index k) {
    require(mask.size() == n, "build_bias_tensors: mask length " +
                                  std::to_string(mask.size()) + " != N " + std::to_string(n));
    require(k >= 1, "build_bias_tensors: clip radius must be >= 1");
    BiasGrid grid;
    grid.kind = MatrixT<int>::Zero(n, n);
    grid.table_row = MatrixT<int>::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        const bool i_ent = mask.in_mention[static_cast<size_t>(i)];
        for (Index j = 0; j < n; ++j) {
            if (i_ent) {
                grid.kind(i, j) = static_cast<int>(BiasCase::kRow);
                grid.table_row(i, j) = static_cast<int>(clip_distance(i, j, k) + k);
            } else if (mask.in_mention[static_cast<size_t>(j)]) {
                grid.kind(i, j) = static_cast<int>(BiasCase::kCol);
                grid.table_row(i, j) = static_cast<int>(clip_distance(j, i, k) + k);
            }
        }
    }
    return grid;
}

Matrix bias_vector(const BiasGrid& grid, const Matrix& table, Index i, Index j) {
    if (grid.cell_zero(i, j)) return Matrix::Zero(1, table.cols());
    return table.row(grid.table_row(i, j));
}

std::string render_bias_row(const BiasGrid& grid, int layer, int head, Index i) {
    std::string line = "L" + std::to_string(layer) + " H" + std::to_string(head) + " i" +
                       std::to_string(i) + ":";
    for (Index j = 0; j < grid.size(); ++j) {
        switch (static_cast<BiasCase>(grid.kind(i, j))) {
            case BiasCase::kZero: line += " Z"; break;
            case BiasCase::kRow: line += " R:" + std::to_string(grid.table_row(i, j)); break;
            case BiasCase::kCol: line += " B:" + std::to_string(grid.table_row(i, j)); break;
        }
    }
    return line;
}

namespace {

// Per-row sums of `weights` bucketed by table row, zero where the grid is
// zero. Result is N x table_rows.
Matrix bucket_by_table_row(const Matrix& weights, const BiasGrid& grid, Index table_rows) {
    Matrix buckets = Matrix::Zero(weights.rows(), table_rows);
    for (Index i = 0; i < weights.rows(); ++i) {
        for (Index j = 0; j < weights.cols(); ++j) {
            if (!grid.cell_zero(i, j)) buckets(i, grid.table_row(i, j)) += weights(i, j);
        }
    }
    return buckets;
}

}  // namespace

Matrix attention_head_forward(const Matrix& h, const Matrix& wq, const Matrix& wk,
                              const Matrix& wv, const BiasGrid& grid,
                              const RelativeBiasTable& table, double scale,
                              const std::string& context, AttentionHeadCache* cache) {
    const Index n = h.rows();
    Matrix q = h * wq;
    Matrix k = h * wk;
    Matrix v = h * wv;

    Matrix logits = q * k.transpose();
    // key-side bias: e_ij += q_i . a_ij^K, batched as q times the table
    Matrix key_bias = q * table.wK.transpose();  // N x (2k+1)
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            if (!grid.cell_zero(i, j)) logits(i, j) += key_bias(i, grid.table_row(i, j));
        }
    }
    logits *= scale;
    if (!logits.allFinite()) {
        throw std::runtime_error("attention: non-finite logits at " + context);
    }

    Matrix probs = softmax_rows(logits);
    Matrix buckets = bucket_by_table_row(probs, grid, table.rows());
    Matrix z = probs * v + buckets * table.wV;

    if (cache) {
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->probs = std::move(probs);
        cache->value_buckets = std::move(buckets);
        return z;
    }
    return z;
}

void attention_head_backward(const Matrix& h, const Matrix& wq, const Matrix& wk,
                             const Matrix& wv, const BiasGrid& grid,
                             const RelativeBiasTable& table, double scale,
                             const AttentionHeadCache& cache, const Matrix& dz,
                             AttentionHeadGrads& grads) {
    const Index n = h.rows();

    Matrix dprobs = dz * cache.v.transpose();
    Matrix value_bias = dz * table.wV.transpose();  // N x (2k+1)
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            if (!grid.cell_zero(i, j)) dprobs(i, j) += value_bias(i, grid.table_row(i, j));
        }
    }
    Matrix dv = cache.probs.transpose() * dz;
    grads.dw_value += cache.value_buckets.transpose() * dz;

    Matrix dlogits = softmax_rows_backward(cache.probs, dprobs) * scale;
    Matrix key_buckets = bucket_by_table_row(dlogits, grid, table.rows());

    Matrix dq = dlogits * cache.k + key_buckets * table.wK;
    Matrix dk = dlogits.transpose() * cache.q;
    grads.dw_key += key_buckets.transpose() * cache.q;

    grads.dh += dq * wq.transpose() + dk * wk.transpose() + dv * wv.transpose();
    grads.dwq += h.transpose() * dq;
    grads.dwk += h.transpose() * dk;
    grads.dwv += h.transpose() * dv;
}

namespace {

double head_scale(Index d_model, Index d_head, bool per_head_scale) {
    return 1.0 / std::sqrt(static_cast<double>(per_head_scale ? d_head : d_model));
}

}  // namespace

Matrix multi_head_attention(const Matrix& h, const Matrix& wq, const Matrix& wk,
                            const Matrix& wv, const Matrix& wo, Index heads,
                            const BiasGrid& grid, const RelativeBiasTable& table,
                            bool per_head_scale, const std::string& context,
                            MultiHeadCache* cache) {
    const Index d_model = h.cols();
    require(d_model % heads == 0, "multi_head_attention: heads must divide d_z");
    const Index d_head = d_model / heads;
    const double scale = head_scale(d_model, d_head, per_head_scale);

    Matrix concat(h.rows(), d_model);
    if (cache) cache->heads.resize(static_cast<size_t>(heads));
    for (Index a = 0; a < heads; ++a) {
        AttentionHeadCache* hc = cache ? &cache->heads[static_cast<size_t>(a)] : nullptr;
        concat.middleCols(a * d_head, d_head) = attention_head_forward(
            h, wq.middleCols(a * d_head, d_head), wk.middleCols(a * d_head, d_head),
            wv.middleCols(a * d_head, d_head), grid, table, scale,
            context + " head " + std::to_string(a), hc);
    }
    Matrix out = concat * wo;
    if (cache) cache->concat = std::move(concat);
    return out;
}

void multi_head_attention_backward(const Matrix& h, const Matrix& wq, const Matrix& wk,
                                   const Matrix& wv, const Matrix& wo, Index heads,
                                   const BiasGrid& grid, const RelativeBiasTable& table,
                                   bool per_head_scale, const MultiHeadCache& cache,
                                   const Matrix& dout, MultiHeadGrads& grads) {
    const Index d_model = h.cols();
    const Index d_head = d_model / heads;
    const double scale = head_scale(d_model, d_head, per_head_scale);

    grads.dwo += cache.concat.transpose() * dout;
    Matrix dconcat = dout * wo.transpose();

    for (Index a = 0; a < heads; ++a) {
        AttentionHeadGrads hg;
        hg.dh = Matrix::Zero(h.rows(), h.cols());
        hg.dwq = Matrix::Zero(d_model, d_head);
        hg.dwk = Matrix::Zero(d_model, d_head);
        hg.dwv = Matrix::Zero(d_model, d_head);
        hg.dw_key = Matrix::Zero(table.rows(), d_head);
        hg.dw_value = Matrix::Zero(table.rows(), d_head);
        attention_head_backward(h, wq.middleCols(a * d_head, d_head),
                                wk.middleCols(a * d_head, d_head),
                                wv.middleCols(a * d_head, d_head), grid, table, scale,
                                cache.heads[static_cast<size_t>(a)],
                                dconcat.middleCols(a * d_head, d_head), hg);
        grads.dh += hg.dh;
        grads.dwq.middleCols(a * d_head, d_head) += hg.dwq;
        grads.dwk.middleCols(a * d_head, d_head) += hg.dwk;
        grads.dwv.middleCols(a * d_head, d_head) += hg.dwv;
        grads.dw_key += hg.dw_key;
        grads.dw_value += hg.dw_value;
    }
}

Matrix vanilla_multi_head_attention(const Matrix& h, const Matrix& wq, const Matrix& wk,
                                    const Matrix& wv, const Matrix& wo, Index heads,
                                    bool per_head_scale, const std::string& context,
                                    MultiHeadCache* cache) {
    const Index d_model = h.cols();
    require(d_model % heads == 0, "vanilla attention: heads must divide d_z");
    const Index d_head = d_model / heads;
    const double scale = head_scale(d_model, d_head, per_head_scale);

    Matrix concat(h.rows(), d_model);
    if (cache) cache->heads.resize(static_cast<size_t>(heads));
    for (Index a = 0; a < heads; ++a) {
        Matrix q = h * wq.middleCols(a * d_head, d_head);
        Matrix k = h * wk.middleCols(a * d_head, d_head);
        Matrix v = h * wv.middleCols(a * d_head, d_head);
        Matrix logits = q * k.transpose();
        logits *= scale;
        if (!logits.allFinite()) {
            throw std::runtime_error("attention: non-finite logits at " + context + " head " +
                                     std::to_string(a));
        }
        Matrix probs = softmax_rows(logits);
        concat.middleCols(a * d_head, d_head) = probs * v;
        if (cache) {
            AttentionHeadCache& hc = cache->heads[static_cast<size_t>(a)];
            hc.q = std::move(q);
            hc.k = std::move(k);
            hc.v = std::move(v);
            hc.probs = std::move(probs);
        }
    }
    Matrix out = concat * wo;
    if (cache) cache->concat = std::move(concat);
    return out;
}

void vanilla_multi_head_attention_backward(const Matrix& h, const Matrix& wq,
                                           const Matrix& wk, const Matrix& wv,
                                           const Matrix& wo, Index heads,
                                           bool per_head_scale, const MultiHeadCache& cache,
                                           const Matrix& dout, MultiHeadGrads& grads) {
    const Index d_model = h.cols();
    const Index d_head = d_model / heads;
    const double scale = head_scale(d_model, d_head, per_head_scale);

    grads.dwo += cache.concat.transpose() * dout;
    Matrix dconcat = dout * wo.transpose();

    for (Index a = 0; a < heads; ++a) {
        const AttentionHeadCache& hc = cache.heads[static_cast<size_t>(a)];
        Matrix dz = dconcat.middleCols(a * d_head, d_head);
        Matrix dprobs = dz * hc.v.transpose();
        Matrix dv = hc.probs.transpose() * dz;
        Matrix dlogits = softmax_rows_backward(hc.probs, dprobs) * scale;
        Matrix dq = dlogits * hc.k;
        Matrix dk = dlogits.transpose() * hc.q;
        grads.dh += dq * wq.middleCols(a * d_head, d_head).transpose() +
                    dk * wk.middleCols(a * d_head, d_head).transpose() +
                    dv * wv.middleCols(a * d_head, d_head).transpose();
        grads.dwq.middleCols(a * d_head, d_head) += h.transpose() * dq;
        grads.dwk.middleCols(a * d_head, d_head) += h.transpose() * dk;
        grads.dwv.middleCols(a * d_head, d_head) += h.transpose() * dv;
    }
}

}  // namespace mre
