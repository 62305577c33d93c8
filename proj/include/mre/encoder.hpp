#pragma once

#include "mre/attention.hpp"
#include "mre/model.hpp"

#include <vector>

namespace mre {

struct EncoderOutput {
    Matrix hidden;                     // N x d_z, final layer
    std::vector<Matrix> layer_hidden;  // when requested: embedding output, then each layer
};

// Paragraph tokens to embedding ids; unseen pieces map to the unknown id.
std::vector<int> token_ids(const AnnotatedParagraph& p, const SubwordVocab& vocab);

// Token + absolute position embedding (+ optional per-token addend, used
// by the indicator variant), then layer normalization. Inputs longer than
// max_len are rejected with a hint to window_truncate first.
Matrix embed_input(const std::vector<int>& ids, const ModelConfig& cfg,
                   const ModelParams& params, const Matrix* input_add);

struct LayerTrace {
    Matrix x_in;
    MultiHeadCache mha;
    Matrix sum1;    // x_in + attention, pre-norm
    Matrix x_mid;   // after first norm
    Matrix ff_pre;  // x_mid * w1 + b1
    Matrix ff_act;  // gelu(ff_pre)
    Matrix sum2;    // x_mid + ff output, pre-norm
};

struct EncoderTrace {
    std::vector<int> ids;
    Matrix emb_sum;  // pre-norm embedding sum
    Matrix x0;       // embedding output
    bool has_input_add = false;
    BiasGrid grid;
    bool entity_bias = false;
    std::vector<LayerTrace> layers;
};

const RelativeBiasTable& table_for_layer(const ModelParams& params, const ModelConfig& cfg,
                                         Index layer);

// One encoder layer: entity-aware (or vanilla) multi-head attention with
// residual + norm, then the feed-forward block with residual + norm.
Matrix run_single_layer(const Matrix& x, Index layer, const BiasGrid& grid,
                        const ModelConfig& cfg, const ModelParams& params,
                        LayerTrace* trace);

void layer_backward(const LayerTrace& trace, Index layer, const BiasGrid& grid,
                    const ModelConfig& cfg, const ModelParams& params, const Matrix& dy,
                    Matrix& dx, ModelParams& grads);

// Embedding plus the first `layer_count` layers. The entity mask drives
// the bias grid only for the entity-aware variant; other variants run the
// vanilla attention path.
EncoderOutput encode_prefix(const std::vector<int>& ids, const EntityMask& mask,
                            const Matrix* input_add, const ModelConfig& cfg,
                            const ModelParams& params, Index layer_count,
                            EncoderTrace* trace, bool keep_layer_outputs = false);

// Full stack.
EncoderOutput encode(const std::vector<int>& ids, const EntityMask& mask,
                     const Matrix* input_add, const ModelConfig& cfg,
                     const ModelParams& params, EncoderTrace* trace,
                     bool keep_layer_outputs = false);

// Backpropagates dhidden through every traced layer and the embedding,
// accumulating into `grads` (same shapes as the params). When the forward
// pass had an input addend, d_input_add receives its gradient.
void encode_backward(const EncoderTrace& trace, const ModelConfig& cfg,
                     const ModelParams& params, const Matrix& dhidden, ModelParams& grads,
                     Matrix* d_input_add);

// Average pooling over a mention span of the final hidden states: o_i.
Matrix pool_mention(const EncoderOutput& out, const Span& span);
void pool_mention_backward(const Matrix& d_pooled, const Span& span, Matrix& dhidden);

}  // namespace mre
