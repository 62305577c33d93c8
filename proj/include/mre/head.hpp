#pragma once

#include "mre/encoder.hpp"
#include "mre/model.hpp"

#include <vector>

namespace mre {

// Distribution over relation labels for one ordered pair. Probabilities
// sum to 1 within 1e-12; argmax ties break toward the lowest label id.
struct RelationPrediction {
    Index subj = -1;
    Index obj = -1;
    Vector probs;
    int argmax = 0;
};

int argmax_lowest(const Vector& probs);

// Pair representation: [o_i : o_j] for pair heads, or a single pooled
// paragraph vector for the sentence-vector baseline. Always 1 x rep_dim.
Matrix concat_pair(const Matrix& o_subj, const Matrix& o_obj);

struct HeadCache {
    Matrix rep;
    Matrix mlp_pre, mlp_act;  // mlp head only
    Vector probs;
};

// Scores one representation with the configured head:
//   linear:   softmax(rep W^L + b)
//   mlp:      softmax(gelu(rep W + c) V + b)
//   biaffine: softmax(o_i U_r o_j^T per label + rep W^L + b)
RelationPrediction predict_rep(const Matrix& rep, const ModelConfig& cfg,
                               const ModelParams& params, HeadCache* cache);

// Gradient of a loss wrt the head inputs, given dlogits for one pair.
void head_backward(const ModelConfig& cfg, const ModelParams& params, const HeadCache& cache,
                   const Matrix& dlogits, Matrix& drep, ModelParams& grads);

// Pools both mentions from the shared encoding and scores the pair.
RelationPrediction predict_pair(const EncoderOutput& out, const std::vector<Span>& mentions,
                                Index subj, Index obj, const ModelConfig& cfg,
                                const ModelParams& params);

// One prediction per requested pair, all from the same EncoderOutput, in
// input order. Mention poolings are computed once and shared; the head
// carries no state across pairs, so this equals mapping predict_pair.
std::vector<RelationPrediction> predict_all(const EncoderOutput& out,
                                            const std::vector<Span>& mentions,
                                            const std::vector<std::pair<Index, Index>>& pairs,
                                            const ModelConfig& cfg, const ModelParams& params);

// Mean negative log-likelihood over pairs.
double cross_entropy_loss(const std::vector<RelationPrediction>& preds,
                          const std::vector<int>& gold);

// d loss_pair / d logits for one pair: probs - onehot(gold). The caller
// applies the 1/pair-count weight of the mean.
Matrix cross_entropy_dlogits(const Vector& probs, int gold);

}  // namespace mre
