#pragma once

#include "mre/head.hpp"

#include <vector>

namespace mre {

// Embedding-level addend for the indicator-input variant: one learned
// in-mention vector in one-pass mode; subject/object vectors on the
// target pair's tokens in per-pair mode. Returns an empty matrix when the
// variant contributes nothing.
Matrix indicator_addend(const AnnotatedParagraph& p, const ModelConfig& cfg,
                        const ModelParams& params,
                        const std::pair<Index, Index>* target);

// Relative position embeddings injected before the final layer for one
// target pair: token t receives row clip(t - start, k) + k of the subject
// table for the subject mention plus the same for the object table.
Matrix posemb_injection(Index n, const std::vector<Span>& mentions,
                        const std::pair<Index, Index>& target, const ModelConfig& cfg,
                        const ModelParams& params);

// The comparison systems. Each returns one prediction per requested pair,
// in input order; `mode` selects one-pass or per-pair execution where the
// variant supports both.
std::vector<RelationPrediction> run_entity_aware(const AnnotatedParagraph& p,
                                                 const SubwordVocab& vocab,
                                                 const ModelConfig& cfg,
                                                 const ModelParams& params,
                                                 const std::vector<std::pair<Index, Index>>& pairs,
                                                 PassMode mode);

std::vector<RelationPrediction> run_plain_sp(const AnnotatedParagraph& p,
                                             const SubwordVocab& vocab, const ModelConfig& cfg,
                                             const ModelParams& params,
                                             const std::vector<std::pair<Index, Index>>& pairs,
                                             PassMode mode);

std::vector<RelationPrediction> run_indicator_input(
    const AnnotatedParagraph& p, const SubwordVocab& vocab, const ModelConfig& cfg,
    const ModelParams& params, const std::vector<std::pair<Index, Index>>& pairs,
    PassMode mode);

// Runs the stack through layer L-1 once, then re-runs only the final
// layer per pair with the pair's position embeddings injected.
std::vector<RelationPrediction> run_posemb_final(const AnnotatedParagraph& p,
                                                 const SubwordVocab& vocab,
                                                 const ModelConfig& cfg,
                                                 const ModelParams& params,
                                                 const std::vector<std::pair<Index, Index>>& pairs);

// Naive reference for run_posemb_final: full re-encode per pair with the
// same injection depth. Kept as an independent route for equality tests.
std::vector<RelationPrediction> run_posemb_final_reencode(
    const AnnotatedParagraph& p, const SubwordVocab& vocab, const ModelConfig& cfg,
    const ModelParams& params, const std::vector<std::pair<Index, Index>>& pairs);

// Out-of-box baseline: the classifier reads only the mean of the final
// hidden states, so every pair of a paragraph gets the same distribution.
std::vector<RelationPrediction> run_sentence_vector(
    const AnnotatedParagraph& p, const SubwordVocab& vocab, const ModelConfig& cfg,
    const ModelParams& params, const std::vector<std::pair<Index, Index>>& pairs);

// Dispatch on cfg.variant; `mode` must be valid for the variant.
std::vector<RelationPrediction> predict_paragraph(
    const AnnotatedParagraph& p, const SubwordVocab& vocab, const ModelConfig& cfg,
    const ModelParams& params, const std::vector<std::pair<Index, Index>>& pairs,
    PassMode mode);

struct ParagraphLoss {
    double loss_sum = 0.0;  // summed NLL over this paragraph's gold pairs
    Index pair_count = 0;
    Index correct = 0;
};

// Forward + backward over one paragraph's gold pairs under the model's
// variant and pass mode. Each pair's logit gradient is scaled by
// pair_weight so a batch mean is the sum of paragraph contributions.
ParagraphLoss paragraph_loss_and_grad(const AnnotatedParagraph& p, const SubwordVocab& vocab,
                                      const LabelSet& labels, const ModelConfig& cfg,
                                      const ModelParams& params, double pair_weight,
                                      ModelParams& grads);

// Forward-only twin of paragraph_loss_and_grad; same loss, no traces.
ParagraphLoss paragraph_loss(const AnnotatedParagraph& p, const SubwordVocab& vocab,
                             const LabelSet& labels, const ModelConfig& cfg,
                             const ModelParams& params);

}  // namespace mre
