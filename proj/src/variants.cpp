#include "mre/variants.hpp"

#include "mre/tensor_ops.hpp"

namespace mre {

namespace {

EntityMask full_mask(const AnnotatedParagraph& p) {
    return make_entity_mask(static_cast<Index>(p.tokens.size()), p.mentions);
}

EntityMask pair_mask(const AnnotatedParagraph& p, const std::pair<Index, Index>& target) {
    return make_entity_mask(static_cast<Index>(p.tokens.size()),
                            {p.mentions[static_cast<size_t>(target.first)],
                             p.mentions[static_cast<size_t>(target.second)]});
}

EntityMask no_mask(const AnnotatedParagraph& p) {
    return make_entity_mask(static_cast<Index>(p.tokens.size()), {});
}

}  // namespace

Matrix indicator_addend(const AnnotatedParagraph& p, const ModelConfig& cfg,
                        const ModelParams& params,
                        const std::pair<Index, Index>* target) {
    if (cfg.variant != Variant::kIndicatorInput) return Matrix();
    const Index n = static_cast<Index>(p.tokens.size());
    Matrix add = Matrix::Zero(n, cfg.d_z);
    if (cfg.pass_mode == PassMode::kOnePass) {
        for (const Span& s : p.mentions) {
            for (Index t = s.start; t < s.end; ++t) add.row(t) += params.ind_any.row(0);
        }
    } else {
        require(target != nullptr, "indicator_addend: per-pair mode needs a target pair");
        const Span& subj = p.mentions[static_cast<size_t>(target->first)];
        const Span& obj = p.mentions[static_cast<size_t>(target->second)];
        for (Index t = subj.start; t < subj.end; ++t) add.row(t) += params.ind_subj.row(0);
        for (Index t = obj.start; t < obj.end; ++t) add.row(t) += params.ind_obj.row(0);
    }
    return add;
}

Matrix posemb_injection(Index n, const std::vector<Span>& mentions,
                        const std::pair<Index, Index>& target, const ModelConfig& cfg,
                        const ModelParams& params) {
    Matrix add = Matrix::Zero(n, cfg.d_z);
    const Index subj_start = mentions[static_cast<size_t>(target.first)].start;
    const Index obj_start = mentions[static_cast<size_t>(target.second)].start;
    for (Index t = 0; t < n; ++t) {
        add.row(t) += params.pos_final_subj.row(clip_distance(t, subj_start, cfg.k) + cfg.k);
        add.row(t) += params.pos_final_obj.row(clip_distance(t, obj_start, cfg.k) + cfg.k);
    }
    return add;
}

std::vector<RelationPrediction> run_entity_aware(const AnnotatedParagraph& p,
                                                 const SubwordVocab& vocab,
                                                 const ModelConfig& cfg,
                                                 const ModelParams& params,
                                                 const std::vector<std::pair<Index, Index>>& pairs,
                                                 PassMode mode) {
    const auto ids = token_ids(p, vocab);
    if (mode == PassMode::kOnePass) {
        EncoderOutput out = encode(ids, full_mask(p), nullptr, cfg, params, nullptr);
        return predict_all(out, p.mentions, pairs, cfg, params);
    }
    std::vector<RelationPrediction> preds;
    preds.reserve(pairs.size());
    for (const auto& pair : pairs) {
        // single-relation setting: only the two target mentions are masked
        EncoderOutput out = encode(ids, pair_mask(p, pair), nullptr, cfg, params, nullptr);
        preds.push_back(
            predict_pair(out, p.mentions, pair.first, pair.second, cfg, params));
    }
    return preds;
}

std::vector<RelationPrediction> run_plain_sp(const AnnotatedParagraph& p,
                                             const SubwordVocab& vocab, const ModelConfig& cfg,
                                             const ModelParams& params,
                                             const std::vector<std::pair<Index, Index>>& pairs,
                                             PassMode mode) {
    const auto ids = token_ids(p, vocab);
    if (mode == PassMode::kOnePass) {
        EncoderOutput out = encode(ids, no_mask(p), nullptr, cfg, params, nullptr);
        return predict_all(out, p.mentions, pairs, cfg, params);
    }
    std::vector<RelationPrediction> preds;
    preds.reserve(pairs.size());
    for (const auto& pair : pairs) {
        EncoderOutput out = encode(ids, no_mask(p), nullptr, cfg, params, nullptr);
        preds.push_back(
            predict_pair(out, p.mentions, pair.first, pair.second, cfg, params));
    }
    return preds;
}

std::vector<RelationPrediction> run_indicator_input(
    const AnnotatedParagraph& p, const SubwordVocab& vocab, const ModelConfig& cfg,
    const ModelParams& params, const std::vector<std::pair<Index, Index>>& pairs,
    PassMode mode) {
    const auto ids = token_ids(p, vocab);
    if (mode == PassMode::kOnePass) {
        Matrix add = indicator_addend(p, cfg, params, nullptr);
        EncoderOutput out = encode(ids, no_mask(p), &add, cfg, params, nullptr);
        return predict_all(out, p.mentions, pairs, cfg, params);
    }
    std::vector<RelationPrediction> preds;
    preds.reserve(pairs.size());
    for (const auto& pair : pairs) {
        Matrix add = indicator_addend(p, cfg, params, &pair);
        EncoderOutput out = encode(ids, no_mask(p), &add, cfg, params, nullptr);
        preds.push_back(
            predict_pair(out, p.mentions, pair.first, pair.second, cfg, params));
    }
    return preds;
}

std::vector<RelationPrediction> run_posemb_final(const AnnotatedParagraph& p,
                                                 const SubwordVocab& vocab,
                                                 const ModelConfig& cfg,
                                                 const ModelParams& params,
                                                 const std::vector<std::pair<Index, Index>>& pairs) {
    require(cfg.layers >= 1, "posemb-final needs at least one layer");
    const auto ids = token_ids(p, vocab);
    const Index n = static_cast<Index>(ids.size());
    // shared pass up to the final attention layer
    EncoderOutput prefix =
        encode_prefix(ids, no_mask(p), nullptr, cfg, params, cfg.layers - 1, nullptr);
    BiasGrid unused_grid;
    std::vector<RelationPrediction> preds;
    preds.reserve(pairs.size());
    for (const auto& pair : pairs) {
        Matrix injected =
            prefix.hidden + posemb_injection(n, p.mentions, pair, cfg, params);
        EncoderOutput out;
        out.hidden =
            run_single_layer(injected, cfg.layers - 1, unused_grid, cfg, params, nullptr);
        preds.push_back(
            predict_pair(out, p.mentions, pair.first, pair.second, cfg, params));
    }
    return preds;
}

std::vector<RelationPrediction> run_posemb_final_reencode(
    const AnnotatedParagraph& p, const SubwordVocab& vocab, const ModelConfig& cfg,
    const ModelParams& params, const std::vector<std::pair<Index, Index>>& pairs) {
    require(cfg.layers >= 1, "posemb-final needs at least one layer");
    const auto ids = token_ids(p, vocab);
    const Index n = static_cast<Index>(ids.size());
    BiasGrid unused_grid;
    std::vector<RelationPrediction> preds;
    preds.reserve(pairs.size());
    for (const auto& pair : pairs) {
        EncoderOutput out =
            encode_prefix(ids, no_mask(p), nullptr, cfg, params, cfg.layers - 1, nullptr);
        out.hidden += posemb_injection(n, p.mentions, pair, cfg, params);
        out.hidden = run_single_layer(out.hidden, cfg.layers - 1, unused_grid, cfg, params,
                                      nullptr);
        preds.push_back(
            predict_pair(out, p.mentions, pair.first, pair.second, cfg, params));
    }
    return preds;
}

std::vector<RelationPrediction> run_sentence_vector(
    const AnnotatedParagraph& p, const SubwordVocab& vocab, const ModelConfig& cfg,
    const ModelParams& params, const std::vector<std::pair<Index, Index>>& pairs) {
    const auto ids = token_ids(p, vocab);
    EncoderOutput out = encode(ids, no_mask(p), nullptr, cfg, params, nullptr);
    Matrix rep = out.hidden.colwise().mean();
    RelationPrediction shared = predict_rep(rep, cfg, params, nullptr);
    std::vector<RelationPrediction> preds;
    preds.reserve(pairs.size());
    for (const auto& pair : pairs) {
        RelationPrediction pred = shared;
        pred.subj = pair.first;
        pred.obj = pair.second;
        preds.push_back(std::move(pred));
    }
    return preds;
}

std::vector<RelationPrediction> predict_paragraph(
    const AnnotatedParagraph& p, const SubwordVocab& vocab, const ModelConfig& cfg,
    const ModelParams& params, const std::vector<std::pair<Index, Index>>& pairs,
    PassMode mode) {
    const std::string err = variant_mode_error(cfg.variant, mode);
    require(err.empty(), err);
    switch (cfg.variant) {
        case Variant::kEntityAware: return run_entity_aware(p, vocab, cfg, params, pairs, mode);
        case Variant::kPlainSp: return run_plain_sp(p, vocab, cfg, params, pairs, mode);
        case Variant::kIndicatorInput:
            return run_indicator_input(p, vocab, cfg, params, pairs, mode);
        case Variant::kPosembFinal: return run_posemb_final(p, vocab, cfg, params, pairs);
        case Variant::kSentenceVector:
            return run_sentence_vector(p, vocab, cfg, params, pairs);
    }
    throw std::logic_error("predict_paragraph: unreachable");
}

namespace {

// Scatter the embedding-addend gradient back into the indicator tensors.
void indicator_backward(const AnnotatedParagraph& p, const ModelConfig& cfg,
                        const Matrix& d_add, const std::pair<Index, Index>* target,
                        ModelParams& grads) {
    if (cfg.variant != Variant::kIndicatorInput) return;
    if (cfg.pass_mode == PassMode::kOnePass) {
        for (const Span& s : p.mentions) {
            for (Index t = s.start; t < s.end; ++t) grads.ind_any.row(0) += d_add.row(t);
        }
    } else {
        const Span& subj = p.mentions[static_cast<size_t>(target->first)];
        const Span& obj = p.mentions[static_cast<size_t>(target->second)];
        for (Index t = subj.start; t < subj.end; ++t) grads.ind_subj.row(0) += d_add.row(t);
        for (Index t = obj.start; t < obj.end; ++t) grads.ind_obj.row(0) += d_add.row(t);
    }
}

void posemb_backward(Index n, const std::vector<Span>& mentions,
                     const std::pair<Index, Index>& target, const ModelConfig& cfg,
                     const Matrix& d_inject, ModelParams& grads) {
    const Index subj_start = mentions[static_cast<size_t>(target.first)].start;
    const Index obj_start = mentions[static_cast<size_t>(target.second)].start;
    for (Index t = 0; t < n; ++t) {
        grads.pos_final_subj.row(clip_distance(t, subj_start, cfg.k) + cfg.k) += d_inject.row(t);
        grads.pos_final_obj.row(clip_distance(t, obj_start, cfg.k) + cfg.k) += d_inject.row(t);
    }
}

struct PairTarget {
    std::pair<Index, Index> pair;
    int gold = 0;
};

std::vector<PairTarget> gold_pairs(const AnnotatedParagraph& p, const LabelSet& labels) {
    std::vector<PairTarget> out;
    out.reserve(p.relations.size());
    for (const auto& r : p.relations) {
        out.push_back({{r.subj, r.obj}, labels.id_of(r.label)});
    }
    return out;
}

// Loss + gradient for pairs scored off one shared encoding trace.
ParagraphLoss shared_encoding_loss(const AnnotatedParagraph& p, const std::vector<int>& ids,
                                   const EntityMask& mask, const Matrix* input_add,
                                   const std::vector<PairTarget>& targets,
                                   const ModelConfig& cfg, const ModelParams& params,
                                   double pair_weight, ModelParams& grads) {
    EncoderTrace trace;
    EncoderOutput out = encode(ids, mask, input_add, cfg, params, &trace);
    const bool sentence_rep = cfg.variant == Variant::kSentenceVector;
    const Index n = out.hidden.rows();

    Matrix dhidden = Matrix::Zero(n, cfg.d_z);
    ParagraphLoss result;
    for (const auto& t : targets) {
        Matrix rep;
        if (sentence_rep) {
            rep = out.hidden.colwise().mean();
        } else {
            rep = concat_pair(
                pool_mention(out, p.mentions[static_cast<size_t>(t.pair.first)]),
                pool_mention(out, p.mentions[static_cast<size_t>(t.pair.second)]));
        }
        HeadCache cache;
        RelationPrediction pred = predict_rep(rep, cfg, params, &cache);
        result.loss_sum += -std::log(std::max(pred.probs[t.gold], 1e-300));
        result.pair_count += 1;
        result.correct += pred.argmax == t.gold ? 1 : 0;

        Matrix dlogits = cross_entropy_dlogits(pred.probs, t.gold) * pair_weight;
        Matrix drep;
        head_backward(cfg, params, cache, dlogits, drep, grads);
        if (sentence_rep) {
            dhidden += Matrix::Ones(n, 1) * (drep / static_cast<double>(n));
        } else {
            pool_mention_backward(drep.leftCols(cfg.d_z),
                                  p.mentions[static_cast<size_t>(t.pair.first)], dhidden);
            pool_mention_backward(drep.rightCols(cfg.d_z),
                                  p.mentions[static_cast<size_t>(t.pair.second)], dhidden);
        }
    }
    Matrix d_add;
    encode_backward(trace, cfg, params, dhidden, grads, &d_add);
    if (trace.has_input_add) indicator_backward(p, cfg, d_add, nullptr, grads);
    return result;
}

// Loss + gradient for one pair with its own encoding.
void per_pair_loss(const AnnotatedParagraph& p, const std::vector<int>& ids,
                   const PairTarget& target, const ModelConfig& cfg,
                   const ModelParams& params, double pair_weight, ModelParams& grads,
                   ParagraphLoss& result) {
    EntityMask mask = cfg.uses_entity_bias() ? pair_mask(p, target.pair) : no_mask(p);
    Matrix add = indicator_addend(p, cfg, params, &target.pair);
    const Matrix* add_ptr = add.size() > 0 ? &add : nullptr;

    EncoderTrace trace;
    EncoderOutput out = encode(ids, mask, add_ptr, cfg, params, &trace);
    Matrix rep = concat_pair(
        pool_mention(out, p.mentions[static_cast<size_t>(target.pair.first)]),
        pool_mention(out, p.mentions[static_cast<size_t>(target.pair.second)]));
    HeadCache cache;
    RelationPrediction pred = predict_rep(rep, cfg, params, &cache);
    result.loss_sum += -std::log(std::max(pred.probs[target.gold], 1e-300));
    result.pair_count += 1;
    result.correct += pred.argmax == target.gold ? 1 : 0;

    Matrix dlogits = cross_entropy_dlogits(pred.probs, target.gold) * pair_weight;
    Matrix drep;
    head_backward(cfg, params, cache, dlogits, drep, grads);
    Matrix dhidden = Matrix::Zero(out.hidden.rows(), cfg.d_z);
    pool_mention_backward(drep.leftCols(cfg.d_z),
                          p.mentions[static_cast<size_t>(target.pair.first)], dhidden);
    pool_mention_backward(drep.rightCols(cfg.d_z),
                          p.mentions[static_cast<size_t>(target.pair.second)], dhidden);
    Matrix d_add;
    encode_backward(trace, cfg, params, dhidden, grads, &d_add);
    if (trace.has_input_add) indicator_backward(p, cfg, d_add, &target.pair, grads);
}

// posemb-final trains in the single-relation setting: full forward per
// pair with the injection applied before the final layer.
void posemb_pair_loss(const AnnotatedParagraph& p, const std::vector<int>& ids,
                      const PairTarget& target, const ModelConfig& cfg,
                      const ModelParams& params, double pair_weight, ModelParams& grads,
                      ParagraphLoss& result) {
    const Index n = static_cast<Index>(ids.size());
    EncoderTrace prefix_trace;
    EncoderOutput prefix = encode_prefix(ids, no_mask(p), nullptr, cfg, params,
                                         cfg.layers - 1, &prefix_trace);
    Matrix injected = prefix.hidden + posemb_injection(n, p.mentions, target.pair, cfg, params);
    BiasGrid unused_grid;
    LayerTrace final_trace;
    EncoderOutput out;
    out.hidden = run_single_layer(injected, cfg.layers - 1, unused_grid, cfg, params,
                                  &final_trace);

    Matrix rep = concat_pair(
        pool_mention(out, p.mentions[static_cast<size_t>(target.pair.first)]),
        pool_mention(out, p.mentions[static_cast<size_t>(target.pair.second)]));
    HeadCache cache;
    RelationPrediction pred = predict_rep(rep, cfg, params, &cache);
    result.loss_sum += -std::log(std::max(pred.probs[target.gold], 1e-300));
    result.pair_count += 1;
    result.correct += pred.argmax == target.gold ? 1 : 0;

    Matrix dlogits = cross_entropy_dlogits(pred.probs, target.gold) * pair_weight;
    Matrix drep;
    head_backward(cfg, params, cache, dlogits, drep, grads);
    Matrix dhidden = Matrix::Zero(n, cfg.d_z);
    pool_mention_backward(drep.leftCols(cfg.d_z),
                          p.mentions[static_cast<size_t>(target.pair.first)], dhidden);
    pool_mention_backward(drep.rightCols(cfg.d_z),
                          p.mentions[static_cast<size_t>(target.pair.second)], dhidden);

    Matrix d_injected;
    layer_backward(final_trace, cfg.layers - 1, unused_grid, cfg, params, dhidden, d_injected,
                   grads);
    posemb_backward(n, p.mentions, target.pair, cfg, d_injected, grads);
    encode_backward(prefix_trace, cfg, params, d_injected, grads, nullptr);
}

}  // namespace

ParagraphLoss paragraph_loss(const AnnotatedParagraph& p, const SubwordVocab& vocab,
                             const LabelSet& labels, const ModelConfig& cfg,
                             const ModelParams& params) {
    ParagraphLoss result;
    if (p.relations.empty()) return result;
    auto pairs = enumerate_pairs(p, PairMode::kGoldOnly);
    auto preds = predict_paragraph(p, vocab, cfg, params, pairs, cfg.pass_mode);
    for (size_t q = 0; q < pairs.size(); ++q) {
        int gold = -1;
        for (const auto& r : p.relations) {
            if (r.subj == pairs[q].first && r.obj == pairs[q].second) {
                gold = labels.id_of(r.label);
                break;
            }
        }
        require(gold >= 0, "paragraph_loss: gold pair without relation");
        result.loss_sum += -std::log(std::max(preds[q].probs[gold], 1e-300));
        result.pair_count += 1;
        result.correct += preds[q].argmax == gold ? 1 : 0;
    }
    return result;
}

ParagraphLoss paragraph_loss_and_grad(const AnnotatedParagraph& p, const SubwordVocab& vocab,
                                      const LabelSet& labels, const ModelConfig& cfg,
                                      const ModelParams& params, double pair_weight,
                                      ModelParams& grads) {
    const auto targets = gold_pairs(p, labels);
    ParagraphLoss result;
    if (targets.empty()) return result;
    const auto ids = token_ids(p, vocab);

    if (cfg.variant == Variant::kPosembFinal) {
        for (const auto& t : targets) {
            posemb_pair_loss(p, ids, t, cfg, params, pair_weight, grads, result);
        }
        return result;
    }
    if (cfg.pass_mode == PassMode::kPerPair) {
        for (const auto& t : targets) {
            per_pair_loss(p, ids, t, cfg, params, pair_weight, grads, result);
        }
        return result;
    }
    EntityMask mask = cfg.uses_entity_bias() ? full_mask(p) : no_mask(p);
    Matrix add = indicator_addend(p, cfg, params, nullptr);
    const Matrix* add_ptr = add.size() > 0 ? &add : nullptr;
    return shared_encoding_loss(p, ids, mask, add_ptr, targets, cfg, params, pair_weight,
                                grads);
}

}  // namespace mre
