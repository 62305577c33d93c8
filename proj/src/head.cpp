#include "mre/head.hpp"

#include "mre/tensor_ops.hpp"

#include <cmath>

namespace mre {

int argmax_lowest(const Vector& probs) {
    int best = 0;
    for (Index i = 1; i < probs.size(); ++i) {
        if (probs[i] > probs[best]) best = static_cast<int>(i);
    }
    return best;
}

Matrix concat_pair(const Matrix& o_subj, const Matrix& o_obj) {
    Matrix rep(1, o_subj.cols() + o_obj.cols());
    rep << o_subj, o_obj;
    return rep;
}

RelationPrediction predict_rep(const Matrix& rep, const ModelConfig& cfg,
                               const ModelParams& params, HeadCache* cache) {
    require(rep.rows() == 1 && rep.cols() == head_input_dim(cfg),
            "predict_rep: representation must be 1x" + std::to_string(head_input_dim(cfg)) +
                ", got " + shape_str(rep));
    Matrix logits;
    Matrix mlp_pre, mlp_act;
    switch (cfg.head_type) {
        case HeadType::kLinear: {
            logits = rep * params.head_lin_w + params.head_lin_b;
            break;
        }
        case HeadType::kMlp: {
            mlp_pre = rep * params.head_mlp_w + params.head_mlp_c;
            mlp_act = gelu(mlp_pre);
            logits = mlp_act * params.head_mlp_v + params.head_mlp_b;
            break;
        }
        case HeadType::kBiaffine: {
            require(cfg.variant != Variant::kSentenceVector,
                    "biaffine head needs a pair representation");
            const Index d = cfg.d_z;
            const Index l = params.head_lin_b.cols();
            Matrix o_subj = rep.leftCols(d);
            Matrix o_obj = rep.rightCols(d);
            logits = rep * params.head_lin_w + params.head_lin_b;
            for (Index r = 0; r < l; ++r) {
                logits(0, r) +=
                    (o_subj * params.head_biaff_u.middleRows(r * d, d) * o_obj.transpose())(0, 0);
            }
            break;
        }
    }
    RelationPrediction pred;
    pred.probs = softmax_rows(logits).row(0).transpose();
    pred.argmax = argmax_lowest(pred.probs);
    if (cache) {
        cache->rep = rep;
        cache->mlp_pre = std::move(mlp_pre);
        cache->mlp_act = std::move(mlp_act);
        cache->probs = pred.probs;
    }
    return pred;
}

void head_backward(const ModelConfig& cfg, const ModelParams& params, const HeadCache& cache,
                   const Matrix& dlogits, Matrix& drep, ModelParams& grads) {
    switch (cfg.head_type) {
        case HeadType::kLinear: {
            grads.head_lin_w += cache.rep.transpose() * dlogits;
            grads.head_lin_b += dlogits;
            drep = dlogits * params.head_lin_w.transpose();
            break;
        }
        case HeadType::kMlp: {
            grads.head_mlp_v += cache.mlp_act.transpose() * dlogits;
            grads.head_mlp_b += dlogits;
            Matrix dact = dlogits * params.head_mlp_v.transpose();
            Matrix dpre = dact.array() *
                          cache.mlp_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
            grads.head_mlp_w += cache.rep.transpose() * dpre;
            grads.head_mlp_c += dpre;
            drep = dpre * params.head_mlp_w.transpose();
            break;
        }
        case HeadType::kBiaffine: {
            const Index d = cfg.d_z;
            const Index l = dlogits.cols();
            Matrix o_subj = cache.rep.leftCols(d);
            Matrix o_obj = cache.rep.rightCols(d);
            grads.head_lin_w += cache.rep.transpose() * dlogits;
            grads.head_lin_b += dlogits;
            drep = dlogits * params.head_lin_w.transpose();
            for (Index r = 0; r < l; ++r) {
                const double g = dlogits(0, r);
                if (g == 0.0) continue;
                const auto u = params.head_biaff_u.middleRows(r * d, d);
                grads.head_biaff_u.middleRows(r * d, d) += g * o_subj.transpose() * o_obj;
                drep.leftCols(d) += g * (u * o_obj.transpose()).transpose();
                drep.rightCols(d) += g * o_subj * u;
            }
            break;
        }
    }
}

RelationPrediction predict_pair(const EncoderOutput& out, const std::vector<Span>& mentions,
                                Index subj, Index obj, const ModelConfig& cfg,
                                const ModelParams& params) {
    require(subj >= 0 && subj < static_cast<Index>(mentions.size()) && obj >= 0 &&
                obj < static_cast<Index>(mentions.size()) && subj != obj,
            "predict_pair: bad mention pair");
    Matrix rep = concat_pair(pool_mention(out, mentions[static_cast<size_t>(subj)]),
                             pool_mention(out, mentions[static_cast<size_t>(obj)]));
    RelationPrediction pred = predict_rep(rep, cfg, params, nullptr);
    pred.subj = subj;
    pred.obj = obj;
    return pred;
}

std::vector<RelationPrediction> predict_all(const EncoderOutput& out,
                                            const std::vector<Span>& mentions,
                                            const std::vector<std::pair<Index, Index>>& pairs,
                                            const ModelConfig& cfg, const ModelParams& params) {
    // pool each mention once; pairs share the pooled vectors
    std::vector<Matrix> pooled(mentions.size());
    std::vector<bool> have(mentions.size(), false);
    auto pooled_of = [&](Index m) -> const Matrix& {
        if (!have[static_cast<size_t>(m)]) {
            pooled[static_cast<size_t>(m)] = pool_mention(out, mentions[static_cast<size_t>(m)]);
            have[static_cast<size_t>(m)] = true;
        }
        return pooled[static_cast<size_t>(m)];
    };
    std::vector<RelationPrediction> preds;
    preds.reserve(pairs.size());
    for (const auto& [i, j] : pairs) {
        Matrix rep = concat_pair(pooled_of(i), pooled_of(j));
        RelationPrediction pred = predict_rep(rep, cfg, params, nullptr);
        pred.subj = i;
        pred.obj = j;
        preds.push_back(std::move(pred));
    }
    return preds;
}

double cross_entropy_loss(const std::vector<RelationPrediction>& preds,
                          const std::vector<int>& gold) {
    require(preds.size() == gold.size(), "cross_entropy_loss: length mismatch");
    require(!preds.empty(), "cross_entropy_loss: no pairs");
    double total = 0.0;
    for (size_t i = 0; i < preds.size(); ++i) {
        const Vector& p = preds[i].probs;
        require(gold[i] >= 0 && gold[i] < p.size(),
                "cross_entropy_loss: gold label id " + std::to_string(gold[i]) +
                    " out of range for " + std::to_string(p.size()) + " labels");
        total += -std::log(std::max(p[gold[i]], 1e-300));
    }
    return total / static_cast<double>(preds.size());
}

Matrix cross_entropy_dlogits(const Vector& probs, int gold) {
    require(gold >= 0 && gold < probs.size(), "cross_entropy_dlogits: gold label out of range");
    Matrix d = probs.transpose();
    d(0, gold) -= 1.0;
    return d;
}

}  // namespace mre
