#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mre/synthetic.hpp"
#include "mre/variants.hpp"

#include "test_util.hpp"

#include <cmath>

using namespace mre;
using namespace mre::test;

namespace {

struct World {
    ModelConfig cfg;
    ModelParams params;
    SubwordVocab vocab;
    LabelSet labels;
    std::vector<AnnotatedParagraph> corpus;
};

World make_world(Variant variant, PassMode mode, Index paragraphs = 6, Index mentions = 3) {
    World w;
    GenSpec spec;
    spec.paragraphs = paragraphs;
    spec.mentions = mentions;
    spec.min_tokens = 10;
    spec.max_tokens = 14;
    spec.seed = 17;
    w.corpus = gen_synthetic(spec);
    w.vocab = synthetic_vocab();
    w.labels = LabelSet::collect(w.corpus);
    w.cfg.layers = 2;
    w.cfg.heads = 2;
    w.cfg.d_z = 8;
    w.cfg.ff = 12;
    w.cfg.max_len = 32;
    w.cfg.k = 2;
    w.cfg.variant = variant;
    w.cfg.pass_mode = mode;
    w.cfg.vocab_size = w.vocab.size();
    w.cfg.seed = 23;
    w.params = build_params(w.cfg, w.labels.size(), ParamInit::kSeeded);
    // non-uniform head so distributions differ across pairs
    RngState rng(71);
    if (w.cfg.head_type == HeadType::kLinear) {
        w.params.head_lin_w = random_matrix(rng, head_input_dim(w.cfg), w.labels.size(), 0.4);
    }
    return w;
}

double max_prob_gap(const std::vector<RelationPrediction>& a,
                    const std::vector<RelationPrediction>& b) {
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, (a[i].probs - b[i].probs).cwiseAbs().maxCoeff());
    }
    return worst;
}

}  // namespace

TEST_CASE("plain-sp: one-pass and per-pair modes agree on every pair") {
    World w = make_world(Variant::kPlainSp, PassMode::kOnePass, 20, 4);
    for (const auto& p : w.corpus) {
        auto pairs = enumerate_pairs(p, PairMode::kAllOrdered);
        auto one = run_plain_sp(p, w.vocab, w.cfg, w.params, pairs, PassMode::kOnePass);
        auto per = run_plain_sp(p, w.vocab, w.cfg, w.params, pairs, PassMode::kPerPair);
        CHECK(max_prob_gap(one, per) <= 1e-9);
    }
}

TEST_CASE("plain-sp: hidden states ignore mention annotations") {
    World w = make_world(Variant::kPlainSp, PassMode::kOnePass);
    AnnotatedParagraph p = w.corpus[0];
    const auto ids = token_ids(p, w.vocab);

    AnnotatedParagraph permuted = p;
    std::swap(permuted.mentions[0], permuted.mentions[1]);
    AnnotatedParagraph stripped = p;
    stripped.mentions.clear();
    stripped.relations.clear();

    EncoderOutput a = encode(ids, make_entity_mask(static_cast<Index>(ids.size()), {}),
                             nullptr, w.cfg, w.params, nullptr);
    EncoderOutput b = encode(token_ids(permuted, w.vocab),
                             make_entity_mask(static_cast<Index>(ids.size()), {}), nullptr,
                             w.cfg, w.params, nullptr);
    EncoderOutput c = encode(token_ids(stripped, w.vocab),
                             make_entity_mask(static_cast<Index>(ids.size()), {}), nullptr,
                             w.cfg, w.params, nullptr);
    CHECK(a.hidden == b.hidden);
    CHECK(a.hidden == c.hidden);
}

TEST_CASE("plain-sp: exhaustive pair check against the per-pair oracle") {
    World w = make_world(Variant::kPlainSp, PassMode::kOnePass, 20, 3);
    for (const auto& p : w.corpus) {
        auto pairs = enumerate_pairs(p, PairMode::kAllOrdered);
        auto one = run_plain_sp(p, w.vocab, w.cfg, w.params, pairs, PassMode::kOnePass);
        // oracle: fresh encode + single predict_pair per pair
        const auto ids = token_ids(p, w.vocab);
        for (size_t q = 0; q < pairs.size(); ++q) {
            EncoderOutput out = encode(ids, make_entity_mask(static_cast<Index>(ids.size()), {}),
                                       nullptr, w.cfg, w.params, nullptr);
            RelationPrediction want = predict_pair(out, p.mentions, pairs[q].first,
                                                   pairs[q].second, w.cfg, w.params);
            CHECK((one[q].probs - want.probs).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("indicator-input with no mentions reduces to plain-sp encoding") {
    World ind = make_world(Variant::kIndicatorInput, PassMode::kOnePass);
    ModelConfig plain_cfg = ind.cfg;
    plain_cfg.variant = Variant::kPlainSp;
    ModelParams plain_params = build_params(plain_cfg, ind.labels.size(), ParamInit::kZero);
    copy_shared_params(ind.cfg, ind.params, plain_cfg, plain_params);

    AnnotatedParagraph p = ind.corpus[0];
    p.mentions.clear();
    p.relations.clear();
    const auto ids = token_ids(p, ind.vocab);
    Matrix add = indicator_addend(p, ind.cfg, ind.params, nullptr);
    EncoderOutput a = encode(ids, make_entity_mask(static_cast<Index>(ids.size()), {}), &add,
                             ind.cfg, ind.params, nullptr);
    EncoderOutput b = encode(ids, make_entity_mask(static_cast<Index>(ids.size()), {}),
                             nullptr, plain_cfg, plain_params, nullptr);
    CHECK((a.hidden - b.hidden).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("indicator-input per-pair encodings depend on the target pair") {
    World w = make_world(Variant::kIndicatorInput, PassMode::kPerPair);
    const AnnotatedParagraph& p = w.corpus[0];
    auto preds = run_indicator_input(p, w.vocab, w.cfg, w.params, {{0, 1}, {1, 2}},
                                     PassMode::kPerPair);
    REQUIRE(preds.size() == 2);
    CHECK((preds[0].probs - preds[1].probs).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("indicator embedding gradients match finite differences") {
    for (PassMode mode : {PassMode::kOnePass, PassMode::kPerPair}) {
        World w = make_world(Variant::kIndicatorInput, mode, 2);
        const AnnotatedParagraph& p = w.corpus[0];
        REQUIRE(!p.relations.empty());
        const double weight = 1.0 / static_cast<double>(p.relations.size());

        auto loss = [&]() {
            ModelParams scratch = build_params(w.cfg, w.labels.size(), ParamInit::kZero);
            ParagraphLoss r = paragraph_loss_and_grad(p, w.vocab, w.labels, w.cfg, w.params,
                                                      weight, scratch);
            return r.loss_sum / static_cast<double>(r.pair_count);
        };

        ModelParams grads = build_params(w.cfg, w.labels.size(), ParamInit::kZero);
        paragraph_loss_and_grad(p, w.vocab, w.labels, w.cfg, w.params, weight, grads);

        const std::vector<std::string> names =
            mode == PassMode::kOnePass
                ? std::vector<std::string>{"indicator.any"}
                : std::vector<std::string>{"indicator.subj", "indicator.obj"};
        for (const auto& name : names) {
            Matrix* target = find_tensor(w.params, w.cfg, name);
            Matrix* analytic = find_tensor(grads, w.cfg, name);
            REQUIRE(target != nullptr);
            Matrix fd = fd_tensor(*target, loss);
            CHECK_MESSAGE(max_rel_err(*analytic, fd) < 1e-4, name);
        }
    }
}

TEST_CASE("posemb-final equals the naive full re-encode oracle") {
    World w = make_world(Variant::kPosembFinal, PassMode::kPerPair, 8, 3);
    for (const auto& p : w.corpus) {
        auto pairs = enumerate_pairs(p, PairMode::kAllOrdered);
        auto fast = run_posemb_final(p, w.vocab, w.cfg, w.params, pairs);
        auto naive = run_posemb_final_reencode(p, w.vocab, w.cfg, w.params, pairs);
        CHECK(max_prob_gap(fast, naive) <= 1e-12);
    }
}

TEST_CASE("posemb-final with zeroed tables matches plain-sp predictions") {
    World w = make_world(Variant::kPosembFinal, PassMode::kPerPair);
    w.params.pos_final_subj.setZero();
    w.params.pos_final_obj.setZero();
    ModelConfig plain_cfg = w.cfg;
    plain_cfg.variant = Variant::kPlainSp;
    plain_cfg.pass_mode = PassMode::kOnePass;
    ModelParams plain_params = build_params(plain_cfg, w.labels.size(), ParamInit::kZero);
    copy_shared_params(w.cfg, w.params, plain_cfg, plain_params);

    const AnnotatedParagraph& p = w.corpus[0];
    auto pairs = enumerate_pairs(p, PairMode::kAllOrdered);
    auto a = run_posemb_final(p, w.vocab, w.cfg, w.params, pairs);
    auto b = run_plain_sp(p, w.vocab, plain_cfg, plain_params, pairs, PassMode::kOnePass);
    CHECK(max_prob_gap(a, b) <= 1e-12);
}

TEST_CASE("posemb-final table gradients match finite differences") {
    World w = make_world(Variant::kPosembFinal, PassMode::kPerPair, 2);
    const AnnotatedParagraph& p = w.corpus[0];
    const double weight = 1.0 / static_cast<double>(p.relations.size());

    auto loss = [&]() {
        ModelParams scratch = build_params(w.cfg, w.labels.size(), ParamInit::kZero);
        ParagraphLoss r =
            paragraph_loss_and_grad(p, w.vocab, w.labels, w.cfg, w.params, weight, scratch);
        return r.loss_sum / static_cast<double>(r.pair_count);
    };
    ModelParams grads = build_params(w.cfg, w.labels.size(), ParamInit::kZero);
    paragraph_loss_and_grad(p, w.vocab, w.labels, w.cfg, w.params, weight, grads);
    for (const std::string name : {"posfinal.subj", "posfinal.obj", "layer1.wq", "tok_emb"}) {
        Matrix* target = find_tensor(w.params, w.cfg, name);
        Matrix* analytic = find_tensor(grads, w.cfg, name);
        Matrix fd = fd_tensor(*target, loss);
        CHECK_MESSAGE(max_rel_err(*analytic, fd) < 1e-4, name);
    }
}

TEST_CASE("sentence-vector gives every pair the same distribution") {
    World w = make_world(Variant::kSentenceVector, PassMode::kOnePass, 5, 4);
    for (const auto& p : w.corpus) {
        auto pairs = enumerate_pairs(p, PairMode::kAllOrdered);
        auto preds = run_sentence_vector(p, w.vocab, w.cfg, w.params, pairs);
        for (size_t q = 1; q < preds.size(); ++q) {
            CHECK(preds[q].probs == preds[0].probs);  // exact constancy
        }
        // two pairs with different gold labels: at most one can be right
        if (p.relations.size() >= 2 && p.relations[0].label != p.relations[1].label) {
            int right = 0;
            LabelSet ls = w.labels;
            for (const auto& r : p.relations) {
                RelationPrediction pred = run_sentence_vector(
                    p, w.vocab, w.cfg, w.params, {{r.subj, r.obj}})[0];
                right += pred.argmax == ls.id_of(r.label) ? 1 : 0;
            }
            CHECK(right <= 1);
        }
    }
}

TEST_CASE("entity-aware per-pair masks only the target mentions") {
    World w = make_world(Variant::kEntityAware, PassMode::kPerPair, 3, 3);
    const AnnotatedParagraph& p = w.corpus[0];
    // prediction for pair (0,1) must not change when mention 2 is removed
    AnnotatedParagraph fewer = p;
    fewer.mentions.resize(2);
    fewer.relations.clear();
    auto with_extra =
        run_entity_aware(p, w.vocab, w.cfg, w.params, {{0, 1}}, PassMode::kPerPair);
    auto without =
        run_entity_aware(fewer, w.vocab, w.cfg, w.params, {{0, 1}}, PassMode::kPerPair);
    CHECK((with_extra[0].probs - without[0].probs).cwiseAbs().maxCoeff() == 0.0);

    // one-pass mode does see the third mention
    auto one_pass =
        run_entity_aware(p, w.vocab, w.cfg, w.params, {{0, 1}}, PassMode::kOnePass);
    CHECK((one_pass[0].probs - with_extra[0].probs).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("variant/mode combinations are validated") {
    CHECK(variant_mode_error(Variant::kPosembFinal, PassMode::kOnePass) != "");
    CHECK(variant_mode_error(Variant::kSentenceVector, PassMode::kPerPair) != "");
    CHECK(variant_mode_error(Variant::kEntityAware, PassMode::kOnePass) == "");
    CHECK(variant_mode_error(Variant::kEntityAware, PassMode::kPerPair) == "");
    CHECK(variant_mode_error(Variant::kPlainSp, PassMode::kPerPair) == "");
}

TEST_CASE("entity-aware one-pass training gradients cover bias tables") {
    World w = make_world(Variant::kEntityAware, PassMode::kOnePass, 2);
    const AnnotatedParagraph& p = w.corpus[0];
    const double weight = 1.0 / static_cast<double>(p.relations.size());
    auto loss = [&]() {
        ModelParams scratch = build_params(w.cfg, w.labels.size(), ParamInit::kZero);
        ParagraphLoss r =
            paragraph_loss_and_grad(p, w.vocab, w.labels, w.cfg, w.params, weight, scratch);
        return r.loss_sum / static_cast<double>(r.pair_count);
    };
    ModelParams grads = build_params(w.cfg, w.labels.size(), ParamInit::kZero);
    paragraph_loss_and_grad(p, w.vocab, w.labels, w.cfg, w.params, weight, grads);
    for (const std::string name : {"bias.wK", "bias.wV", "head.linear_w"}) {
        Matrix* target = find_tensor(w.params, w.cfg, name);
        Matrix* analytic = find_tensor(grads, w.cfg, name);
        Matrix fd = fd_tensor(*target, loss);
        CHECK_MESSAGE(max_rel_err(*analytic, fd) < 1e-4, name);
    }
}
