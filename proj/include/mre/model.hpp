#pragma once

#include "mre/attention.hpp"
#include "mre/corpus.hpp"
#include "mre/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mre {

enum class HeadType { kLinear, kMlp, kBiaffine };
enum class Variant { kEntityAware, kPlainSp, kIndicatorInput, kPosembFinal, kSentenceVector };
enum class PassMode { kOnePass, kPerPair };

std::string to_string(HeadType t);
std::string to_string(Variant v);
std::string to_string(PassMode m);
HeadType parse_head_type(const std::string& s);
Variant parse_variant(const std::string& s);
PassMode parse_pass_mode(const std::string& s);

inline constexpr const char* kVariantNames =
    "entity-aware, plain-sp, indicator-input, posemb-final, sentence-vector";

// Everything that determines parameter shapes and forward semantics.
struct ModelConfig {
    Index layers = 2;
    Index heads = 2;
    Index d_z = 32;
    Index ff = 64;
    Index vocab_size = 0;  // filled in from the training vocab
    Index max_len = 64;
    Index k = 4;  // relative-distance clip radius
    HeadType head_type = HeadType::kLinear;
    Variant variant = Variant::kEntityAware;
    PassMode pass_mode = PassMode::kOnePass;
    bool per_layer_tables = false;  // default: one table pair shared by all layers
    bool per_head_scale = true;     // logit scaling by sqrt(d_h); false scales by sqrt(d_z)
    std::uint64_t seed = 42;

    Index d_head() const { return d_z / heads; }
    bool uses_entity_bias() const { return variant == Variant::kEntityAware; }
    bool operator==(const ModelConfig&) const = default;
};

void validate_config(const ModelConfig& cfg);

// posemb-final re-runs the final layer per pair; sentence-vector encodes
// once and is pair-blind. Returns an empty string when the combination is
// valid, else the usage-error message.
std::string variant_mode_error(Variant v, PassMode m);

struct LayerParams {
    Matrix wq, wk, wv, wo;
    Matrix ln1_g, ln1_b;
    Matrix ff_w1, ff_b1, ff_w2, ff_b2;
    Matrix ln2_g, ln2_b;
    RelativeBiasTable table;  // only populated with per-layer tables
};

// All trainable tensors. Which ones exist follows from the config: bias
// tables only for the entity-aware variant, indicator embeddings only for
// indicator-input (binary for one-pass, subject/object for per-pair),
// relative position tables only for posemb-final, and one head family.
struct ModelParams {
    Matrix tok_emb;   // vocab x d_z
    Matrix pos_emb;   // max_len x d_z
    Matrix emb_ln_g, emb_ln_b;
    std::vector<LayerParams> layers;
    RelativeBiasTable shared_table;
    Matrix ind_any;              // 1 x d_z
    Matrix ind_subj, ind_obj;    // 1 x d_z each
    Matrix pos_final_subj, pos_final_obj;  // (2k+1) x d_z each
    Matrix head_lin_w, head_lin_b;         // rep_dim x l, 1 x l
    Matrix head_mlp_w, head_mlp_c, head_mlp_v, head_mlp_b;
    Matrix head_biaff_u;  // (l * d_z) x d_z, label r owns rows [r*d_z, (r+1)*d_z)

    // Visits every existing tensor as (name, Matrix&) in the canonical
    // checkpoint order: embeddings, per-layer tensors, shared bias
    // tables, variant extras, head.
    template <typename F>
    void for_each(const ModelConfig& cfg, F&& f) {
        for_each_impl(*this, cfg, f);
    }
    template <typename F>
    void for_each(const ModelConfig& cfg, F&& f) const {
        for_each_impl(*this, cfg, f);
    }

private:
    template <typename Self, typename F>
    static void for_each_impl(Self& self, const ModelConfig& cfg, F&& f);
};

// Pair-representation width the head consumes: the sentence-vector
// baseline reads one pooled paragraph vector, every other variant reads
// the concatenation [o_i : o_j].
Index head_input_dim(const ModelConfig& cfg);

enum class ParamInit { kSeeded, kZero };

// Shapes from the config; values from per-tensor streams derived from
// (cfg.seed, tensor name) when seeded.
ModelParams build_params(const ModelConfig& cfg, Index label_count, ParamInit init);

// A trained or initialized model bundle: config, label inventory, vocab,
// parameters.
struct Model {
    ModelConfig cfg;
    LabelSet labels;
    SubwordVocab vocab;
    ModelParams params;
};

Model init_model(const ModelConfig& cfg, const LabelSet& labels, const SubwordVocab& vocab);

// Checkpoint file: text header "#mre-ckpt v1" followed by key=value config
// lines plus labels/vocab as JSON arrays, then "#tensors <count>" and for
// each tensor a "name rows cols" line followed by rows*cols little-endian
// real64 values. Canonical tensor order is ModelParams::for_each order;
// round-trips are bit-exact.
void write_checkpoint(const std::string& path, const Model& model);
Model read_checkpoint(const std::string& path);

inline constexpr const char* kCheckpointHeader = "#mre-ckpt v1";

template <typename Self, typename F>
void ModelParams::for_each_impl(Self& self, const ModelConfig& cfg, F&& f) {
    f("tok_emb", self.tok_emb);
    f("pos_emb", self.pos_emb);
    f("emb_ln_g", self.emb_ln_g);
    f("emb_ln_b", self.emb_ln_b);
    for (size_t i = 0; i < self.layers.size(); ++i) {
        auto& layer = self.layers[i];
        const std::string p = "layer" + std::to_string(i) + ".";
        f(p + "wq", layer.wq);
        f(p + "wk", layer.wk);
        f(p + "wv", layer.wv);
        f(p + "wo", layer.wo);
        f(p + "ln1_g", layer.ln1_g);
        f(p + "ln1_b", layer.ln1_b);
        f(p + "ff_w1", layer.ff_w1);
        f(p + "ff_b1", layer.ff_b1);
        f(p + "ff_w2", layer.ff_w2);
        f(p + "ff_b2", layer.ff_b2);
        f(p + "ln2_g", layer.ln2_g);
        f(p + "ln2_b", layer.ln2_b);
        if (cfg.uses_entity_bias() && cfg.per_layer_tables) {
            f(p + "wK", layer.table.wK);
            f(p + "wV", layer.table.wV);
        }
    }
    if (cfg.uses_entity_bias() && !cfg.per_layer_tables) {
        f("bias.wK", self.shared_table.wK);
        f("bias.wV", self.shared_table.wV);
    }
    if (cfg.variant == Variant::kIndicatorInput) {
        if (cfg.pass_mode == PassMode::kOnePass) {
            f("indicator.any", self.ind_any);
        } else {
            f("indicator.subj", self.ind_subj);
            f("indicator.obj", self.ind_obj);
        }
    }
    if (cfg.variant == Variant::kPosembFinal) {
        f("posfinal.subj", self.pos_final_subj);
        f("posfinal.obj", self.pos_final_obj);
    }
    switch (cfg.head_type) {
        case HeadType::kLinear:
            f("head.linear_w", self.head_lin_w);
            f("head.linear_b", self.head_lin_b);
            break;
        case HeadType::kMlp:
            f("head.mlp_w", self.head_mlp_w);
            f("head.mlp_c", self.head_mlp_c);
            f("head.mlp_v", self.head_mlp_v);
            f("head.mlp_b", self.head_mlp_b);
            break;
        case HeadType::kBiaffine:
            f("head.biaffine_u", self.head_biaff_u);
            f("head.linear_w", self.head_lin_w);
            f("head.linear_b", self.head_lin_b);
            break;
    }
}

}  // namespace mre
