#include "mre/model.hpp"

#include "mre/rng.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mre {

using nlohmann::json;

std::string to_string(HeadType t) {
    switch (t) {
        case HeadType::kLinear: return "linear";
        case HeadType::kMlp: return "mlp";
        case HeadType::kBiaffine: return "biaffine";
    }
    return "?";
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::kEntityAware: return "entity-aware";
        case Variant::kPlainSp: return "plain-sp";
        case Variant::kIndicatorInput: return "indicator-input";
        case Variant::kPosembFinal: return "posemb-final";
        case Variant::kSentenceVector: return "sentence-vector";
    }
    return "?";
}

std::string to_string(PassMode m) {
    return m == PassMode::kOnePass ? "one-pass" : "per-pair";
}

HeadType parse_head_type(const std::string& s) {
    if (s == "linear") return HeadType::kLinear;
    if (s == "mlp") return HeadType::kMlp;
    if (s == "biaffine") return HeadType::kBiaffine;
    throw std::invalid_argument("unknown head type '" + s + "' (linear, mlp, biaffine)");
}

Variant parse_variant(const std::string& s) {
    if (s == "entity-aware") return Variant::kEntityAware;
    if (s == "plain-sp") return Variant::kPlainSp;
    if (s == "indicator-input") return Variant::kIndicatorInput;
    if (s == "posemb-final") return Variant::kPosembFinal;
    if (s == "sentence-vector") return Variant::kSentenceVector;
    throw std::invalid_argument("unknown variant '" + s + "' (" + kVariantNames + ")");
}

PassMode parse_pass_mode(const std::string& s) {
    if (s == "one-pass") return PassMode::kOnePass;
    if (s == "per-pair") return PassMode::kPerPair;
    throw std::invalid_argument("unknown pass mode '" + s + "' (one-pass, per-pair)");
}

void validate_config(const ModelConfig& cfg) {
    require(cfg.layers >= 0, "config: layers must be >= 0");
    require(cfg.heads >= 1, "config: heads must be >= 1");
    require(cfg.d_z >= 1 && cfg.d_z % cfg.heads == 0, "config: heads must divide d_z");
    require(cfg.ff >= 1, "config: ff width must be >= 1");
    require(cfg.k >= 1, "config: clip radius k must be >= 1");
    require(cfg.max_len >= 1, "config: max_len must be >= 1");
    require(cfg.vocab_size >= 1, "config: vocab_size must be >= 1");
    const std::string err = variant_mode_error(cfg.variant, cfg.pass_mode);
    require(err.empty(), err);
}

std::string variant_mode_error(Variant v, PassMode m) {
    if (v == Variant::kPosembFinal && m == PassMode::kOnePass) {
        return "variant posemb-final re-runs the final layer per pair; use --mode per-pair";
    }
    if (v == Variant::kSentenceVector && m == PassMode::kPerPair) {
        return "variant sentence-vector is pair-blind; use --mode one-pass";
    }
    return "";
}

Index head_input_dim(const ModelConfig& cfg) {
    return cfg.variant == Variant::kSentenceVector ? cfg.d_z : 2 * cfg.d_z;
}

namespace {

void fill_normal(Matrix& m, std::uint64_t seed, const std::string& name, double stddev) {
    RngState rng = derive_stream(seed, "param:" + name);
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = rng.next_normal() * stddev;
    }
}

void fill_xavier(Matrix& m, std::uint64_t seed, const std::string& name) {
    fill_normal(m, seed, name,
                std::sqrt(2.0 / static_cast<double>(m.rows() + m.cols())));
}

}  // namespace

ModelParams build_params(const ModelConfig& cfg, Index label_count, ParamInit init) {
    validate_config(cfg);
    require(label_count >= 2, "build_params: need at least 2 labels (NA plus one relation)");

    ModelParams p;
    const Index dz = cfg.d_z;
    const Index dh = cfg.d_head();
    const Index bias_rows = 2 * cfg.k + 1;
    const Index rep = head_input_dim(cfg);

    p.tok_emb = Matrix::Zero(cfg.vocab_size, dz);
    p.pos_emb = Matrix::Zero(cfg.max_len, dz);
    p.emb_ln_g = Matrix::Zero(1, dz);
    p.emb_ln_b = Matrix::Zero(1, dz);
    p.layers.resize(static_cast<size_t>(cfg.layers));
    for (auto& layer : p.layers) {
        layer.wq = Matrix::Zero(dz, dz);
        layer.wk = Matrix::Zero(dz, dz);
        layer.wv = Matrix::Zero(dz, dz);
        layer.wo = Matrix::Zero(dz, dz);
        layer.ln1_g = Matrix::Zero(1, dz);
        layer.ln1_b = Matrix::Zero(1, dz);
        layer.ff_w1 = Matrix::Zero(dz, cfg.ff);
        layer.ff_b1 = Matrix::Zero(1, cfg.ff);
        layer.ff_w2 = Matrix::Zero(cfg.ff, dz);
        layer.ff_b2 = Matrix::Zero(1, dz);
        layer.ln2_g = Matrix::Zero(1, dz);
        layer.ln2_b = Matrix::Zero(1, dz);
        if (cfg.uses_entity_bias() && cfg.per_layer_tables) {
            layer.table.k = cfg.k;
            layer.table.wK = Matrix::Zero(bias_rows, dh);
            layer.table.wV = Matrix::Zero(bias_rows, dh);
        }
    }
    if (cfg.uses_entity_bias() && !cfg.per_layer_tables) {
        p.shared_table.k = cfg.k;
        p.shared_table.wK = Matrix::Zero(bias_rows, dh);
        p.shared_table.wV = Matrix::Zero(bias_rows, dh);
    }
    if (cfg.variant == Variant::kIndicatorInput) {
        if (cfg.pass_mode == PassMode::kOnePass) {
            p.ind_any = Matrix::Zero(1, dz);
        } else {
            p.ind_subj = Matrix::Zero(1, dz);
            p.ind_obj = Matrix::Zero(1, dz);
        }
    }
    if (cfg.variant == Variant::kPosembFinal) {
        p.pos_final_subj = Matrix::Zero(bias_rows, dz);
        p.pos_final_obj = Matrix::Zero(bias_rows, dz);
    }
    switch (cfg.head_type) {
        case HeadType::kLinear:
            p.head_lin_w = Matrix::Zero(rep, label_count);
            p.head_lin_b = Matrix::Zero(1, label_count);
            break;
        case HeadType::kMlp:
            p.head_mlp_w = Matrix::Zero(rep, dz);
            p.head_mlp_c = Matrix::Zero(1, dz);
            p.head_mlp_v = Matrix::Zero(dz, label_count);
            p.head_mlp_b = Matrix::Zero(1, label_count);
            break;
        case HeadType::kBiaffine:
            p.head_biaff_u = Matrix::Zero(label_count * dz, dz);
            p.head_lin_w = Matrix::Zero(rep, label_count);
            p.head_lin_b = Matrix::Zero(1, label_count);
            break;
    }

    if (init == ParamInit::kSeeded) {
        const std::uint64_t seed = cfg.seed;
        p.emb_ln_g.setOnes();
        fill_normal(p.tok_emb, seed, "tok_emb", 0.1);
        fill_normal(p.pos_emb, seed, "pos_emb", 0.1);
        for (size_t i = 0; i < p.layers.size(); ++i) {
            auto& layer = p.layers[i];
            const std::string pre = "layer" + std::to_string(i) + ".";
            fill_xavier(layer.wq, seed, pre + "wq");
            fill_xavier(layer.wk, seed, pre + "wk");
            fill_xavier(layer.wv, seed, pre + "wv");
            fill_xavier(layer.wo, seed, pre + "wo");
            layer.ln1_g.setOnes();
            layer.ln2_g.setOnes();
            fill_xavier(layer.ff_w1, seed, pre + "ff_w1");
            fill_xavier(layer.ff_w2, seed, pre + "ff_w2");
            if (cfg.uses_entity_bias() && cfg.per_layer_tables) {
                fill_normal(layer.table.wK, seed, pre + "wK", 0.02);
                fill_normal(layer.table.wV, seed, pre + "wV", 0.02);
            }
        }
        if (cfg.uses_entity_bias() && !cfg.per_layer_tables) {
            fill_normal(p.shared_table.wK, seed, "bias.wK", 0.02);
            fill_normal(p.shared_table.wV, seed, "bias.wV", 0.02);
        }
        if (cfg.variant == Variant::kIndicatorInput) {
            if (cfg.pass_mode == PassMode::kOnePass) {
                fill_normal(p.ind_any, seed, "indicator.any", 0.1);
            } else {
                fill_normal(p.ind_subj, seed, "indicator.subj", 0.1);
                fill_normal(p.ind_obj, seed, "indicator.obj", 0.1);
            }
        }
        if (cfg.variant == Variant::kPosembFinal) {
            fill_normal(p.pos_final_subj, seed, "posfinal.subj", 0.1);
            fill_normal(p.pos_final_obj, seed, "posfinal.obj", 0.1);
        }
        // heads: linear stays zero (uniform start); biaffine's bilinear
        // term stays zero so it starts exactly at the linear head
        if (cfg.head_type == HeadType::kMlp) {
            fill_xavier(p.head_mlp_w, seed, "head.mlp_w");
            fill_xavier(p.head_mlp_v, seed, "head.mlp_v");
        }
    }
    return p;
}

Model init_model(const ModelConfig& cfg, const LabelSet& labels, const SubwordVocab& vocab) {
    ModelConfig resolved = cfg;
    resolved.vocab_size = vocab.size();
    Model m{resolved, labels, vocab,
            build_params(resolved, labels.size(), ParamInit::kSeeded)};
    return m;
}

namespace {

void write_doubles_le(std::ostream& out, const Matrix& m) {
    static_assert(sizeof(double) == 8);
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(m.data()),
                  static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m.size())));
    } else {
        for (Index i = 0; i < m.size(); ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, m.data() + i, 8);
            char buf[8];
            for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
            out.write(buf, 8);
        }
    }
}

void read_doubles_le(std::istream& in, Matrix& m) {
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m.size())));
    } else {
        for (Index i = 0; i < m.size(); ++i) {
            unsigned char buf[8];
            in.read(reinterpret_cast<char*>(buf), 8);
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
            std::memcpy(m.data() + i, &bits, 8);
        }
    }
    if (!in) throw std::runtime_error("checkpoint: truncated tensor data");
}

}  // namespace

void write_checkpoint(const std::string& path, const Model& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    const ModelConfig& cfg = model.cfg;
    out << kCheckpointHeader << "\n";
    out << "layers=" << cfg.layers << "\n";
    out << "heads=" << cfg.heads << "\n";
    out << "d_z=" << cfg.d_z << "\n";
    out << "ff=" << cfg.ff << "\n";
    out << "vocab_size=" << cfg.vocab_size << "\n";
    out << "max_len=" << cfg.max_len << "\n";
    out << "k=" << cfg.k << "\n";
    out << "head=" << to_string(cfg.head_type) << "\n";
    out << "variant=" << to_string(cfg.variant) << "\n";
    out << "mode=" << to_string(cfg.pass_mode) << "\n";
    out << "per_layer_tables=" << (cfg.per_layer_tables ? 1 : 0) << "\n";
    out << "per_head_scale=" << (cfg.per_head_scale ? 1 : 0) << "\n";
    out << "norm=post\n";  // attention -> add -> norm ordering, fixed
    out << "seed=" << cfg.seed << "\n";
    out << "labels=" << json(model.labels.names()).dump() << "\n";
    out << "vocab=" << json(model.vocab.pieces()).dump() << "\n";

    size_t count = 0;
    model.params.for_each(cfg, [&](const std::string&, const Matrix&) { ++count; });
    out << "#tensors " << count << "\n";
    model.params.for_each(cfg, [&](const std::string& name, const Matrix& m) {
        out << name << " " << m.rows() << " " << m.cols() << "\n";
        write_doubles_le(out, m);
    });
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Model read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointHeader) {
        throw std::runtime_error("checkpoint: bad header in " + path);
    }

    ModelConfig cfg;
    std::vector<std::string> label_names, vocab_pieces;
    size_t tensor_count = 0;
    while (std::getline(in, line)) {
        if (line.rfind("#tensors ", 0) == 0) {
            tensor_count = std::stoul(line.substr(9));
            break;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("checkpoint: malformed header line '" + line + "'");
        }
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "layers") cfg.layers = std::stol(val);
        else if (key == "heads") cfg.heads = std::stol(val);
        else if (key == "d_z") cfg.d_z = std::stol(val);
        else if (key == "ff") cfg.ff = std::stol(val);
        else if (key == "vocab_size") cfg.vocab_size = std::stol(val);
        else if (key == "max_len") cfg.max_len = std::stol(val);
        else if (key == "k") cfg.k = std::stol(val);
        else if (key == "head") cfg.head_type = parse_head_type(val);
        else if (key == "variant") cfg.variant = parse_variant(val);
        else if (key == "mode") cfg.pass_mode = parse_pass_mode(val);
        else if (key == "per_layer_tables") cfg.per_layer_tables = val == "1";
        else if (key == "per_head_scale") cfg.per_head_scale = val == "1";
        else if (key == "norm") require(val == "post", "checkpoint: unsupported norm order");
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "labels") label_names = json::parse(val).get<std::vector<std::string>>();
        else if (key == "vocab") vocab_pieces = json::parse(val).get<std::vector<std::string>>();
        else throw std::runtime_error("checkpoint: unknown header key '" + key + "'");
    }
    require(!label_names.empty(), "checkpoint: missing labels");
    require(!vocab_pieces.empty(), "checkpoint: missing vocab");

    Model model{cfg, LabelSet::from_names(label_names),
                SubwordVocab::from_pieces(vocab_pieces),
                build_params(cfg, static_cast<Index>(label_names.size()), ParamInit::kZero)};
    require(model.vocab.size() == cfg.vocab_size, "checkpoint: vocab size mismatch");

    size_t seen = 0;
    model.params.for_each(cfg, [&](const std::string& name, Matrix& m) {
        std::string header;
        if (!std::getline(in, header)) {
            throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
        }
        std::istringstream hs(header);
        std::string got_name;
        Index rows = 0, cols = 0;
        hs >> got_name >> rows >> cols;
        if (got_name != name || rows != m.rows() || cols != m.cols()) {
            throw std::runtime_error("checkpoint: expected tensor " + name + " " +
                                     shape_str(m) + ", got '" + header + "'");
        }
        read_doubles_le(in, m);
        ++seen;
    });
    if (seen != tensor_count) {
        throw std::runtime_error("checkpoint: tensor count mismatch");
    }
    return model;
}

}  // namespace mre
