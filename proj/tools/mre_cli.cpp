// mre: one-pass multiple-relation extraction toolkit.
//
// Subcommands: gen-data, train, eval, bench, grad-check, inspect-attention.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include "mre/bench.hpp"
#include "mre/encoder.hpp"
#include "mre/eval.hpp"
#include "mre/manifest.hpp"
#include "mre/synthetic.hpp"
#include "mre/trainer.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace {

using namespace mre;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Plain-text key=value configuration. Built-in defaults are overridden by
// the file, which is overridden in turn by command-line flags.
void apply_config_entry(const std::string& key, const std::string& val, ModelConfig& cfg,
                        TrainSpec& spec) {
    auto to_index = [&](const std::string& v) { return static_cast<Index>(std::stoll(v)); };
    if (key == "layers") cfg.layers = to_index(val);
    else if (key == "heads") cfg.heads = to_index(val);
    else if (key == "d_z") cfg.d_z = to_index(val);
    else if (key == "ff") cfg.ff = to_index(val);
    else if (key == "max_len") cfg.max_len = to_index(val);
    else if (key == "k") cfg.k = to_index(val);
    else if (key == "head") cfg.head_type = parse_head_type(val);
    else if (key == "variant") cfg.variant = parse_variant(val);
    else if (key == "mode") cfg.pass_mode = parse_pass_mode(val);
    else if (key == "per_layer_tables") cfg.per_layer_tables = val == "1" || val == "true";
    else if (key == "per_head_scale") cfg.per_head_scale = val == "1" || val == "true";
    else if (key == "seed") { cfg.seed = std::stoull(val); spec.seed = cfg.seed; }
    else if (key == "epochs") spec.epochs = to_index(val);
    else if (key == "batch") spec.batch_size = to_index(val);
    else if (key == "lr") spec.lr = std::stod(val);
    else if (key == "beta1") spec.beta1 = std::stod(val);
    else if (key == "beta2") spec.beta2 = std::stod(val);
    else if (key == "adam_eps") spec.adam_eps = std::stod(val);
    else if (key == "clip_norm") spec.clip_norm = std::stod(val);
    else if (key == "eval_every") spec.eval_every = to_index(val);
    else if (key == "threads") spec.threads = to_index(val);
    else throw UsageError("unknown config key '" + key + "'");
}

void load_config_file(const std::string& path, ModelConfig& cfg, TrainSpec& spec) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos) {
                throw UsageError(path + ":" + std::to_string(line_no) +
                                 ": expected key=value");
            }
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        apply_config_entry(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), cfg, spec);
    }
}

std::map<std::string, std::string> config_map(const ModelConfig& cfg, const TrainSpec& spec) {
    std::map<std::string, std::string> m;
    m["layers"] = std::to_string(cfg.layers);
    m["heads"] = std::to_string(cfg.heads);
    m["d_z"] = std::to_string(cfg.d_z);
    m["ff"] = std::to_string(cfg.ff);
    m["max_len"] = std::to_string(cfg.max_len);
    m["k"] = std::to_string(cfg.k);
    m["head"] = to_string(cfg.head_type);
    m["variant"] = to_string(cfg.variant);
    m["mode"] = to_string(cfg.pass_mode);
    m["per_layer_tables"] = cfg.per_layer_tables ? "1" : "0";
    m["per_head_scale"] = cfg.per_head_scale ? "1" : "0";
    m["seed"] = std::to_string(cfg.seed);
    m["epochs"] = std::to_string(spec.epochs);
    m["batch"] = std::to_string(spec.batch_size);
    m["lr"] = std::to_string(spec.lr);
    m["beta1"] = std::to_string(spec.beta1);
    m["beta2"] = std::to_string(spec.beta2);
    m["adam_eps"] = std::to_string(spec.adam_eps);
    m["clip_norm"] = std::to_string(spec.clip_norm);
    m["eval_every"] = std::to_string(spec.eval_every);
    m["threads"] = std::to_string(spec.threads);
    return m;
}

// Model/training flags shared by train, bench, grad-check and
// inspect-attention. Flag presence is checked after parsing so the
// defaults < config file < flags precedence holds.
struct CommonFlags {
    std::string config_path;
    Index layers = 0, heads = 0, d_z = 0, ff = 0, max_len = 0, k = 0;
    std::string head, variant, mode;
    bool per_layer_tables = false;
    std::uint64_t seed = 0;
    Index epochs = 0, batch = 0, eval_every = 0, threads = 0;
    double lr = 0, clip_norm = -1;

    CLI::Option *o_config = nullptr, *o_layers = nullptr, *o_heads = nullptr,
                *o_d_z = nullptr, *o_ff = nullptr, *o_max_len = nullptr, *o_k = nullptr,
                *o_head = nullptr, *o_variant = nullptr, *o_mode = nullptr,
                *o_plt = nullptr, *o_seed = nullptr, *o_epochs = nullptr,
                *o_batch = nullptr, *o_eval_every = nullptr, *o_threads = nullptr,
                *o_lr = nullptr, *o_clip = nullptr;

    void attach(CLI::App* cmd, bool with_train_flags) {
        o_config = cmd->add_option("--config", config_path,
                                   "key=value config file (defaults < file < flags)");
        o_layers = cmd->add_option("--layers", layers, "encoder layers");
        o_heads = cmd->add_option("--heads", heads, "attention heads");
        o_d_z = cmd->add_option("--d-z", d_z, "hidden width d_z");
        o_ff = cmd->add_option("--ff", ff, "feed-forward width");
        o_max_len = cmd->add_option("--max-len", max_len, "maximum sequence length");
        o_k = cmd->add_option("--k", k, "relative-distance clip radius");
        o_head = cmd->add_option("--head", head, "prediction head: linear, mlp, biaffine");
        o_variant = cmd->add_option("--variant", variant,
                                    std::string("model variant: ") + kVariantNames);
        o_mode = cmd->add_option("--mode", mode, "pass mode: one-pass, per-pair");
        o_plt = cmd->add_flag("--per-layer-tables", per_layer_tables,
                              "separate bias tables per layer");
        o_seed = cmd->add_option("--seed", seed, "seed (falls back to MRE_SEED, then 42)");
        if (with_train_flags) {
            o_epochs = cmd->add_option("--epochs", epochs, "training epochs");
            o_batch = cmd->add_option("--batch", batch, "batch size in paragraphs");
            o_eval_every = cmd->add_option("--eval-every", eval_every,
                                           "epochs between train-accuracy log lines");
            o_threads = cmd->add_option("--threads", threads,
                                        "data-parallel threads (deterministic reduction)");
            o_lr = cmd->add_option("--lr", lr, "learning rate");
            o_clip = cmd->add_option("--clip-norm", clip_norm, "global grad clip; 0 disables");
        }
    }

    void resolve(ModelConfig& cfg, TrainSpec& spec) const {
        if (o_config->count()) load_config_file(config_path, cfg, spec);
        if (o_layers->count()) cfg.layers = layers;
        if (o_heads->count()) cfg.heads = heads;
        if (o_d_z->count()) cfg.d_z = d_z;
        if (o_ff->count()) cfg.ff = ff;
        if (o_max_len->count()) cfg.max_len = max_len;
        if (o_k->count()) cfg.k = k;
        if (o_head->count()) cfg.head_type = parse_head_type(head);
        if (o_variant->count()) cfg.variant = parse_variant(variant);
        if (o_mode->count()) cfg.pass_mode = parse_pass_mode(mode);
        if (o_plt->count()) cfg.per_layer_tables = per_layer_tables;
        if (o_seed->count()) {
            cfg.seed = seed;
            spec.seed = seed;
        } else if (!o_config->count() || cfg.seed == ModelConfig{}.seed) {
            if (const char* env = std::getenv("MRE_SEED")) {
                cfg.seed = std::stoull(env);
                spec.seed = cfg.seed;
            }
        }
        if (o_epochs && o_epochs->count()) spec.epochs = epochs;
        if (o_batch && o_batch->count()) spec.batch_size = batch;
        if (o_eval_every && o_eval_every->count()) spec.eval_every = eval_every;
        if (o_threads && o_threads->count()) spec.threads = threads;
        if (o_lr && o_lr->count()) spec.lr = lr;
        if (o_clip && o_clip->count()) spec.clip_norm = clip_norm;
    }
};

int cmd_gen_data(const std::string& out_path, GenSpec spec, CLI::Option* seed_opt) {
    if (!seed_opt->count()) {
        if (const char* env = std::getenv("MRE_SEED")) spec.seed = std::stoull(env);
    }
    auto corpus = gen_synthetic(spec);
    write_records(corpus, out_path);
    std::cout << "wrote " << corpus.size() << " paragraphs to " << out_path << "\n";
    return 0;
}

int cmd_preprocess(const std::string& corpus_path, const std::string& out_path,
                   Index radius) {
    auto corpus = read_records(corpus_path);
    std::vector<AnnotatedParagraph> out;
    out.reserve(corpus.size());
    Index dropped = 0;
    for (const auto& p : corpus) {
        if (p.relations.empty()) {
            ++dropped;  // nothing anchors a window
            continue;
        }
        out.push_back(window_truncate(p, radius));
    }
    write_records(out, out_path);
    std::cout << "truncated " << out.size() << " paragraphs (radius " << radius << ", "
              << dropped << " without relations dropped) to " << out_path << "\n";
    return 0;
}

int cmd_train(const std::string& corpus_path, const std::string& out_path,
              const CommonFlags& flags) {
    ModelConfig cfg;
    TrainSpec spec;
    flags.resolve(cfg, spec);
    const std::string mode_err = variant_mode_error(cfg.variant, cfg.pass_mode);
    if (!mode_err.empty()) throw UsageError(mode_err);

    RunManifest manifest;
    manifest.command = "train";
    manifest.started_at = iso_timestamp_now();
    manifest.seed = cfg.seed;
    manifest.inputs[corpus_path] = file_hash_hex(corpus_path);

    auto corpus = read_records(corpus_path);
    TrainResult result = train(corpus, cfg, spec, &std::cout);
    write_checkpoint(out_path, result.model);

    const std::string loss_path = out_path + ".loss.txt";
    {
        std::ofstream loss_out(loss_path, std::ios::binary);
        for (const auto& point : result.loss_curve) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%lld %.9g\n",
                          static_cast<long long>(point.step), point.loss);
            loss_out << buf;
        }
    }

    manifest.config = config_map(result.model.cfg, spec);
    manifest.outputs[out_path] = file_hash_hex(out_path);
    manifest.outputs[loss_path] = file_hash_hex(loss_path);
    manifest.finished_at = iso_timestamp_now();
    write_manifest(out_path + ".manifest.json", manifest);

    std::cout << "trained " << result.steps << " steps in " << result.wall_seconds << " s"
              << (result.aborted ? " (aborted on divergence, last good checkpoint kept)" : "")
              << "; final loss "
              << (result.loss_curve.empty() ? 0.0 : result.loss_curve.back().loss) << "\n";
    std::cout << "checkpoint: " << out_path << "\n";
    return result.aborted ? 1 : 0;
}

int cmd_eval(const std::string& corpus_path, const std::string& ckpt_path,
             const std::string& mode_flag, const std::string& dump_path,
             const std::string& manifest_path, const std::string& config_path) {
    Model model = read_checkpoint(ckpt_path);

    if (!config_path.empty()) {
        // refuse to run against a conflicting configuration
        ModelConfig file_cfg;
        TrainSpec unused;
        load_config_file(config_path, file_cfg, unused);
        file_cfg.vocab_size = model.cfg.vocab_size;
        if (!(file_cfg == model.cfg)) {
            throw std::runtime_error("config file " + config_path +
                                     " does not match the checkpoint configuration");
        }
    }

    PassMode mode = model.cfg.pass_mode;
    if (!mode_flag.empty()) mode = parse_pass_mode(mode_flag);
    const std::string mode_err = variant_mode_error(model.cfg.variant, mode);
    if (!mode_err.empty()) throw UsageError(mode_err);
    if (model.cfg.variant == Variant::kIndicatorInput && mode != model.cfg.pass_mode) {
        throw UsageError("indicator-input checkpoints carry mode-specific embeddings; "
                         "evaluate in the trained mode " + to_string(model.cfg.pass_mode));
    }

    RunManifest manifest;
    manifest.command = "eval";
    manifest.started_at = iso_timestamp_now();
    manifest.seed = model.cfg.seed;
    manifest.inputs[corpus_path] = file_hash_hex(corpus_path);
    manifest.inputs[ckpt_path] = file_hash_hex(ckpt_path);

    auto corpus = read_records(corpus_path);
    EvalReport report = evaluate(corpus, model, mode);
    std::cout << format_report_table(report);
    std::cout << format_report_machine(report);
    if (!dump_path.empty()) {
        write_prediction_dump(dump_path, report, model.labels);
        manifest.outputs[dump_path] = file_hash_hex(dump_path);
    }

    manifest.config = config_map(model.cfg, TrainSpec{});
    manifest.config["eval_mode"] = to_string(mode);
    manifest.finished_at = iso_timestamp_now();
    write_manifest(manifest_path.empty() ? "eval.manifest.json" : manifest_path, manifest);
    return 0;
}

int cmd_bench(const std::string& corpus_path, const std::string& modes_csv, Index reps,
              Index train_epochs, const std::string& manifest_path,
              const CommonFlags& flags) {
    ModelConfig cfg;
    TrainSpec spec;
    flags.resolve(cfg, spec);

    std::vector<std::string> modes;
    std::stringstream ss(modes_csv);
    std::string mode;
    while (std::getline(ss, mode, ',')) {
        if (!mode.empty()) modes.push_back(mode);
    }
    if (modes.empty()) throw UsageError("bench: --modes must name at least one mode");

    RunManifest manifest;
    manifest.command = "bench";
    manifest.started_at = iso_timestamp_now();
    manifest.seed = cfg.seed;
    manifest.inputs[corpus_path] = file_hash_hex(corpus_path);

    auto corpus = read_records(corpus_path);
    BenchReport report = bench_throughput(corpus, cfg, modes, reps, train_epochs);
    std::cout << format_bench(report);

    // analytic FLOP tallies for the benchmark shape
    Index max_tokens = 0, max_pairs = 0;
    for (const auto& p : corpus) {
        max_tokens = std::max(max_tokens, static_cast<Index>(p.tokens.size()));
        max_pairs = std::max(max_pairs, static_cast<Index>(p.relations.size()));
    }
    const LabelSet labels = LabelSet::collect(corpus);
    ModelConfig fcfg = cfg;
    fcfg.vocab_size = std::max<Index>(fcfg.vocab_size, 1);
    for (const auto& mode_name : modes) {
        FlopTally tally;
        if (mode_name == "posemb-final") {
            ModelConfig pcfg = fcfg;
            pcfg.variant = Variant::kPosembFinal;
            pcfg.pass_mode = PassMode::kPerPair;
            tally = flop_tally(pcfg, labels.size(), max_tokens, max_pairs, PassMode::kPerPair);
        } else {
            ModelConfig ecfg = fcfg;
            ecfg.variant = Variant::kEntityAware;
            tally = flop_tally(ecfg, labels.size(), max_tokens, max_pairs,
                               parse_pass_mode(mode_name));
        }
        std::cout << "flops," << mode_name << ",encode=" << tally.encode_flops
                  << ",head=" << tally.head_flops << " (N=" << max_tokens
                  << ", pairs=" << max_pairs << ")\n";
    }

    manifest.config = config_map(cfg, spec);
    manifest.config["modes"] = modes_csv;
    manifest.config["repetitions"] = std::to_string(reps);
    manifest.config["threads"] = std::to_string(report.threads);
    manifest.config["hardware"] = report.hardware;
    manifest.config["compiler"] = report.compiler;
    manifest.finished_at = iso_timestamp_now();
    write_manifest(manifest_path.empty() ? "bench.manifest.json" : manifest_path, manifest);
    return 0;
}

int cmd_grad_check(const CommonFlags& flags) {
    ModelConfig cfg;
    TrainSpec spec;
    flags.resolve(cfg, spec);
    GradCheckReport report = grad_check(cfg, cfg.seed);
    std::cout << format_grad_check(report);
    return report.passed ? 0 : 1;
}

int cmd_inspect_attention(const std::string& corpus_path, Index index,
                          const std::string& ckpt_path, const std::string& out_path,
                          const CommonFlags& flags) {
    ModelConfig cfg;
    TrainSpec spec;
    if (!ckpt_path.empty()) {
        cfg = read_checkpoint(ckpt_path).cfg;
    }
    flags.resolve(cfg, spec);

    auto corpus = read_records(corpus_path);
    if (index < 0 || index >= static_cast<Index>(corpus.size())) {
        throw UsageError("inspect-attention: --index out of range (corpus has " +
                         std::to_string(corpus.size()) + " paragraphs)");
    }
    const AnnotatedParagraph& p = corpus[static_cast<size_t>(index)];
    const Index n = static_cast<Index>(p.tokens.size());
    EntityMask mask = make_entity_mask(n, p.mentions);
    BiasGrid grid = build_bias_tensors(mask, n, cfg.k);

    std::ostringstream out;
    for (Index layer = 0; layer < cfg.layers; ++layer) {
        for (Index h = 0; h < cfg.heads; ++h) {
            for (Index i = 0; i < n; ++i) {
                out << render_bias_row(grid, static_cast<int>(layer), static_cast<int>(h), i)
                    << "\n";
            }
        }
    }
    if (out_path.empty()) {
        std::cout << out.str();
    } else {
        std::ofstream file(out_path, std::ios::binary);
        if (!file) throw std::runtime_error("cannot write " + out_path);
        file << out.str();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"one-pass multiple-relation extraction toolkit"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic annotated corpus");
    std::string gen_out;
    GenSpec gen_spec;
    gen->add_option("--out", gen_out, "output corpus file")->required();
    gen->add_option("--paragraphs", gen_spec.paragraphs, "paragraph count");
    gen->add_option("--mentions", gen_spec.mentions, "mentions per paragraph");
    gen->add_option("--labels", gen_spec.labels, "label count including NA");
    gen->add_option("--pairs", gen_spec.pairs, "gold pairs per paragraph (0: mentions-1)");
    gen->add_option("--min-tokens", gen_spec.min_tokens, "minimum subword count");
    gen->add_option("--max-tokens", gen_spec.max_tokens, "maximum subword count");
    gen->add_option("--label-clip", gen_spec.label_clip, "distance clip in the label rule");
    auto* gen_seed = gen->add_option("--seed", gen_spec.seed, "generation seed");

    // preprocess
    auto* prep = app.add_subcommand("preprocess",
                                    "window-truncate paragraphs around their relations");
    std::string prep_in, prep_out;
    Index prep_radius = 5;
    prep->add_option("--corpus", prep_in, "input corpus file")->required();
    prep->add_option("--out", prep_out, "output corpus file")->required();
    prep->add_option("--radius", prep_radius, "tokens kept on each side of a relation");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model on a corpus");
    std::string train_corpus, train_out;
    train_cmd->add_option("--corpus", train_corpus, "corpus file")->required();
    train_cmd->add_option("--out", train_out, "output checkpoint")->required();
    CommonFlags train_flags;
    train_flags.attach(train_cmd, true);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
    std::string eval_corpus, eval_ckpt, eval_mode, eval_dump, eval_manifest, eval_config;
    eval_cmd->add_option("--corpus", eval_corpus, "corpus file")->required();
    eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    eval_cmd->add_option("--mode", eval_mode, "override pass mode: one-pass, per-pair");
    eval_cmd->add_option("--dump", eval_dump, "write per-pair prediction dump");
    eval_cmd->add_option("--manifest", eval_manifest, "manifest path (default eval.manifest.json)");
    eval_cmd->add_option("--config", eval_config, "config file to cross-check the checkpoint");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "one-pass vs per-pair throughput benchmark");
    std::string bench_corpus, bench_modes = "one-pass,per-pair,posemb-final", bench_manifest;
    Index bench_reps = 5, bench_train_epochs = 0;
    bench_cmd->add_option("--corpus", bench_corpus, "corpus file")->required();
    bench_cmd->add_option("--modes", bench_modes, "comma list: one-pass, per-pair, posemb-final");
    bench_cmd->add_option("--reps", bench_reps, "timing repetitions (median)");
    bench_cmd->add_option("--train-epochs", bench_train_epochs,
                          "also time this many training epochs per mode");
    bench_cmd->add_option("--manifest", bench_manifest, "manifest path (default bench.manifest.json)");
    CommonFlags bench_flags;
    bench_flags.attach(bench_cmd, false);

    // grad-check
    auto* grad_cmd = app.add_subcommand("grad-check",
                                        "verify analytic gradients against finite differences");
    CommonFlags grad_flags;
    grad_flags.attach(grad_cmd, false);

    // inspect-attention
    auto* inspect_cmd = app.add_subcommand("inspect-attention",
                                           "dump the entity bias grid pattern");
    std::string ins_corpus, ins_ckpt, ins_out;
    Index ins_index = 0;
    inspect_cmd->add_option("--corpus", ins_corpus, "corpus file")->required();
    inspect_cmd->add_option("--index", ins_index, "paragraph index");
    inspect_cmd->add_option("--checkpoint", ins_ckpt, "read layers/heads/k from a checkpoint");
    inspect_cmd->add_option("--out", ins_out, "write the grid to a file instead of stdout");
    CommonFlags inspect_flags;
    inspect_flags.attach(inspect_cmd, false);

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen_data(gen_out, gen_spec, gen_seed);
        if (prep->parsed()) return cmd_preprocess(prep_in, prep_out, prep_radius);
        if (train_cmd->parsed()) return cmd_train(train_corpus, train_out, train_flags);
        if (eval_cmd->parsed()) {
            return cmd_eval(eval_corpus, eval_ckpt, eval_mode, eval_dump, eval_manifest,
                            eval_config);
        }
        if (bench_cmd->parsed()) {
            return cmd_bench(bench_corpus, bench_modes, bench_reps, bench_train_epochs,
                             bench_manifest, bench_flags);
        }
        if (grad_cmd->parsed()) return cmd_grad_check(grad_flags);
        if (inspect_cmd->parsed()) {
            return cmd_inspect_attention(ins_corpus, ins_index, ins_ckpt, ins_out,
                                         inspect_flags);
        }
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, exit 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
