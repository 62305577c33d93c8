#include "mre/bench.hpp"

#include "mre/trainer.hpp"
#include "mre/variants.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

namespace mre {

namespace {
std::int64_t mm(Index m, Index k, Index n) {
    return 2ll * static_cast<std::int64_t>(m) * k * n;
}
}  // namespace

std::int64_t encoder_layer_flops(const ModelConfig& cfg, Index n) {
    const Index dz = cfg.d_z;
    std::int64_t flops = 0;
    flops += 4 * mm(n, dz, dz);          // Q, K, V, output projections
    flops += 2 * mm(n, dz, n);           // logits and probs-times-values over all heads
    flops += 5ll * n * n * cfg.heads;    // softmax (max, sub, exp, sum, div)
    if (cfg.uses_entity_bias()) {
        const Index rows = 2 * cfg.k + 1;
        // key/value bias projections plus per-cell gather and bucket sums
        flops += 2 * cfg.heads * mm(n, cfg.d_head(), rows);
        flops += 4ll * n * n * cfg.heads;
    }
    flops += 2 * mm(n, dz, cfg.ff);      // feed-forward in and out
    flops += 8ll * n * cfg.ff;           // gelu
    flops += 2ll * 8 * n * dz;           // two layer norms
    flops += 2ll * n * dz;               // residual adds
    return flops;
}

std::int64_t encoder_pass_flops(const ModelConfig& cfg, Index n, Index layer_count) {
    std::int64_t flops = 2ll * n * cfg.d_z + 8ll * n * cfg.d_z;  // embedding add + norm
    flops += layer_count * encoder_layer_flops(cfg, n);
    return flops;
}

std::int64_t head_flops_per_pair(const ModelConfig& cfg, Index label_count) {
    const Index rep = head_input_dim(cfg);
    std::int64_t flops = 0;
    switch (cfg.head_type) {
        case HeadType::kLinear: flops = mm(1, rep, label_count); break;
        case HeadType::kMlp:
            flops = mm(1, rep, cfg.d_z) + 8ll * cfg.d_z + mm(1, cfg.d_z, label_count);
            break;
        case HeadType::kBiaffine:
            flops = mm(1, rep, label_count) +
                    label_count * (mm(1, cfg.d_z, cfg.d_z) + mm(1, cfg.d_z, 1));
            break;
    }
    return flops + 5ll * label_count;  // softmax
}

FlopTally flop_tally(const ModelConfig& cfg, Index label_count, Index n_tokens,
                     Index n_pairs, PassMode mode) {
    FlopTally t;
    t.head_flops = n_pairs * head_flops_per_pair(cfg, label_count);
    if (cfg.variant == Variant::kPosembFinal) {
        // shared prefix once, injection + final layer per pair
        t.encode_flops = encoder_pass_flops(cfg, n_tokens, cfg.layers - 1) +
                         n_pairs * (2ll * n_tokens * cfg.d_z +
                                    encoder_layer_flops(cfg, n_tokens));
    } else if (mode == PassMode::kOnePass) {
        t.encode_flops = encoder_pass_flops(cfg, n_tokens, cfg.layers);
    } else {
        t.encode_flops = n_pairs * encoder_pass_flops(cfg, n_tokens, cfg.layers);
    }
    return t;
}

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string cpu_model() {
    std::ifstream in("/proc/cpuinfo");
    std::string line, name, vendor;
    int cores = 0;
    auto value = [](const std::string& l) {
        const auto colon = l.find(':');
        return colon == std::string::npos ? std::string() : l.substr(colon + 2);
    };
    while (std::getline(in, line)) {
        if (line.rfind("processor", 0) == 0) ++cores;
        if (line.rfind("model name", 0) == 0 && name.empty()) name = value(line);
        if (line.rfind("vendor_id", 0) == 0 && vendor.empty()) vendor = value(line);
    }
    if (name.empty() || name == "unknown") name = vendor.empty() ? "unknown cpu" : vendor;
    return name + ", " + std::to_string(cores) + " logical cores";
}

std::string compiler_id() {
#if defined(__clang__)
    return "clang " __clang_version__;
#elif defined(__GNUC__)
    return "gcc " + std::to_string(__GNUC__) + "." + std::to_string(__GNUC_MINOR__);
#else
    return "unknown compiler";
#endif
}

}  // namespace

BenchReport bench_throughput(const std::vector<AnnotatedParagraph>& corpus,
                             const ModelConfig& cfg_in, const std::vector<std::string>& modes,
                             Index repetitions, Index train_epochs) {
    require(!corpus.empty(), "bench: empty corpus");
    require(repetitions >= 1, "bench: repetitions must be >= 1");
    const LabelSet labels = LabelSet::collect(corpus);
    const SubwordVocab vocab = SubwordVocab::collect(corpus);

    ModelConfig base = cfg_in;
    base.variant = Variant::kEntityAware;
    base.pass_mode = PassMode::kOnePass;
    Model entity = init_model(base, labels, vocab);

    ModelConfig posemb_cfg = base;
    posemb_cfg.variant = Variant::kPosembFinal;
    posemb_cfg.pass_mode = PassMode::kPerPair;
    Model posemb = init_model(posemb_cfg, labels, vocab);

    Index total_pairs = 0;
    for (const auto& p : corpus) total_pairs += static_cast<Index>(p.relations.size());
    require(total_pairs > 0, "bench: corpus has no gold pairs");

    BenchReport report;
    report.repetitions = repetitions;
    report.threads = 1;  // inference timing is single-threaded
    report.hardware = cpu_model();
    report.compiler = compiler_id();

    for (const std::string& mode_name : modes) {
        const Model* model = &entity;
        PassMode mode = PassMode::kOnePass;
        if (mode_name == "one-pass") {
            mode = PassMode::kOnePass;
        } else if (mode_name == "per-pair") {
            mode = PassMode::kPerPair;
        } else if (mode_name == "posemb-final") {
            model = &posemb;
            mode = PassMode::kPerPair;
        } else {
            throw std::invalid_argument("bench: unknown mode '" + mode_name +
                                        "' (one-pass, per-pair, posemb-final)");
        }

        auto run_once = [&]() {
            for (const auto& p : corpus) {
                if (p.relations.empty()) continue;
                auto pairs = enumerate_pairs(p, PairMode::kGoldOnly);
                volatile double sink = predict_paragraph(p, model->vocab, model->cfg,
                                                         model->params, pairs, mode)[0]
                                           .probs[0];
                (void)sink;
            }
        };

        run_once();  // warm-up, excluded from timing

        // enlarge the inner loop until one repetition clears the timer floor
        Index inner = 1;
        constexpr double kTimerFloor = 0.05;
        for (;;) {
            const auto t0 = std::chrono::steady_clock::now();
            for (Index i = 0; i < inner; ++i) run_once();
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (secs >= kTimerFloor || inner > (1 << 20)) break;
            inner *= 2;
        }

        std::vector<double> times;
        for (Index r = 0; r < repetitions; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            for (Index i = 0; i < inner; ++i) run_once();
            times.push_back(
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        BenchRow row;
        row.mode = mode_name;
        row.pairs = total_pairs;
        row.inner_iterations = inner;
        row.wall_seconds = median(times) / static_cast<double>(inner);
        row.relations_per_second = static_cast<double>(total_pairs) / row.wall_seconds;
        report.rows.push_back(row);
    }

    if (train_epochs > 0) {
        TrainSpec spec;
        spec.epochs = train_epochs;
        spec.seed = cfg_in.seed;
        ModelConfig one = base;
        one.pass_mode = PassMode::kOnePass;
        report.train_epoch_seconds_one_pass =
            train(corpus, one, spec).wall_seconds / static_cast<double>(train_epochs);
        ModelConfig per = base;
        per.pass_mode = PassMode::kPerPair;
        report.train_epoch_seconds_per_pair =
            train(corpus, per, spec).wall_seconds / static_cast<double>(train_epochs);
    }
    return report;
}

std::string format_bench(const BenchReport& report) {
    std::ostringstream out;
    out << "threads: " << report.threads << "  repetitions: " << report.repetitions << "\n";
    out << "hardware: " << report.hardware << "\n";
    out << "compiler: " << report.compiler << "\n";
    out << "  mode          relations/s   wall-s/run   pairs  inner-iters\n";
    for (const auto& row : report.rows) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "  %-12s %12.2f %12.6f %7lld %12lld\n",
                      row.mode.c_str(), row.relations_per_second, row.wall_seconds,
                      static_cast<long long>(row.pairs),
                      static_cast<long long>(row.inner_iterations));
        out << buf;
    }
    if (report.train_epoch_seconds_one_pass >= 0.0) {
        out << "train epoch wall seconds: one-pass " << report.train_epoch_seconds_one_pass
            << ", per-pair " << report.train_epoch_seconds_per_pair << "\n";
    }
    return out.str();
}

}  // namespace mre
