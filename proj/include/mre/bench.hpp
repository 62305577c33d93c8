#pragma once

#include "mre/eval.hpp"
#include "mre/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mre {

// Analytic floating-point operation tally, split into the encoder side and
// the pair-scoring head side. Matrix products of shape (m x k)(k x n)
// count 2mkn; norms, softmax and activations use fixed small multiples.
// One-pass encodes once regardless of the pair count; per-pair encodes
// once per pair; posemb-final shares the first L-1 layers and re-runs the
// final layer per pair.
struct FlopTally {
    std::int64_t encode_flops = 0;
    std::int64_t head_flops = 0;
    std::int64_t total() const { return encode_flops + head_flops; }
};

std::int64_t encoder_layer_flops(const ModelConfig& cfg, Index n_tokens);
std::int64_t encoder_pass_flops(const ModelConfig& cfg, Index n_tokens, Index layer_count);
std::int64_t head_flops_per_pair(const ModelConfig& cfg, Index label_count);

// `mode` applies to the entity-aware/plain execution; the posemb-final
// variant is selected through cfg.variant.
FlopTally flop_tally(const ModelConfig& cfg, Index label_count, Index n_tokens,
                     Index n_pairs, PassMode mode);

struct BenchRow {
    std::string mode;  // one-pass | per-pair | posemb-final
    double relations_per_second = 0.0;  // median over repetitions
    double wall_seconds = 0.0;          // median single-run wall time
    Index pairs = 0;
    Index inner_iterations = 1;  // auto-enlarged until the timer resolves
};

struct BenchReport {
    std::vector<BenchRow> rows;
    double train_epoch_seconds_one_pass = -1.0;
    double train_epoch_seconds_per_pair = -1.0;
    Index threads = 1;
    Index repetitions = 0;
    std::string hardware;
    std::string compiler;
};

// Inference throughput per requested mode on the corpus' gold pairs, using
// seeded entity-aware weights (posemb-final rows use the posemb variant).
// Each timed run is preceded by a warm-up pass; runs shorter than the
// timer floor enlarge an inner repetition count automatically. When
// train_epochs > 0 the report also times one training epoch in one-pass
// and per-pair modes.
BenchReport bench_throughput(const std::vector<AnnotatedParagraph>& corpus,
                             const ModelConfig& cfg, const std::vector<std::string>& modes,
                             Index repetitions, Index train_epochs = 0);

std::string format_bench(const BenchReport& report);

}  // namespace mre
