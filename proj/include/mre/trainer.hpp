#pragma once

#include "mre/model.hpp"
#include "mre/variants.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mre {

struct TrainSpec {
    Index epochs = 30;
    Index batch_size = 8;  // paragraphs per optimizer step
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 1.0;  // global L2 gradient clip; 0 disables
    std::uint64_t seed = 42;
    Index eval_every = 0;  // epochs between train-accuracy log lines; 0 = never
    Index threads = 1;     // data parallelism across batch paragraphs
};

void validate_spec(const TrainSpec& spec);

// Pointers to every tensor of a parameter set in canonical order; parallel
// calls on same-config sets line up index-by-index.
std::vector<Matrix*> tensor_list(ModelParams& params, const ModelConfig& cfg);
std::vector<std::string> tensor_names(const ModelConfig& cfg, Index label_count);

// Adam with bias-corrected first/second moments.
class AdamOptimizer {
public:
    AdamOptimizer(const ModelConfig& cfg, Index label_count, const TrainSpec& spec);

    // Applies one update in place. Returns the pre-clip global grad norm.
    double step(const ModelConfig& cfg, ModelParams& params, ModelParams& grads);

private:
    TrainSpec spec_;
    Index t_ = 0;
    ModelParams m_, v_;
};

struct LossPoint {
    Index step = 0;
    double loss = 0.0;
};

struct TrainResult {
    Model model;
    std::vector<LossPoint> loss_curve;
    bool aborted = false;  // divergence guard fired; model is the last good state
    Index steps = 0;
    double wall_seconds = 0.0;
    double final_train_accuracy = -1.0;  // filled when eval_every > 0
};

// From-scratch training on the corpus' gold pairs. Label set and vocab are
// collected from the corpus; batches are seed-shuffled per epoch; gradients
// are accumulated per paragraph and reduced in paragraph order, so the
// result is bitwise identical for any thread count.
TrainResult train(const std::vector<AnnotatedParagraph>& corpus, const ModelConfig& cfg,
                  const TrainSpec& spec, std::ostream* log = nullptr);

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    Index coordinates = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;  // one per trainable tensor
    double tolerance = 1e-4;
    bool passed = false;
};

// Compares analytic gradients against central finite differences for every
// trainable tensor of the config, on a small built-in synthetic batch.
// `corrupt_tensor` perturbs that tensor's analytic gradient first (harness
// self-test fixture).
GradCheckReport grad_check(const ModelConfig& cfg, std::uint64_t seed,
                           const std::string& corrupt_tensor = "");

std::string format_grad_check(const GradCheckReport& report);

}  // namespace mre
