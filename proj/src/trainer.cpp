#include "mre/trainer.hpp"

#include "mre/rng.hpp"
#include "mre/synthetic.hpp"
#include "mre/tensor_ops.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace mre {

void validate_spec(const TrainSpec& spec) {
    require(spec.epochs >= 1, "train spec: epochs must be >= 1");
    require(spec.batch_size >= 1, "train spec: batch size must be >= 1");
    require(spec.lr >= 0.0, "train spec: negative learning rate");
    require(spec.beta1 > 0.0 && spec.beta1 < 1.0, "train spec: beta1 must be in (0, 1)");
    require(spec.beta2 > 0.0 && spec.beta2 < 1.0, "train spec: beta2 must be in (0, 1)");
    require(spec.adam_eps > 0.0, "train spec: adam eps must be > 0");
    require(spec.clip_norm >= 0.0, "train spec: negative clip norm");
    require(spec.threads >= 1, "train spec: threads must be >= 1");
}

std::vector<Matrix*> tensor_list(ModelParams& params, const ModelConfig& cfg) {
    std::vector<Matrix*> out;
    params.for_each(cfg, [&](const std::string&, Matrix& m) { out.push_back(&m); });
    return out;
}

std::vector<std::string> tensor_names(const ModelConfig& cfg, Index label_count) {
    ModelParams shape = build_params(cfg, label_count, ParamInit::kZero);
    std::vector<std::string> names;
    shape.for_each(cfg, [&](const std::string& n, Matrix&) { names.push_back(n); });
    return names;
}

AdamOptimizer::AdamOptimizer(const ModelConfig& cfg, Index label_count, const TrainSpec& spec)
    : spec_(spec),
      m_(build_params(cfg, label_count, ParamInit::kZero)),
      v_(build_params(cfg, label_count, ParamInit::kZero)) {}

double AdamOptimizer::step(const ModelConfig& cfg, ModelParams& params, ModelParams& grads) {
    auto p = tensor_list(params, cfg);
    auto g = tensor_list(grads, cfg);
    auto m = tensor_list(m_, cfg);
    auto v = tensor_list(v_, cfg);

    double sq_norm = 0.0;
    for (const Matrix* gm : g) sq_norm += gm->squaredNorm();
    const double norm = std::sqrt(sq_norm);
    double scale = 1.0;
    if (spec_.clip_norm > 0.0 && norm > spec_.clip_norm) scale = spec_.clip_norm / norm;

    ++t_;
    const double bc1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < p.size(); ++i) {
        Matrix grad = *g[i] * scale;
        *m[i] = spec_.beta1 * *m[i] + (1.0 - spec_.beta1) * grad;
        *v[i] = spec_.beta2 * *v[i] + (1.0 - spec_.beta2) * grad.cwiseProduct(grad);
        Matrix m_hat = *m[i] / bc1;
        Matrix v_hat = *v[i] / bc2;
        *p[i] -= (spec_.lr * m_hat.array() / (v_hat.array().sqrt() + spec_.adam_eps)).matrix();
    }
    return norm;
}

namespace {

Index paragraph_pairs(const AnnotatedParagraph& p) {
    return static_cast<Index>(p.relations.size());
}

// Gradients for a batch: one buffer per paragraph, reduced in paragraph
// order so the sum is independent of the thread partition.
struct BatchResult {
    double loss_sum = 0.0;
    Index pairs = 0;
    Index correct = 0;
    bool failed = false;  // a forward/backward pass hit non-finite values
    std::string error;
};

BatchResult batch_loss_and_grad(const std::vector<AnnotatedParagraph>& corpus,
                                const std::vector<Index>& batch, const Model& model,
                                Index threads, ModelParams& grads) {
    Index total_pairs = 0;
    for (Index idx : batch) {
        total_pairs += paragraph_pairs(corpus[static_cast<size_t>(idx)]);
    }
    BatchResult result;
    result.pairs = total_pairs;
    if (total_pairs == 0) return result;
    const double pair_weight = 1.0 / static_cast<double>(total_pairs);

    std::vector<ModelParams> slot(batch.size());
    std::vector<ParagraphLoss> losses(batch.size());
    std::vector<std::string> errors(batch.size());
    auto work = [&](size_t begin, size_t end) {
        for (size_t b = begin; b < end; ++b) {
            try {
                slot[b] = build_params(model.cfg, model.labels.size(), ParamInit::kZero);
                losses[b] = paragraph_loss_and_grad(corpus[static_cast<size_t>(batch[b])],
                                                    model.vocab, model.labels, model.cfg,
                                                    model.params, pair_weight, slot[b]);
            } catch (const std::exception& e) {
                errors[b] = e.what();
            }
        }
    };
    const size_t n = batch.size();
    const size_t nthreads = std::min<size_t>(static_cast<size_t>(threads), n);
    if (nthreads <= 1) {
        work(0, n);
    } else {
        std::vector<std::thread> pool;
        const size_t chunk = (n + nthreads - 1) / nthreads;
        for (size_t t = 0; t < nthreads; ++t) {
            const size_t begin = t * chunk;
            const size_t end = std::min(n, begin + chunk);
            if (begin < end) pool.emplace_back(work, begin, end);
        }
        for (auto& th : pool) th.join();
    }

    for (const auto& err : errors) {
        if (!err.empty()) {
            result.failed = true;
            result.error = err;
            return result;
        }
    }
    auto acc = tensor_list(grads, model.cfg);
    for (size_t b = 0; b < slot.size(); ++b) {
        auto part = tensor_list(slot[b], model.cfg);
        for (size_t i = 0; i < acc.size(); ++i) *acc[i] += *part[i];
        result.loss_sum += losses[b].loss_sum;
        result.correct += losses[b].correct;
    }
    return result;
}

double train_accuracy(const std::vector<AnnotatedParagraph>& corpus, const Model& model) {
    Index pairs = 0, correct = 0;
    for (const auto& p : corpus) {
        if (p.relations.empty()) continue;
        auto gold = enumerate_pairs(p, PairMode::kGoldOnly);
        auto preds = predict_paragraph(p, model.vocab, model.cfg, model.params, gold,
                                       model.cfg.pass_mode);
        for (size_t q = 0; q < gold.size(); ++q) {
            // gold pairs are sorted; find the matching relation
            for (const auto& r : p.relations) {
                if (r.subj == gold[q].first && r.obj == gold[q].second) {
                    pairs += 1;
                    correct += preds[q].argmax == model.labels.id_of(r.label) ? 1 : 0;
                    break;
                }
            }
        }
    }
    return pairs == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(pairs);
}

}  // namespace

TrainResult train(const std::vector<AnnotatedParagraph>& corpus, const ModelConfig& cfg,
                  const TrainSpec& spec, std::ostream* log) {
    validate_spec(spec);
    require(!corpus.empty(), "train: empty corpus");
    const auto start = std::chrono::steady_clock::now();

    LabelSet labels = LabelSet::collect(corpus);
    require(labels.size() >= 2, "train: corpus has no relation labels");
    SubwordVocab vocab = SubwordVocab::collect(corpus);
    TrainResult result{init_model(cfg, labels, vocab), {}, false, 0, 0.0};
    Model& model = result.model;

    AdamOptimizer opt(model.cfg, labels.size(), spec);
    ModelParams grads = build_params(model.cfg, labels.size(), ParamInit::kZero);
    auto grad_tensors = tensor_list(grads, model.cfg);

    std::vector<Index> order(corpus.size());
    std::iota(order.begin(), order.end(), Index{0});

    for (Index epoch = 0; epoch < spec.epochs && !result.aborted; ++epoch) {
        RngState shuffle_rng = derive_stream(spec.seed, "epoch:" + std::to_string(epoch));
        for (size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
        }
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(spec.batch_size)) {
            std::vector<Index> batch(
                order.begin() + static_cast<std::ptrdiff_t>(at),
                order.begin() + static_cast<std::ptrdiff_t>(
                                    std::min(order.size(), at + static_cast<size_t>(spec.batch_size))));
            for (Matrix* g : grad_tensors) g->setZero();
            BatchResult br = batch_loss_and_grad(corpus, batch, model, spec.threads, grads);
            if (br.failed) {
                // divergence surfaced as a non-finite forward pass; the
                // step has not been applied, so the params stay good
                result.aborted = true;
                if (log) *log << "step " << result.steps << ": " << br.error << ", aborting\n";
                break;
            }
            if (br.pairs == 0) continue;
            const double loss = br.loss_sum / static_cast<double>(br.pairs);
            if (!std::isfinite(loss)) {
                result.aborted = true;
                if (log) *log << "step " << result.steps << ": non-finite loss, aborting\n";
                break;
            }
            const ModelParams snapshot = model.params;
            opt.step(model.cfg, model.params, grads);
            bool finite = true;
            model.params.for_each(model.cfg, [&](const std::string&, const Matrix& m) {
                finite = finite && m.allFinite();
            });
            if (!finite) {
                // the update overflowed; roll back to the last good state
                model.params = snapshot;
                result.aborted = true;
                if (log) *log << "step " << result.steps << ": non-finite update, aborting\n";
                break;
            }
            result.steps += 1;
            result.loss_curve.push_back({result.steps, loss});
        }
        if (log && spec.eval_every > 0 && (epoch + 1) % spec.eval_every == 0) {
            const double acc = train_accuracy(corpus, model);
            result.final_train_accuracy = acc;
            *log << "epoch " << (epoch + 1) << ": loss "
                 << (result.loss_curve.empty() ? 0.0 : result.loss_curve.back().loss)
                 << " train-accuracy " << acc << "\n";
        }
    }
    if (spec.eval_every > 0 && result.final_train_accuracy < 0.0) {
        result.final_train_accuracy = train_accuracy(corpus, model);
    }
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

GradCheckReport grad_check(const ModelConfig& cfg_in, std::uint64_t seed,
                           const std::string& corrupt_tensor) {
    // tiny fixed workload: two short paragraphs, N <= 16
    GenSpec gen;
    gen.paragraphs = 2;
    gen.mentions = 2;
    gen.labels = 5;
    gen.min_tokens = 10;
    gen.max_tokens = 14;
    gen.seed = seed;
    const auto corpus = gen_synthetic(gen);
    const SubwordVocab vocab = synthetic_vocab();
    const LabelSet labels = LabelSet::from_names({"rel_0", "rel_1", "rel_2", "rel_3"});

    ModelConfig cfg = cfg_in;
    cfg.vocab_size = vocab.size();
    cfg.seed = seed;
    validate_config(cfg);
    ModelParams params = build_params(cfg, labels.size(), ParamInit::kSeeded);

    Index total_pairs = 0;
    for (const auto& p : corpus) total_pairs += static_cast<Index>(p.relations.size());
    const double pair_weight = 1.0 / static_cast<double>(total_pairs);

    auto loss_fn = [&]() {
        double sum = 0.0;
        for (const auto& p : corpus) {
            sum += paragraph_loss(p, vocab, labels, cfg, params).loss_sum;
        }
        return sum / static_cast<double>(total_pairs);
    };

    ModelParams grads = build_params(cfg, labels.size(), ParamInit::kZero);
    for (const auto& p : corpus) {
        paragraph_loss_and_grad(p, vocab, labels, cfg, params, pair_weight, grads);
    }
    if (!corrupt_tensor.empty()) {
        bool found = false;
        grads.for_each(cfg, [&](const std::string& n, Matrix& m) {
            if (n == corrupt_tensor) {
                m(0, 0) += 1.0;
                found = true;
            }
        });
        require(found, "grad_check: unknown tensor '" + corrupt_tensor + "'");
    }

    GradCheckReport report;
    const double eps = 1e-5;
    auto param_tensors = tensor_list(params, cfg);
    auto grad_tensors = tensor_list(grads, cfg);
    std::vector<std::string> names;
    params.for_each(cfg, [&](const std::string& n, Matrix&) { names.push_back(n); });

    for (size_t t = 0; t < param_tensors.size(); ++t) {
        Matrix& target = *param_tensors[t];
        const Matrix& analytic = *grad_tensors[t];
        // flatten in storage order and hand the tensor to the oracle op
        Eigen::Map<Vector> view(target.data(), target.size());
        const Vector original = view;
        auto f = [&](const Vector& v) {
            view = v;
            return loss_fn();
        };
        Vector fd = finite_diff_grad(f, original, eps);
        view = original;

        Eigen::Map<const Vector> flat_analytic(analytic.data(), analytic.size());
        double worst = 0.0;
        for (Index i = 0; i < fd.size(); ++i) {
            const double a = flat_analytic[i];
            const double rel =
                std::abs(a - fd[i]) / std::max({std::abs(a), std::abs(fd[i]), 1e-6});
            worst = std::max(worst, rel);
        }
        report.entries.push_back({names[t], worst, target.size()});
    }
    report.passed = true;
    for (const auto& e : report.entries) {
        report.passed = report.passed && e.max_rel_error < report.tolerance;
    }
    return report;
}

std::string format_grad_check(const GradCheckReport& report) {
    std::ostringstream out;
    for (const auto& e : report.entries) {
        out << (e.max_rel_error < report.tolerance ? "ok   " : "FAIL ") << e.name << " ("
            << e.coordinates << " coords): max rel err " << e.max_rel_error << "\n";
    }
    out << (report.passed ? "grad-check PASSED" : "grad-check FAILED") << " at tolerance "
        << report.tolerance << "\n";
    return out.str();
}

}  // namespace mre
