#include "mre/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace mre {

double domain_average(const std::vector<double>& values) {
    require(!values.empty(), "domain_average: no values");
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

DomainScore score_pairs(const std::vector<std::pair<int, int>>& gold_pred,
                        const LabelSet& labels, const std::string& domain) {
    DomainScore s;
    s.domain = domain;
    s.per_label.assign(static_cast<size_t>(labels.size()), LabelCounts{});
    for (const auto& [gold, pred] : gold_pred) {
        s.pairs += 1;
        if (gold == pred) s.correct += 1;
        if (pred == gold) {
            if (!labels.label(pred).is_na) s.per_label[static_cast<size_t>(pred)].tp += 1;
        } else {
            if (!labels.label(pred).is_na) s.per_label[static_cast<size_t>(pred)].fp += 1;
            if (!labels.label(gold).is_na) s.per_label[static_cast<size_t>(gold)].fn += 1;
        }
    }
    Index tp = 0, fp = 0, fn = 0;
    std::vector<double> label_f1;
    for (int l = 0; l < labels.size(); ++l) {
        if (labels.label(l).is_na) continue;
        const LabelCounts& c = s.per_label[static_cast<size_t>(l)];
        tp += c.tp;
        fp += c.fp;
        fn += c.fn;
        const double p = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
        const double r = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
        label_f1.push_back(p + r > 0 ? 2 * p * r / (p + r) : 0.0);
    }
    s.accuracy = s.pairs > 0 ? static_cast<double>(s.correct) / s.pairs : 0.0;
    s.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    s.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    s.micro_f1 = s.precision + s.recall > 0
                     ? 2 * s.precision * s.recall / (s.precision + s.recall)
                     : 0.0;
    s.macro_f1 = label_f1.empty() ? 0.0 : domain_average(label_f1);
    return s;
}

EvalReport evaluate(const std::vector<AnnotatedParagraph>& corpus, const Model& model,
                    PassMode mode) {
    const std::string err = variant_mode_error(model.cfg.variant, mode);
    require(err.empty(), err);

    EvalReport report;
    report.mode = mode;
    report.confusion = MatrixT<Index>::Zero(model.labels.size(), model.labels.size());

    const auto start = std::chrono::steady_clock::now();
    for (size_t pi = 0; pi < corpus.size(); ++pi) {
        const AnnotatedParagraph& p = corpus[pi];
        if (p.relations.empty()) continue;
        auto pairs = enumerate_pairs(p, PairMode::kGoldOnly);
        auto preds = predict_paragraph(p, model.vocab, model.cfg, model.params, pairs, mode);
        for (size_t q = 0; q < pairs.size(); ++q) {
            int gold = -1;
            for (const auto& r : p.relations) {
                if (r.subj == pairs[q].first && r.obj == pairs[q].second) {
                    gold = model.labels.id_of(r.label);
                    break;
                }
            }
            require(gold >= 0, "evaluate: gold pair without relation");
            PairResult pr;
            pr.paragraph = static_cast<Index>(pi);
            pr.subj = pairs[q].first;
            pr.obj = pairs[q].second;
            pr.gold = gold;
            pr.pred = preds[q].argmax;
            pr.probs = preds[q].probs;
            report.pair_results.push_back(std::move(pr));
        }
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.total_pairs = static_cast<Index>(report.pair_results.size());
    report.relations_per_second =
        report.wall_seconds > 0 ? report.total_pairs / report.wall_seconds : 0.0;

    std::map<std::string, std::vector<std::pair<int, int>>> by_domain;
    std::vector<std::pair<int, int>> all;
    for (const auto& pr : report.pair_results) {
        report.confusion(pr.gold, pr.pred) += 1;
        const std::string& dom = corpus[static_cast<size_t>(pr.paragraph)].domain;
        by_domain[dom].push_back({pr.gold, pr.pred});
        all.push_back({pr.gold, pr.pred});
    }
    report.overall = score_pairs(all, model.labels, "all");
    std::vector<double> micro, macro, acc;
    for (const auto& [dom, pairs] : by_domain) {  // std::map: sorted by name
        report.domains.push_back(score_pairs(pairs, model.labels, dom));
        micro.push_back(report.domains.back().micro_f1);
        macro.push_back(report.domains.back().macro_f1);
        acc.push_back(report.domains.back().accuracy);
    }
    if (!report.domains.empty()) {
        report.domain_avg_micro = domain_average(micro);
        report.domain_avg_macro = domain_average(macro);
        report.domain_avg_accuracy = domain_average(acc);
    }
    return report;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

void table_row(std::ostringstream& out, const std::string& name, Index pairs, double acc,
               double p, double r, double micro, double macro) {
    out << "  ";
    out << name;
    for (size_t i = name.size(); i < 10; ++i) out << ' ';
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%8lld  %8s  %8s  %8s  %8s  %8s",
                  static_cast<long long>(pairs), fmt(acc).c_str(), fmt(p).c_str(),
                  fmt(r).c_str(), fmt(micro).c_str(), fmt(macro).c_str());
    out << buf << "\n";
}

}  // namespace

std::string format_report_table(const EvalReport& report) {
    std::ostringstream out;
    out << "mode: " << to_string(report.mode) << "  pairs: " << report.total_pairs
        << "  relations/s: " << fmt(report.relations_per_second) << "\n";
    out << "  domain         pairs       acc      prec    recall  micro-f1  macro-f1\n";
    for (const auto& d : report.domains) {
        table_row(out, d.domain, d.pairs, d.accuracy, d.precision, d.recall, d.micro_f1,
                  d.macro_f1);
    }
    table_row(out, "all", report.overall.pairs, report.overall.accuracy,
              report.overall.precision, report.overall.recall, report.overall.micro_f1,
              report.overall.macro_f1);
    if (!report.domains.empty()) {
        out << "  avg (unweighted over domains): acc " << fmt(report.domain_avg_accuracy)
            << "  micro-f1 " << fmt(report.domain_avg_micro) << "  macro-f1 "
            << fmt(report.domain_avg_macro) << "\n";
    }
    return out.str();
}

std::string format_report_machine(const EvalReport& report) {
    std::ostringstream out;
    auto emit = [&](const std::string& metric, const std::string& domain, double value) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.9g", value);
        out << metric << "," << domain << "," << buf << "\n";
    };
    auto emit_domain = [&](const DomainScore& d) {
        emit("pairs", d.domain, static_cast<double>(d.pairs));
        emit("accuracy", d.domain, d.accuracy);
        emit("precision", d.domain, d.precision);
        emit("recall", d.domain, d.recall);
        emit("micro_f1", d.domain, d.micro_f1);
        emit("macro_f1", d.domain, d.macro_f1);
    };
    for (const auto& d : report.domains) emit_domain(d);
    emit_domain(report.overall);
    if (!report.domains.empty()) {
        emit("accuracy", "avg", report.domain_avg_accuracy);
        emit("micro_f1", "avg", report.domain_avg_micro);
        emit("macro_f1", "avg", report.domain_avg_macro);
    }
    // timing lives in the human table; the machine report stays
    // deterministic for a fixed seed
    return out.str();
}

void write_prediction_dump(const std::string& path, const EvalReport& report,
                           const LabelSet& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write prediction dump: " + path);
    for (const auto& pr : report.pair_results) {
        out << pr.paragraph << "\t" << pr.subj << "\t" << pr.obj << "\t"
            << labels.label(pr.gold).name << "\t" << labels.label(pr.pred).name << "\t";
        for (Index i = 0; i < pr.probs.size(); ++i) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.9g", pr.probs[i]);
            out << (i ? " " : "") << buf;
        }
        out << "\n";
    }
}

}  // namespace mre
