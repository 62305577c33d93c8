#pragma once

#include "mre/model.hpp"
#include "mre/variants.hpp"

#include <string>
#include <vector>

namespace mre {

struct LabelCounts {
    Index tp = 0, fp = 0, fn = 0;
};

// Scores for one domain (or the pooled "all" row). NA is excluded from F1
// credit: predicting NA on an NA gold pair is a true negative. Precision,
// recall and micro-F1 pool TP/FP/FN over the non-NA labels; macro-F1 is
// the unweighted mean of per-label F1 over every non-NA label in the set.
struct DomainScore {
    std::string domain;
    Index pairs = 0;
    Index correct = 0;  // argmax == gold, NA included
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double micro_f1 = 0.0;
    double macro_f1 = 0.0;
    std::vector<LabelCounts> per_label;
};

struct PairResult {
    Index paragraph = 0;
    Index subj = 0, obj = 0;
    int gold = 0;
    int pred = 0;
    Vector probs;
};

struct EvalReport {
    std::vector<DomainScore> domains;  // present domains, sorted by name
    DomainScore overall;               // pooled over all pairs ("all")
    double domain_avg_micro = 0.0;     // unweighted mean over present domains
    double domain_avg_macro = 0.0;
    double domain_avg_accuracy = 0.0;
    MatrixT<Index> confusion;  // gold x predicted counts, all labels
    double relations_per_second = 0.0;
    double wall_seconds = 0.0;
    Index total_pairs = 0;
    PassMode mode = PassMode::kOnePass;
    std::vector<PairResult> pair_results;
};

// Unweighted mean, the Table-style "avg" column arithmetic.
double domain_average(const std::vector<double>& values);

// Score a flat prediction list (paragraph-id, gold, pred) against a label
// set. Exposed so tests can drive the scorer directly.
DomainScore score_pairs(const std::vector<std::pair<int, int>>& gold_pred,
                        const LabelSet& labels, const std::string& domain);

// Evaluates the model's gold pairs under `mode`.
EvalReport evaluate(const std::vector<AnnotatedParagraph>& corpus, const Model& model,
                    PassMode mode);

std::string format_report_table(const EvalReport& report);
// One "metric,domain,value" line per cell.
std::string format_report_machine(const EvalReport& report);
// One line per pair: paragraph id, i, j, gold, predicted, distribution at
// 9 significant digits.
void write_prediction_dump(const std::string& path, const EvalReport& report,
                           const LabelSet& labels);

}  // namespace mre
