#pragma once

#include "hscnn/metrics.hpp"
#include "hscnn/sample.hpp"
#include "hscnn/stats.hpp"
#include "hscnn/trainer.hpp"

#include <string>
#include <vector>

namespace hscnn {

struct TaskMetrics {
    Task task = Task::Malignancy;
    Index count = 0;
    Index positives = 0;
    bool auc_defined = false; // false when the split holds a single class
    double auc = 0.0;
    ConfusionMetrics confusion;
    std::vector<RocPoint> roc;
};

struct EvalReport {
    std::string variant;
    int fold = -1; // -1 outside cross-validation
    Index samples = 0;
    double threshold = 0.5;
    std::vector<TaskMetrics> tasks;

    const TaskMetrics& at(Task t) const;
};

EvalReport evaluate_predictions(const Predictions& predictions, const std::vector<LabelSet>& labels,
                                const std::string& variant, int fold = -1, double threshold = 0.5);

/// JSON document `{"format": "hscnn-eval", "version": 1, ...}`; undefined
/// metrics are null.
std::string eval_report_json(const EvalReport& report);
EvalReport parse_eval_report(const std::string& text);

/// `fpr,tpr` header then one point per line.
std::string roc_csv(const std::vector<RocPoint>& points);

/// One row per sample: identity, then probability, predicted label and true
/// label for every head.
std::string predictions_csv(const std::vector<NoduleSample>& samples, const Predictions& predictions,
                            double threshold = 0.5);

inline constexpr const char* kAggregateMetrics[] = {"auc", "accuracy", "sensitivity", "specificity"};

struct MetricAggregate {
    std::vector<double> per_fold; // NaN where undefined
    int defined = 0;
    double mean = 0.0; // over defined folds
    double sd = 0.0;
};

struct TaskAggregate {
    Task task = Task::Malignancy;
    std::array<MetricAggregate, 4> metrics; // in kAggregateMetrics order
};

struct AggregateReport {
    std::string variant;
    std::vector<int> folds;
    std::vector<TaskAggregate> tasks;

    const MetricAggregate& metric(Task t, const std::string& name) const;
    /// Per-fold values; throws unless every fold defines the metric.
    std::vector<double> fold_values(Task t, const std::string& name) const;
};

/// Mean and sample SD per metric per task, folds ordered by index. Needs at
/// least two reports sharing one task set.
AggregateReport aggregate_folds(const std::vector<EvalReport>& reports);

std::string aggregate_json(const AggregateReport& report);
AggregateReport parse_aggregate(const std::string& text);

/// Per-fold table followed by the mean difference, t, df, p-value and CI.
std::string format_paired_test(const PairedTestResult& result, const std::vector<double>& a,
                               const std::vector<double>& b, const std::string& name_a, const std::string& name_b);
std::string paired_test_json(const PairedTestResult& result, const std::string& name_a, const std::string& name_b);

} // namespace hscnn
