#pragma once

#include <vector>

namespace hscnn {

/// Positive-class scores with binary labels.
struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels;

    std::size_t size() const { return scores.size(); }
    std::size_t positives() const;
    std::size_t negatives() const { return size() - positives(); }

    /// Equal lengths, finite scores, labels in {0, 1}.
    void validate() const;
};

/// Mann-Whitney statistic with average ranks for ties; needs both classes.
double auc(const ScoredSet& set);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;

    bool operator==(const RocPoint&) const = default;
};

/// One point per distinct score threshold, from (0, 0) to (1, 1).
std::vector<RocPoint> roc_curve(const ScoredSet& set);

double trapezoid_area(const std::vector<RocPoint>& points);

struct ConfusionMetrics {
    long long tp = 0, fn = 0, tn = 0, fp = 0;
    double accuracy = 0.0;
    double sensitivity = 0.0; // 0 and flagged undefined when there are no positives
    double specificity = 0.0; // 0 and flagged undefined when there are no negatives
    bool sensitivity_defined = false;
    bool specificity_defined = false;
};

/// Predicts 1 iff score >= threshold.
ConfusionMetrics confusion_metrics(const ScoredSet& set, double threshold = 0.5);

} // namespace hscnn
