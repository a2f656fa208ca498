#include "hscnn/metrics.hpp"
#include "hscnn/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hscnn {

std::size_t ScoredSet::positives() const
{
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

void ScoredSet::validate() const
{
    if (scores.size() != labels.size())
        throw ShapeError("scored set has " + std::to_string(scores.size()) + " scores but " +
                         std::to_string(labels.size()) + " labels");
    if (scores.empty())
        throw DataError("scored set is empty");
    for (double s : scores)
        if (!std::isfinite(s))
            throw NumericError("scored set contains a non-finite score");
    for (int l : labels)
        if (l != 0 && l != 1)
            throw DataError("scored set labels must be 0 or 1");
}

namespace {

void require_both_classes(const ScoredSet& set)
{
    set.validate();
    if (set.positives() == 0 || set.negatives() == 0)
        throw DataError("AUC and ROC need both classes present");
}

std::vector<std::size_t> order_by_score(const ScoredSet& set)
{
    std::vector<std::size_t> order(set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return set.scores[a] < set.scores[b]; });
    return order;
}

} // namespace

double auc(const ScoredSet& set)
{
    require_both_classes(set);
    const auto order = order_by_score(set);
    double positive_rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && set.scores[order[j]] == set.scores[order[i]])
            ++j;
        // ranks i+1 .. j share their mean
        const double rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (set.labels[order[k]] == 1)
                positive_rank_sum += rank;
        i = j;
    }
    const auto p = static_cast<double>(set.positives());
    const auto n = static_cast<double>(set.negatives());
    return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

std::vector<RocPoint> roc_curve(const ScoredSet& set)
{
    require_both_classes(set);
    auto order = order_by_score(set);
    std::reverse(order.begin(), order.end());
    const auto p = static_cast<double>(set.positives());
    const auto n = static_cast<double>(set.negatives());
    std::vector<RocPoint> points{{0.0, 0.0}};
    long long tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && set.scores[order[j]] == set.scores[order[i]]) {
            (set.labels[order[j]] == 1 ? tp : fp) += 1;
            ++j;
        }
        points.push_back({static_cast<double>(fp) / n, static_cast<double>(tp) / p});
        i = j;
    }
    return points;
}

double trapezoid_area(const std::vector<RocPoint>& points)
{
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i)
        area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
    return area;
}

ConfusionMetrics confusion_metrics(const ScoredSet& set, double threshold)
{
    set.validate();
    ConfusionMetrics m;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const bool predicted = set.scores[i] >= threshold;
        if (set.labels[i] == 1)
            (predicted ? m.tp : m.fn) += 1;
        else
            (predicted ? m.fp : m.tn) += 1;
    }
    m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(set.size());
    m.sensitivity_defined = m.tp + m.fn > 0;
    m.specificity_defined = m.tn + m.fp > 0;
    if (m.sensitivity_defined)
        m.sensitivity = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    if (m.specificity_defined)
        m.specificity = static_cast<double>(m.tn) / static_cast<double>(m.tn + m.fp);
    return m;
}

} // namespace hscnn
