#pragma once

#include "hscnn/network.hpp"

#include <array>
#include <vector>

namespace hscnn {

/// Per-class loss multipliers (omega_0, omega_1) for one task.
struct ClassWeights {
    double w0 = 0.5;
    double w1 = 0.5;

    double operator[](int label) const { return label == 0 ? w0 : w1; }
    bool operator==(const ClassWeights&) const = default;
};

/// omega_0 = N_1 / (N_0 + N_1), omega_1 = N_0 / (N_0 + N_1).
ClassWeights class_weights_from_counts(long long n0, long long n1);

struct LossWeights {
    std::array<double, kSemanticTaskCount> lambda{0.2, 0.2, 0.2, 0.2, 0.2};
    std::array<ClassWeights, kTaskCount> class_weights{};

    double lambda_for(Task t) const { return lambda.at(static_cast<std::size_t>(task_index(t))); }
    const ClassWeights& weights_for(Task t) const { return class_weights.at(static_cast<std::size_t>(task_index(t))); }

    void validate() const;
};

/// Per-task label counts (N_0, N_1) over a set of label records.
struct Census {
    std::array<long long, kTaskCount> negatives{};
    std::array<long long, kTaskCount> positives{};

    long long total(Task t) const
    {
        return negatives[static_cast<std::size_t>(task_index(t))] + positives[static_cast<std::size_t>(task_index(t))];
    }
};

Census census_of(const std::vector<LabelSet>& labels);

/// Class weights for every task from training-split counts.
std::array<ClassWeights, kTaskCount> class_weights_from_census(const Census& census);

template <typename Scalar>
struct CrossEntropy {
    Scalar loss;
    Vector<Scalar> grad; // d loss / d logits
};

/// -log softmax(logits)[label] * omega_label, gradient omega_label * (softmax - onehot).
template <typename Scalar>
CrossEntropy<Scalar> weighted_ce(const Vector<Scalar>& logits, int label, const ClassWeights& weights);

struct LossBreakdown {
    std::vector<Task> semantic_tasks;
    std::vector<double> semantic; // batch-mean weighted loss per semantic task
    double malignancy = 0.0;      // batch-mean weighted malignancy loss
    double global = 0.0;          // sum_j lambda_j * semantic_j + malignancy
};

template <typename Scalar>
struct GlobalLoss {
    LossBreakdown breakdown;
    LogitGrads<Scalar> grads;
};

/// Multi-task objective averaged over the batch; gradients are with respect to
/// each head's logits. Throws if a declared head has no label.
template <typename Scalar>
GlobalLoss<Scalar> global_loss(const HeadOutputs<Scalar>& outputs, const std::vector<LabelSet>& labels,
                               const LossWeights& weights);

/// Plain (unit-weight) cross entropy of the malignancy head, averaged over the batch.
template <typename Scalar>
double unweighted_malignancy_loss(const HeadOutputs<Scalar>& outputs, const std::vector<LabelSet>& labels);

} // namespace hscnn
