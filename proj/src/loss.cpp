#include "hscnn/loss.hpp"

#include <cmath>

namespace hscnn {

ClassWeights class_weights_from_counts(long long n0, long long n1)
{
    if (n0 < 1 || n1 < 1)
        throw DataError("class weights need at least one sample of each class (got " + std::to_string(n0) + ", " +
                        std::to_string(n1) + ")");
    const double total = static_cast<double>(n0 + n1);
    return {static_cast<double>(n1) / total, static_cast<double>(n0) / total};
}

void LossWeights::validate() const
{
    for (double l : lambda)
        if (!(l >= 0.0) || !std::isfinite(l))
            throw ConfigError("task weights lambda must be finite and non-negative");
    for (const auto& w : class_weights)
        if (!(w.w0 > 0.0 && w.w0 < 1.0 && w.w1 > 0.0 && w.w1 < 1.0) || std::abs(w.w0 + w.w1 - 1.0) > 1e-12)
            throw ConfigError("class weights must lie in (0, 1) and sum to 1");
}

Census census_of(const std::vector<LabelSet>& labels)
{
    Census c;
    for (const auto& l : labels)
        for (std::size_t t = 0; t < kTaskCount; ++t) {
            if (l[t] == 0)
                ++c.negatives[t];
            else if (l[t] == 1)
                ++c.positives[t];
        }
    return c;
}

std::array<ClassWeights, kTaskCount> class_weights_from_census(const Census& census)
{
    std::array<ClassWeights, kTaskCount> w{};
    for (std::size_t t = 0; t < kTaskCount; ++t)
        w[t] = class_weights_from_counts(census.negatives[t], census.positives[t]);
    return w;
}

template <typename Scalar>
CrossEntropy<Scalar> weighted_ce(const Vector<Scalar>& logits, int label, const ClassWeights& weights)
{
    if (logits.size() != 2)
        throw ShapeError("weighted_ce expects two logits");
    if (label != 0 && label != 1)
        throw DataError("binary label must be 0 or 1");
    if (!logits.allFinite())
        throw NumericError("non-finite logits");
    const Scalar w = static_cast<Scalar>(weights[label]);
    const Vector<Scalar> log_p = log_softmax(logits);
    CrossEntropy<Scalar> r;
    r.loss = -log_p[label] * w;
    r.grad = log_p.array().exp();
    r.grad[label] -= Scalar(1);
    r.grad *= w;
    return r;
}

template <typename Scalar>
GlobalLoss<Scalar> global_loss(const HeadOutputs<Scalar>& outputs, const std::vector<LabelSet>& labels,
                               const LossWeights& weights)
{
    const Index B = outputs.batch_size();
    if (static_cast<Index>(labels.size()) != B)
        throw ShapeError("global_loss: " + std::to_string(labels.size()) + " label sets for a batch of " +
                         std::to_string(B));
    if (outputs.semantic_logits.size() != outputs.semantic_tasks.size())
        throw ShapeError("global_loss: semantic heads and task list disagree");

    GlobalLoss<Scalar> r;
    auto& bd = r.breakdown;
    bd.semantic_tasks = outputs.semantic_tasks;
    bd.semantic.assign(outputs.semantic_tasks.size(), 0.0);
    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(B);

    auto head = [&](const Matrix<Scalar>& logits, Task task, double lambda, double& mean_loss) {
        Matrix<Scalar> grad(2, B);
        const auto& cw = weights.weights_for(task);
        for (Index b = 0; b < B; ++b) {
            const int label = labels[static_cast<std::size_t>(b)][static_cast<std::size_t>(task_index(task))];
            if (label == kMissingLabel)
                throw DataError("missing " + std::string(task_name(task)) + " label for a declared head");
            const auto ce = weighted_ce<Scalar>(logits.col(b), label, cw);
            mean_loss += static_cast<double>(ce.loss);
            grad.col(b) = ce.grad * (static_cast<Scalar>(lambda) * inv_n);
        }
        mean_loss /= static_cast<double>(B);
        return grad;
    };

    for (std::size_t j = 0; j < outputs.semantic_tasks.size(); ++j) {
        const Task task = outputs.semantic_tasks[j];
        const double lambda = weights.lambda_for(task);
        r.grads.semantic.push_back(head(outputs.semantic_logits[j], task, lambda, bd.semantic[j]));
        bd.global += lambda * bd.semantic[j];
    }
    r.grads.malignancy = head(outputs.malignancy_logits, Task::Malignancy, 1.0, bd.malignancy);
    bd.global += bd.malignancy;
    if (!std::isfinite(bd.global))
        throw NumericError("non-finite global loss");
    return r;
}

template <typename Scalar>
double unweighted_malignancy_loss(const HeadOutputs<Scalar>& outputs, const std::vector<LabelSet>& labels)
{
    const Index B = outputs.batch_size();
    if (static_cast<Index>(labels.size()) != B)
        throw ShapeError("label count does not match the batch");
    double total = 0.0;
    for (Index b = 0; b < B; ++b) {
        const int label = labels[static_cast<std::size_t>(b)][static_cast<std::size_t>(task_index(Task::Malignancy))];
        const Vector<double> logits = outputs.malignancy_logits.col(b).template cast<double>();
        total -= log_softmax(logits)[label];
    }
    return total / static_cast<double>(B);
}

template CrossEntropy<float> weighted_ce(const Vector<float>&, int, const ClassWeights&);
template CrossEntropy<double> weighted_ce(const Vector<double>&, int, const ClassWeights&);
template GlobalLoss<float> global_loss(const HeadOutputs<float>&, const std::vector<LabelSet>&, const LossWeights&);
template GlobalLoss<double> global_loss(const HeadOutputs<double>&, const std::vector<LabelSet>&,
                                        const LossWeights&);
template double unweighted_malignancy_loss(const HeadOutputs<float>&, const std::vector<LabelSet>&);
template double unweighted_malignancy_loss(const HeadOutputs<double>&, const std::vector<LabelSet>&);

} // namespace hscnn
