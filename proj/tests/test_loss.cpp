#include "hscnn/loss.hpp"
#include "oracles.hpp"

#include <boost/multiprecision/cpp_int.hpp>
#include <gtest/gtest.h>

#include <cmath>

using namespace hscnn;

namespace {

HeadOutputs<double> random_outputs(Index batch, bool semantic, std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 2.0);
    HeadOutputs<double> out;
    auto fill = [&] {
        Matrix<double> m(2, batch);
        for (Index i = 0; i < m.size(); ++i)
            m.data()[i] = n(rng);
        return m;
    };
    out.malignancy_logits = fill();
    if (semantic)
        for (Task t : kSemanticTasks) {
            out.semantic_tasks.push_back(t);
            out.semantic_logits.push_back(fill());
        }
    return out;
}

std::vector<LabelSet> random_labels(Index batch, std::mt19937_64& rng)
{
    std::vector<LabelSet> labels(static_cast<std::size_t>(batch));
    for (auto& l : labels)
        for (int& v : l)
            v = static_cast<int>(rng() % 2);
    return labels;
}

LossWeights random_weights(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.05, 0.95), lam(0.0, 1.0);
    LossWeights w;
    for (double& l : w.lambda)
        l = lam(rng);
    for (auto& cw : w.class_weights) {
        cw.w0 = u(rng);
        cw.w1 = 1.0 - cw.w0;
    }
    return w;
}

// Independent scalar recomputation of one weighted cross entropy term.
double ce_oracle(double f0, double f1, int label, const ClassWeights& w)
{
    const double m = std::max(f0, f1);
    const double lse = m + std::log(std::exp(f0 - m) + std::exp(f1 - m));
    return -((label == 0 ? f0 : f1) - lse) * w[label];
}

} // namespace

TEST(ClassWeights, MalignancyCountsFromCohortTable)
{
    const auto w = class_weights_from_counts(3212, 1040);
    EXPECT_NEAR(w.w0, 1040.0 / 4252.0, 1e-12);
    EXPECT_NEAR(w.w1, 3212.0 / 4252.0, 1e-12);
    EXPECT_NEAR(w.w0, 0.24459, 1e-5);
    EXPECT_NEAR(w.w1, 0.75541, 1e-5);
}

TEST(ClassWeights, BalancedCountsGiveHalf)
{
    const auto w = class_weights_from_counts(17, 17);
    EXPECT_EQ(w.w0, 0.5);
    EXPECT_EQ(w.w1, 0.5);
}

// The identity holds exactly for the rational weights N_1/T and N_0/T. The
// stored doubles must be their correctly rounded values; the floating-point
// products can then differ from each other by rounding only.
TEST(ClassWeights, CountWeightedIdentityIsExact)
{
    using boost::multiprecision::cpp_rational;
    auto exact = [](double x) { return cpp_rational(x); }; // exact conversion
    auto correctly_rounded = [&](double w, const cpp_rational& target) {
        const cpp_rational err = abs(exact(w) - target);
        return err <= abs(exact(std::nextafter(w, 0.0)) - target) && err <= abs(exact(std::nextafter(w, 1.0)) - target);
    };

    std::mt19937_64 rng(1);
    std::uniform_int_distribution<long long> n(1, 100000);
    for (int i = 0; i < 1000; ++i) {
        const long long n0 = i == 0 ? 3212 : n(rng), n1 = i == 0 ? 1040 : n(rng);
        const auto w = class_weights_from_counts(n0, n1);
        const cpp_rational r0(n1, n0 + n1), r1(n0, n0 + n1);
        EXPECT_EQ(r0 * n0, r1 * n1);
        EXPECT_EQ(r0 + r1, 1);
        EXPECT_TRUE(correctly_rounded(w.w0, r0)) << n0 << " " << n1;
        EXPECT_TRUE(correctly_rounded(w.w1, r1)) << n0 << " " << n1;

        const double a = w.w0 * static_cast<double>(n0), b = w.w1 * static_cast<double>(n1);
        EXPECT_LE(std::abs(a - b), 2.0 * (std::nextafter(a, 1e300) - a)) << n0 << " " << n1;
        EXPECT_GT(w.w0, 0.0);
        EXPECT_LT(w.w0, 1.0);
    }
}

TEST(ClassWeights, ZeroCountIsAnError)
{
    EXPECT_THROW(class_weights_from_counts(0, 5), DataError);
    EXPECT_THROW(class_weights_from_counts(5, 0), DataError);
}

TEST(ClassWeights, CensusCountsAndSkipsMissing)
{
    std::vector<LabelSet> labels = {{0, 1, 1, 0, 1, 1}, {1, 1, 0, 0, 1, 0}, {0, 0, 1, kMissingLabel, 1, 0}};
    const Census c = census_of(labels);
    EXPECT_EQ(c.negatives[0], 2);
    EXPECT_EQ(c.positives[0], 1);
    EXPECT_EQ(c.total(Task::Texture), 2);
    EXPECT_EQ(c.positives[4], 3);
    EXPECT_THROW(class_weights_from_census(c), DataError); // sphericity has no negatives
}

TEST(WeightedCe, UniformLogits)
{
    const auto r = weighted_ce<double>(Vector<double>::Zero(2), 1, {0.5, 0.5});
    EXPECT_NEAR(r.loss, 0.5 * std::log(2.0), 1e-15);
    EXPECT_NEAR(r.loss, 0.34657, 1e-5);
}

TEST(WeightedCe, ShiftInvariance)
{
    for (double c : {-50.0, -1.0, 0.0, 3.5, 700.0}) {
        Vector<double> f(2);
        f << c, c;
        EXPECT_NEAR(weighted_ce<double>(f, 0, {1.0 - 1e-12, 1e-12}).loss, std::log(2.0), 1e-12) << c;
    }
}

TEST(WeightedCe, StableForExtremeLogits)
{
    Vector<double> f(2);
    f << 1000.0, -1000.0;
    const auto r = weighted_ce<double>(f, 1, {0.5, 0.5});
    EXPECT_NEAR(r.loss, 1000.0, 1e-9);
    EXPECT_TRUE(r.grad.allFinite());
    f[0] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(weighted_ce<double>(f, 0, {0.5, 0.5}), NumericError);
    EXPECT_THROW(weighted_ce<double>(Vector<double>::Zero(3), 0, {0.5, 0.5}), ShapeError);
}

TEST(WeightedCe, GradientMatchesFiniteDifferences)
{
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 3.0);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (int trial = 0; trial < 50; ++trial) {
        Vector<double> f(2);
        f << n(rng), n(rng);
        const int label = static_cast<int>(rng() % 2);
        const ClassWeights w{u(rng), 0.0};
        const ClassWeights cw{w.w0, 1.0 - w.w0};
        const auto r = weighted_ce<double>(f, label, cw);
        auto loss = [&] { return weighted_ce<double>(f, label, cw).loss; };
        const auto num = oracle::numeric_gradient(loss, f.data(), 2, 1e-6);
        for (int i = 0; i < 2; ++i)
            EXPECT_LT(oracle::relative_error(r.grad[i], num[static_cast<std::size_t>(i)], 1e-10), 1e-6);
        EXPECT_NEAR(r.loss, ce_oracle(f[0], f[1], label, cw), 1e-12);
    }
}

TEST(GlobalLoss, SixUniformHeads)
{
    HeadOutputs<double> out;
    out.malignancy_logits = Matrix<double>::Zero(2, 1);
    for (Task t : kSemanticTasks) {
        out.semantic_tasks.push_back(t);
        out.semantic_logits.push_back(Matrix<double>::Zero(2, 1));
    }
    LossWeights w;
    w.lambda.fill(1.0);
    const auto r = global_loss(out, {LabelSet{1, 0, 1, 0, 1, 1}}, w);
    EXPECT_NEAR(r.breakdown.global, 6.0 * 0.5 * std::log(2.0), 1e-12);
    EXPECT_NEAR(r.breakdown.global, 2.0794, 1e-4);
}

TEST(GlobalLoss, ZeroLambdaIsMalignancyOnly)
{
    std::mt19937_64 rng(3);
    const auto out = random_outputs(7, true, rng);
    const auto labels = random_labels(7, rng);
    LossWeights w = random_weights(rng);
    w.lambda.fill(0.0);
    const auto r = global_loss(out, labels, w);
    EXPECT_EQ(r.breakdown.global, r.breakdown.malignancy);
    for (const auto& g : r.grads.semantic)
        EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(GlobalLoss, BaselineIsMalignancyOnly)
{
    std::mt19937_64 rng(4);
    const auto out = random_outputs(5, false, rng);
    const auto r = global_loss(out, random_labels(5, rng), random_weights(rng));
    EXPECT_EQ(r.breakdown.global, r.breakdown.malignancy);
    EXPECT_TRUE(r.breakdown.semantic.empty());
}

// Recompute the objective term by term from the raw logits and compare with
// both the aggregate and the logged per-head means.
TEST(GlobalLoss, AdditivityOnRandomBatches)
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const Index B = 1 + static_cast<Index>(rng() % 16);
        const auto out = random_outputs(B, true, rng);
        const auto labels = random_labels(B, rng);
        const LossWeights w = random_weights(rng);
        const auto r = global_loss(out, labels, w);

        double total = 0.0;
        for (Index b = 0; b < B; ++b) {
            const auto& l = labels[static_cast<std::size_t>(b)];
            double sample = ce_oracle(out.malignancy_logits(0, b), out.malignancy_logits(1, b), l[5],
                                      w.class_weights[5]);
            for (int j = 0; j < kSemanticTaskCount; ++j)
                sample += w.lambda[static_cast<std::size_t>(j)] *
                          ce_oracle(out.semantic_logits[j](0, b), out.semantic_logits[j](1, b), l[j],
                                    w.class_weights[static_cast<std::size_t>(j)]);
            total += sample;
        }
        total /= static_cast<double>(B);
        EXPECT_NEAR(r.breakdown.global, total, 1e-6);

        double logged = r.breakdown.malignancy;
        for (int j = 0; j < kSemanticTaskCount; ++j)
            logged += w.lambda[static_cast<std::size_t>(j)] * r.breakdown.semantic[static_cast<std::size_t>(j)];
        EXPECT_NEAR(r.breakdown.global, logged, 1e-6);
    }
}

TEST(GlobalLoss, LogitGradientsMatchFiniteDifferences)
{
    std::mt19937_64 rng(6);
    auto out = random_outputs(4, true, rng);
    const auto labels = random_labels(4, rng);
    const LossWeights w = random_weights(rng);
    const auto r = global_loss(out, labels, w);
    auto loss = [&] { return global_loss(out, labels, w).breakdown.global; };

    const auto num_m = oracle::numeric_gradient(loss, out.malignancy_logits.data(), 8, 1e-6);
    for (Index i = 0; i < 8; ++i)
        EXPECT_LT(oracle::relative_error(r.grads.malignancy.data()[i], num_m[static_cast<std::size_t>(i)], 1e-10),
                  1e-6);
    const auto num_s = oracle::numeric_gradient(loss, out.semantic_logits[3].data(), 8, 1e-6);
    for (Index i = 0; i < 8; ++i)
        EXPECT_LT(oracle::relative_error(r.grads.semantic[3].data()[i], num_s[static_cast<std::size_t>(i)], 1e-10),
                  1e-6);
}

TEST(GlobalLoss, LinearInClassWeight)
{
    std::mt19937_64 rng(8);
    const auto out = random_outputs(6, false, rng);
    std::vector<LabelSet> labels = random_labels(6, rng);
    for (auto& l : labels)
        l[5] = 1;
    LossWeights a, b;
    a.class_weights[5] = {0.8, 0.2};
    b.class_weights[5] = {0.6, 0.4};
    EXPECT_NEAR(global_loss(out, labels, b).breakdown.malignancy,
                2.0 * global_loss(out, labels, a).breakdown.malignancy, 1e-12);
}

TEST(GlobalLoss, MissingLabelAndBatchMismatchAreErrors)
{
    std::mt19937_64 rng(9);
    const auto out = random_outputs(3, true, rng);
    auto labels = random_labels(3, rng);
    labels[1][2] = kMissingLabel;
    EXPECT_THROW(global_loss(out, labels, LossWeights{}), DataError);
    labels.pop_back();
    EXPECT_THROW(global_loss(out, labels, LossWeights{}), ShapeError);
}

TEST(LossWeights, Validation)
{
    LossWeights w;
    EXPECT_NO_THROW(w.validate());
    w.lambda[1] = -0.1;
    EXPECT_THROW(w.validate(), ConfigError);
    w = LossWeights{};
    w.class_weights[0] = {0.7, 0.4};
    EXPECT_THROW(w.validate(), ConfigError);
}
