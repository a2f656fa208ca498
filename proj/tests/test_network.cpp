#include "hscnn/loss.hpp"
#include "hscnn/network.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace hscnn;

namespace {

NetworkConfig small_config(Variant v = Variant::Hscnn)
{
    NetworkConfig c;
    c.input_cube_voxels = 8;
    c.conv_module_channels = {2, 4};
    c.branch_hidden = {8, 4};
    c.highlevel_hidden = 8;
    c.variant = v;
    if (v == Variant::Baseline)
        c.semantic_tasks.clear();
    return c;
}

Tensor<double> random_batch(Index b, Index s, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    return oracle::random_tensor({b, 1, s, s, s}, rng, 0.0, 1.0);
}

std::vector<LabelSet> random_labels(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::vector<LabelSet> out(n);
    for (auto& l : out)
        for (int& v : l)
            v = static_cast<int>(rng() % 2);
    return out;
}

LossWeights random_weights(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.1, 0.9), lam(0.1, 1.0);
    LossWeights w;
    for (double& l : w.lambda)
        l = lam(rng);
    for (auto& cw : w.class_weights) {
        cw.w0 = u(rng);
        cw.w1 = 1.0 - cw.w0;
    }
    return w;
}

bool is_pre_batchnorm_bias(const std::string& name)
{
    const auto ends = [&](const std::string& s) {
        return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    return ends(".bias") && !ends(".out.bias") && name.find(".bn.") == std::string::npos;
}

} // namespace

TEST(NetworkConfig, ValidatesVariantsAndExtents)
{
    NetworkConfig c;
    EXPECT_NO_THROW(c.validate());
    c.input_cube_voxels = 50;
    EXPECT_THROW(c.validate(), ConfigError);
    c = NetworkConfig{};
    c.variant = Variant::Baseline;
    EXPECT_THROW(c.validate(), ConfigError); // baseline with semantic tasks
    c.semantic_tasks.clear();
    EXPECT_NO_THROW(c.validate());
    c = NetworkConfig{};
    c.semantic_tasks.pop_back();
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(NetworkConfig, FullSizeFeatureLengths)
{
    const NetworkConfig c;
    EXPECT_EQ(c.pooled_extent(), 13);
    EXPECT_EQ(c.trunk_features(), 13 * 13 * 13 * 32);
    EXPECT_EQ(c.trunk_features(), 70304);
    EXPECT_EQ(c.concat_features(), 70304 + 5 * 256);
    EXPECT_EQ(c.concat_features(), 71584);
}

TEST(NetworkConfig, CanonicalTextRoundTrips)
{
    NetworkConfig c = small_config();
    c.dropout_rate = 0.25;
    EXPECT_EQ(NetworkConfig::parse_canonical(c.canonical_text()), c);
    const NetworkConfig b = small_config(Variant::Baseline);
    EXPECT_EQ(NetworkConfig::parse_canonical(b.canonical_text()), b);
}

TEST(Network, FullSizeShapeChain)
{
    const NetworkConfig c;
    const auto model = build_model<float>(c, 3);
    Tensor<float> batch({1, 1, 52, 52, 52}, 0.25f);
    Rng rng(1);
    const auto out = forward(model, batch, Mode::Eval, rng, {1, false});
    ASSERT_EQ(out.module_shapes.size(), 2u);
    EXPECT_EQ(out.module_shapes[0], (Shape{16, 26, 26, 26}));
    EXPECT_EQ(out.module_shapes[1], (Shape{32, 13, 13, 13}));
    EXPECT_EQ(out.flat_features, 70304);
    EXPECT_EQ(out.concat_features, 71584);
    EXPECT_EQ(out.malignancy_logits.rows(), 2);
    EXPECT_EQ(out.semantic_logits.size(), 5u);
}

TEST(Network, BuildIsDeterministicAndSharesTrunkAcrossVariants)
{
    auto a = build_model<float>(small_config(), 11);
    auto b = build_model<float>(small_config(), 11);
    auto pa = a.parameters(true), pb = b.parameters(true);
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        EXPECT_EQ(pa[i].values, pb[i].values) << pa[i].name;

    auto base = build_model<float>(small_config(Variant::Baseline), 11);
    for (std::size_t i = 0; i < a.trunk.size(); ++i) {
        EXPECT_EQ(a.trunk[i].conv.kernels, base.trunk[i].conv.kernels);
        EXPECT_EQ(a.trunk[i].conv.bias, base.trunk[i].conv.bias);
    }
    auto c = build_model<float>(small_config(), 12);
    EXPECT_NE(a.trunk[0].conv.kernels, c.trunk[0].conv.kernels);
}

TEST(Network, XavierBoundsAndNeutralInitialisation)
{
    auto m = build_model<double>(small_config(), 5);
    for (auto& p : m.parameters(true)) {
        const std::string& n = p.name;
        if (n.ends_with(".bias") || n.ends_with(".beta") || n.ends_with("running_mean"))
            EXPECT_EQ(p.values.cwiseAbs().maxCoeff(), 0.0) << n;
        else if (n.ends_with(".gamma") || n.ends_with("running_var"))
            EXPECT_EQ((p.values.array() - 1.0).abs().maxCoeff(), 0.0) << n;
    }
    const double conv_bound = std::sqrt(6.0 / (1 * 27 + 2 * 27));
    EXPECT_LE(m.trunk[0].conv.kernels.flat().cwiseAbs().maxCoeff(), conv_bound);
    EXPECT_GT(m.trunk[0].conv.kernels.flat().cwiseAbs().maxCoeff(), 0.5 * conv_bound);
    const auto& w = m.head.hidden.dense.weights;
    const double dense_bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    EXPECT_LE(w.cwiseAbs().maxCoeff(), dense_bound);
}

TEST(Network, BaselineHasNoBranchParameters)
{
    auto b = build_model<float>(small_config(Variant::Baseline), 1);
    EXPECT_TRUE(b.branches.empty());
    for (auto& p : b.parameters(true))
        EXPECT_EQ(p.name.find("branch."), std::string::npos) << p.name;
    auto h = build_model<float>(small_config(), 1);
    EXPECT_GT(h.parameter_count(), b.parameter_count());
    EXPECT_EQ(build_model<float>(small_config(), 99).parameter_count(), h.parameter_count());

    Rng rng(0);
    const auto out = forward(b, random_batch(2, 8, 3).cast<float>(), Mode::Eval, rng);
    EXPECT_TRUE(out.semantic_logits.empty());
    EXPECT_EQ(out.malignancy_logits.rows(), 2);
    EXPECT_EQ(out.malignancy_logits.cols(), 2);
    EXPECT_EQ(out.concat_features, out.flat_features);
}

TEST(Network, IdenticalCubesGiveIdenticalEvalLogits)
{
    auto m = build_model<float>(small_config(), 2);
    const auto one = random_batch(1, 8, 4).cast<float>();
    const auto cube = one.slice(0);
    const auto batch = stack<float>({&cube, &cube});
    Rng rng(0);
    const auto out = forward(m, batch, Mode::Eval, rng);
    EXPECT_EQ(out.malignancy_logits.col(0), out.malignancy_logits.col(1));
    for (const auto& s : out.semantic_logits)
        EXPECT_EQ(s.col(0), s.col(1));
}

TEST(Network, RejectsWrongCubeSize)
{
    auto m = build_model<float>(small_config(), 2);
    Rng rng(0);
    EXPECT_THROW(forward(m, random_batch(2, 12, 1).cast<float>(), Mode::Eval, rng), ShapeError);
}

TEST(Network, TrainForwardIsDeterministicPerSeed)
{
    auto m = build_model<float>(small_config(), 2);
    const auto x = random_batch(3, 8, 5).cast<float>();
    Rng a(9), b(9);
    const auto oa = forward(m, x, Mode::Train, a);
    const auto ob = forward(m, x, Mode::Train, b);
    EXPECT_EQ(oa.malignancy_logits, ob.malignancy_logits);
}

TEST(Network, ZeroUpstreamGradientGivesZeroGradients)
{
    auto m = build_model<double>(small_config(), 2);
    Rng rng(1);
    const auto out = forward(m, random_batch(3, 8, 6), Mode::Train, rng);
    LogitGrads<double> g;
    g.malignancy = Matrix<double>::Zero(2, 3);
    for (std::size_t j = 0; j < out.semantic_logits.size(); ++j)
        g.semantic.push_back(Matrix<double>::Zero(2, 3));
    auto grads = backward(m, out, g);
    for (auto& p : grads.parameters(true))
        EXPECT_EQ(p.values.cwiseAbs().maxCoeff(), 0.0) << p.name;
}

TEST(Network, BackwardNeedsCache)
{
    auto m = build_model<double>(small_config(), 2);
    Rng rng(1);
    const auto out = forward(m, random_batch(2, 8, 6), Mode::Train, rng, {1, false});
    LogitGrads<double> g;
    g.malignancy = Matrix<double>::Zero(2, 2);
    g.semantic.assign(5, Matrix<double>::Zero(2, 2));
    EXPECT_THROW(backward(m, out, g), Error);
}

// Central differences on 100 parameters drawn uniformly from the whole model.
TEST(Network, WholeModelGradientMatchesFiniteDifferences)
{
    auto model = build_model<double>(small_config(), 21);
    const auto x = random_batch(3, 8, 22);
    const auto labels = random_labels(3, 23);
    const LossWeights weights = random_weights(24);

    auto loss = [&] {
        Rng rng(77); // identical dropout masks on every evaluation
        const auto out = forward(model, x, Mode::Train, rng, {1, false});
        return global_loss(out, labels, weights).breakdown.global;
    };
    Rng rng(77);
    const auto out = forward(model, x, Mode::Train, rng);
    auto analytic = backward(model, out, global_loss(out, labels, weights).grads);

    auto params = model.parameters();
    auto grads = analytic.parameters();
    std::vector<std::pair<std::size_t, Index>> all;
    for (std::size_t t = 0; t < params.size(); ++t)
        for (Index i = 0; i < params[t].values.size(); ++i)
            all.emplace_back(t, i);
    std::mt19937_64 pick(25);
    std::shuffle(all.begin(), all.end(), pick);
    all.resize(100);

    double worst = 0.0;
    std::string worst_name;
    for (auto [t, i] : all) {
        const double n = oracle::numeric_gradient(loss, params[t].values.data() + i, 1, 1e-6)[0];
        const double a = grads[t].values[i];
        const double e = oracle::relative_error(a, n, 1e-6);
        if (e > worst) {
            worst = e;
            worst_name = params[t].name + "[" + std::to_string(i) + "]";
        }
    }
    EXPECT_LT(worst, 1e-3) << worst_name;
}

// Every parameter tensor is reached by the loss, except biases that feed a
// train-mode batch norm: the batch mean subtracts them out exactly.
TEST(Network, EveryParameterReceivesGradient)
{
    auto model = build_model<double>(small_config(), 31);
    const auto x = random_batch(4, 8, 32);
    const auto labels = random_labels(4, 33);
    Rng rng(3);
    const auto out = forward(model, x, Mode::Train, rng);
    auto grads = backward(model, out, global_loss(out, labels, random_weights(34)).grads);
    for (auto& p : grads.parameters()) {
        const double norm = p.values.norm();
        if (is_pre_batchnorm_bias(p.name))
            EXPECT_LT(norm, 1e-10) << p.name;
        else
            EXPECT_GT(norm, 0.0) << p.name;
    }
}

TEST(Network, JumpConnectionCarriesMalignancyGradientIntoBranches)
{
    auto model = build_model<double>(small_config(), 41);
    const auto x = random_batch(3, 8, 42);
    const auto labels = random_labels(3, 43);
    LossWeights w;
    w.lambda.fill(0.0);

    Rng rng(5);
    const auto out = forward(model, x, Mode::Train, rng);
    auto grads = backward(model, out, global_loss(out, labels, w).grads);
    for (auto& p : grads.parameters()) {
        if (p.name.find("branch.") != 0)
            continue;
        if (p.name.find(".out.") != std::string::npos || p.name.find(".fc1.") != std::string::npos)
            EXPECT_EQ(p.values.cwiseAbs().maxCoeff(), 0.0) << p.name;
        else if (p.name.ends_with("fc0.weights") || p.name.ends_with("fc0.bn.gamma"))
            EXPECT_GT(p.values.cwiseAbs().maxCoeff(), 0.0) << p.name;
    }

    // the analytic jump-path gradient agrees with finite differences of L_M
    auto loss = [&] {
        Rng r(5);
        const auto o = forward(model, x, Mode::Train, r, {1, false});
        return global_loss(o, labels, w).breakdown.global;
    };
    auto& tap = model.branches[2].hidden[0].dense.weights;
    const auto& g = grads.branches[2].hidden[0].dense.weights;
    Index r = 0, c = 0;
    g.cwiseAbs().maxCoeff(&r, &c);
    const Index i = c * g.rows() + r;
    const double n = oracle::numeric_gradient(loss, tap.data() + i, 1, 1e-6)[0];
    EXPECT_LT(oracle::relative_error(g.data()[i], n), 1e-5);
    EXPECT_GT(std::abs(n), 1e-8);
}

TEST(Network, CastRoundTripPreservesValues)
{
    auto m = build_model<float>(small_config(), 8);
    auto back = m.cast<double>().cast<float>();
    auto pa = m.parameters(true), pb = back.parameters(true);
    for (std::size_t i = 0; i < pa.size(); ++i)
        EXPECT_EQ(pa[i].values, pb[i].values);
}

TEST(Network, RunningStatisticsUpdateOnlyInTrainMode)
{
    auto m = build_model<float>(small_config(), 8);
    const auto x = random_batch(3, 8, 9).cast<float>();
    Rng rng(0);
    const auto eval = forward(m, x, Mode::Eval, rng);
    auto before = m.trunk[0].bn.running_mean;
    update_running_stats(m, eval.cache);
    EXPECT_EQ(m.trunk[0].bn.running_mean, before);
    const auto train = forward(m, x, Mode::Train, rng);
    update_running_stats(m, train.cache);
    EXPECT_NE(m.trunk[0].bn.running_mean, before);
    EXPECT_NE(m.head.hidden.bn.running_var, Vector<float>::Ones(m.head.hidden.bn.channels()));
}
