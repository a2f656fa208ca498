#include "hscnn/phantom.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hscnn;

namespace {

PhantomSpec clean_spec()
{
    PhantomSpec s;
    s.attributes = {1, 1, 1, 1, 1};
    s.noise_sigma = 0.0;
    s.diameter_mm = 12.0;
    s.seed = 5;
    return s;
}

// Extent in voxels of the above-threshold region along each axis (x, y, z).
std::array<Index, 3> bounding_box(const Tensor<float>& cube, float threshold)
{
    const Index S = cube.dim(1);
    std::array<Index, 3> lo{S, S, S}, hi{-1, -1, -1};
    for (Index z = 0; z < S; ++z)
        for (Index y = 0; y < S; ++y)
            for (Index x = 0; x < S; ++x)
                if (cube.at({0, z, y, x}) > threshold) {
                    const std::array<Index, 3> p{x, y, z};
                    for (std::size_t a = 0; a < 3; ++a) {
                        lo[a] = std::min(lo[a], p[a]);
                        hi[a] = std::max(hi[a], p[a]);
                    }
                }
    return {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
}

// Mean over the central 3x3x3 voxels.
double core_mean(const Tensor<float>& cube)
{
    const Index S = cube.dim(1), c = S / 2;
    double sum = 0.0;
    for (Index z = c - 1; z <= c + 1; ++z)
        for (Index y = c - 1; y <= c + 1; ++y)
            for (Index x = c - 1; x <= c + 1; ++x)
                sum += cube.at({0, z, y, x});
    return sum / 27.0;
}

} // namespace

TEST(Phantom, SameSpecIsBitIdentical)
{
    PhantomSpec s = clean_spec();
    s.noise_sigma = 0.05;
    s.attribute(Task::Texture) = 0;
    const auto a = generate_phantom(s, 24), b = generate_phantom(s, 24);
    EXPECT_EQ(a.cube, b.cube);
    EXPECT_EQ(a.labels, b.labels);
    s.seed = 6;
    EXPECT_NE(generate_phantom(s, 24).cube, a.cube);
}

TEST(Phantom, CalcifiedBlobReachesFullIntensity)
{
    for (double d : {6.0, 11.0, 16.0})
        for (Index S : {16, 24, 52}) {
            PhantomSpec s = clean_spec();
            s.noise_sigma = 0.03;
            s.diameter_mm = d;
            s.attribute(Task::Calcification) = 0;
            s.attribute(Task::Texture) = 0;
            s.attribute(Task::Subtlety) = 0;
            EXPECT_GE(generate_phantom(s, S).cube.flat().maxCoeff(), 0.99f) << d << " " << S;
            s.attribute(Task::Calcification) = 1;
            EXPECT_LT(generate_phantom(s, S).cube.flat().maxCoeff(), 0.99f) << d << " " << S;
        }
}

TEST(Phantom, AxisRatiosAtEqualVolume)
{
    PhantomSpec round = clean_spec();
    round.diameter_mm = 10.0;
    PhantomSpec elongated = round;
    elongated.attribute(Task::Sphericity) = 0;

    const auto ra = round.semi_axes_mm(), ea = elongated.semi_axes_mm();
    EXPECT_NEAR(ra[0] * ra[1] * ra[2], ea[0] * ea[1] * ea[2], 1e-12);

    // 40 voxels on a 40 mm cube: one voxel per millimetre
    const float half = static_cast<float>(0.5 * (0.1 + 0.85));
    const auto rb = bounding_box(generate_phantom(round, 40).cube, half);
    const auto eb = bounding_box(generate_phantom(elongated, 40).cube, half);
    for (std::size_t a = 0; a < 3; ++a) {
        EXPECT_NEAR(static_cast<double>(rb[a]), 2.0 * ra[a], 1.0) << "round axis " << a;
        EXPECT_NEAR(static_cast<double>(eb[a]), 2.0 * ea[a], 1.0) << "elongated axis " << a;
    }
    EXPECT_NEAR(static_cast<double>(eb[1]) / eb[0], 0.5, 0.1);
    EXPECT_NEAR(static_cast<double>(eb[2]) / eb[0], 2.0, 0.2);
}

TEST(Phantom, OversizedNoduleIsRejected)
{
    PhantomSpec s = clean_spec();
    s.diameter_mm = 25.0;
    EXPECT_NO_THROW(s.validate());
    s.attribute(Task::Sphericity) = 0; // long axis 50 mm
    EXPECT_THROW(s.validate(), ConfigError);
    EXPECT_THROW(generate_phantom(s, 24), ConfigError);
    s.diameter_mm = 8.0;
    EXPECT_NO_THROW(s.validate());
    s.diameter_mm = 33.0;
    s.attribute(Task::Sphericity) = 1;
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Phantom, CubesAreNormalized)
{
    const auto ds = generate_dataset(40, 3, {.cube_voxels = 16});
    for (const auto& s : ds.samples) {
        EXPECT_GE(s.cube.flat().minCoeff(), 0.0f);
        EXPECT_LE(s.cube.flat().maxCoeff(), 1.0f);
        EXPECT_EQ(s.cube.shape(), (Shape{1, 16, 16, 16}));
        for (int l : s.labels)
            EXPECT_TRUE(l == 0 || l == 1);
    }
}

TEST(Phantom, BalancedDatasetAndCensus)
{
    PhantomDatasetOptions opt;
    opt.cube_voxels = 12;
    const auto ds = generate_dataset(100, 17, opt);
    ASSERT_EQ(ds.samples.size(), 100u);
    for (Task t : kSemanticTasks) {
        const auto pos = ds.census.positives[static_cast<std::size_t>(task_index(t))];
        EXPECT_GE(pos, 40) << task_name(t);
        EXPECT_LE(pos, 60) << task_name(t);
    }
    for (Task t : kAllTasks)
        EXPECT_EQ(ds.census.total(t), 100) << task_name(t);
    for (std::size_t i = 0; i < ds.specs.size(); ++i) {
        EXPECT_EQ(ds.samples[i].label(Task::Malignancy), opt.rule.malignancy(ds.specs[i]));
        EXPECT_EQ(ds.samples[i].provenance.case_id, phantom_case_id(static_cast<Index>(i)));
        EXPECT_GE(ds.specs[i].diameter_mm, 6.0);
        EXPECT_LE(ds.specs[i].diameter_mm, 16.0);
    }
    const auto mal = ds.census.positives[static_cast<std::size_t>(task_index(Task::Malignancy))];
    EXPECT_GT(mal, 25);
    EXPECT_LT(mal, 75);
}

TEST(Phantom, ImpossibleBalanceIsRejected)
{
    PhantomDatasetOptions opt;
    opt.class_balance = 1.0;
    EXPECT_THROW(sample_phantom_specs(10, 1, opt), ConfigError);
    opt.class_balance = 0.02;
    EXPECT_THROW(sample_phantom_specs(10, 1, opt), ConfigError); // no positives left
    opt.class_balance = 0.5;
    EXPECT_THROW(sample_phantom_specs(0, 1, opt), ConfigError);
}

TEST(Phantom, TextureClassesSeparateByAtLeastOneSd)
{
    PhantomDatasetOptions opt;
    opt.cube_voxels = 24;
    const auto ds = generate_dataset(200, 23, opt);
    std::array<std::vector<double>, 2> means;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        if (ds.specs[i].attribute(Task::Calcification) == 1) // the blob would dominate the core
            means[static_cast<std::size_t>(ds.specs[i].attribute(Task::Texture))].push_back(
                core_mean(ds.samples[i].cube));
    auto stats = [](const std::vector<double>& v) {
        double m = 0.0, ss = 0.0;
        for (double x : v)
            m += x;
        m /= static_cast<double>(v.size());
        for (double x : v)
            ss += (x - m) * (x - m);
        return std::pair{m, ss / static_cast<double>(v.size() - 1)};
    };
    const auto [m0, v0] = stats(means[0]);
    const auto [m1, v1] = stats(means[1]);
    const double pooled = std::sqrt(0.5 * (v0 + v1));
    EXPECT_GE((m1 - m0) / pooled, 1.0) << m0 << " " << m1 << " " << pooled;
}

TEST(Phantom, RuleIsDeterministicAndHasKnownSigns)
{
    const GenerativeRule rule;
    PhantomSpec s = clean_spec();
    s.diameter_mm = 11.0;
    EXPECT_NEAR(rule.logit(s), -3.5 + 3 + 1 + 0 + 2 + 1, 1e-12);
    EXPECT_EQ(rule.malignancy(s), 1);
    s.attributes = {0, 0, 0, 0, 0};
    EXPECT_EQ(rule.malignancy(s), 0);
    s.attributes = {1, 0, 1, 0, 1};
    s.diameter_mm = 16.0;
    EXPECT_NEAR(rule.probability(s), 1.0 / (1.0 + std::exp(-(0.5 + 0.5))), 1e-12);
    EXPECT_EQ(phantom_labels(s, rule)[static_cast<std::size_t>(task_index(Task::Malignancy))], 1);
}

TEST(Phantom, RenderedVolumeRoundTripsThroughPreprocessing)
{
    PhantomSpec s = clean_spec();
    s.attribute(Task::Texture) = 0;
    const SourceVolume v = render_phantom_volume(s, 48, 1.0);
    EXPECT_EQ(v.dims, (std::array<Index, 3>{48, 48, 48}));
    const auto cube = extract_cube(normalize_hu(v), phantom_center_mm(48, 1.0), 24);
    const auto direct = generate_phantom(s, 24).cube;
    // the two grids draw independent texture noise, so compare on average
    EXPECT_LT((cube.flat() - direct.flat()).cwiseAbs().mean(), 0.03f);
    EXPECT_NEAR(core_mean(cube), core_mean(direct), 0.05);
}
