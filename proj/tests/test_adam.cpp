#include "hscnn/adam.hpp"

#include <gtest/gtest.h>

using namespace hscnn;

namespace {

using Map = Eigen::Map<Vector<double>>;

} // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged)
{
    Vector<double> w(3), g = Vector<double>::Zero(3);
    w << 0.5, -1.0, 2.0;
    const Vector<double> before = w;
    std::vector<Map> p{Map(w.data(), 3)}, q{Map(g.data(), 3)};
    AdamState<double> s;
    adam_step(p, q, s);
    EXPECT_EQ(w, before);
    EXPECT_EQ(s.step, 1);
    EXPECT_EQ(s.first_moment[0].size(), 3);
}

TEST(Adam, FirstStepMovesByLearningRate)
{
    Vector<double> w = Vector<double>::Zero(2), g(2);
    g << 3.0, -0.01;
    std::vector<Map> p{Map(w.data(), 2)}, q{Map(g.data(), 2)};
    AdamState<double> s;
    adam_step(p, q, s);
    // m_hat = g and v_hat = g^2 after bias correction
    EXPECT_NEAR(w[0], -1e-3, 1e-9);
    EXPECT_NEAR(w[1], 1e-3, 1e-9);
}

TEST(Adam, ConstantGradientDisplacementApproachesLearningRate)
{
    Vector<double> w = Vector<double>::Zero(1), g = Vector<double>::Constant(1, 0.37);
    std::vector<Map> p{Map(w.data(), 1)}, q{Map(g.data(), 1)};
    AdamState<double> s;
    s.learning_rate = 0.01;
    double last = 0.0;
    for (int i = 0; i < 2000; ++i) {
        const double before = w[0];
        adam_step(p, q, s);
        last = before - w[0];
    }
    EXPECT_NEAR(last, 0.01, 1e-6);
}

TEST(Adam, QuadraticBowlConverges)
{
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        Vector<double> w(4);
        for (auto& v : w)
            v = n(rng);
        w.normalize();
        Vector<double> g(4);
        std::vector<Map> p{Map(w.data(), 4)}, q{Map(g.data(), 4)};
        AdamState<double> s;
        s.learning_rate = 1e-3;
        for (int i = 0; i < 5000; ++i) {
            g = 2.0 * w;
            adam_step(p, q, s);
        }
        EXPECT_LT(w.norm(), 1e-3);
    }
}

TEST(Adam, DeterministicAcrossRuns)
{
    auto run = [] {
        Vector<float> w = Vector<float>::LinSpaced(5, -1.0f, 1.0f), g(5);
        std::vector<Eigen::Map<Vector<float>>> p{{w.data(), 5}}, q{{g.data(), 5}};
        AdamState<float> s;
        for (int i = 0; i < 100; ++i) {
            g = w.array().sin().matrix();
            adam_step(p, q, s);
        }
        return w;
    };
    EXPECT_EQ(run(), run());
}

TEST(Adam, ShapeMismatchAndNonFiniteGradientsAreErrors)
{
    Vector<double> w = Vector<double>::Zero(3), g = Vector<double>::Zero(2);
    std::vector<Map> p{Map(w.data(), 3)}, q{Map(g.data(), 2)};
    AdamState<double> s;
    EXPECT_THROW(adam_step(p, q, s), ShapeError);
    std::vector<Map> none;
    EXPECT_THROW(adam_step(p, none, s), ShapeError);

    Vector<double> bad = Vector<double>::Zero(3);
    bad[1] = std::numeric_limits<double>::quiet_NaN();
    std::vector<Map> qb{Map(bad.data(), 3)};
    EXPECT_THROW(adam_step(p, qb, s), NumericError);

    Vector<double> ok = Vector<double>::Zero(3);
    std::vector<Map> qo{Map(ok.data(), 3)};
    adam_step(p, qo, s);
    Vector<double> w4 = Vector<double>::Zero(4);
    std::vector<Map> p4{Map(w4.data(), 4)}, q4{Map(w4.data(), 4)};
    EXPECT_THROW(adam_step(p4, q4, s), ShapeError); // state was sized for three
}
