#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "granlab/error.hpp"
#include "granlab/nn.hpp"

using namespace granlab;
using namespace granlab::nn;

namespace {

Mlp single_unit(double w, double b) {
    return Mlp({Layer{Tensor::matrix({{w}}), Tensor::vector({b}), Activation::relu, 0.2}});
}

Mlp random_net(std::mt19937_64& rng, Activation act, std::size_t depth = 2, std::size_t width = 16) {
    MlpSpec spec{2, {}};
    for (std::size_t i = 0; i < depth; ++i) spec.layers.push_back({width, act, 0.2});
    spec.layers.push_back({1, Activation::identity, 0.2});
    Mlp net = init_mlp(spec, rng);
    std::normal_distribution<double> n(0.0, 0.3);
    for (Layer& l : net.layers())
        for (double& b : l.bias.storage()) b = n(rng);
    return net;
}

Tensor random_point(std::mt19937_64& rng, double scale = 2.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    return Tensor::vector({u(rng), u(rng)});
}

double f_at(const Mlp& net, const Tensor& x) { return evaluate(net, x)[0]; }

}  // namespace

TEST(Forward, WorkedExamples) {
    const Mlp net = single_unit(2.0, -1.0);
    EXPECT_EQ(f_at(net, Tensor::vector({1.0})), 1.0);
    EXPECT_EQ(f_at(net, Tensor::vector({0.0})), 0.0);
    const Mlp id({Layer{identity(2), Tensor(Shape{2}), Activation::identity, 0.2}});
    EXPECT_EQ(evaluate(id, Tensor::vector({3, 4})), Tensor::vector({3, 4}));
}

TEST(Forward, DimensionMismatch) {
    const Mlp net = single_unit(2.0, -1.0);
    EXPECT_THROW(evaluate(net, Tensor::vector({1.0, 2.0})), ShapeError);
    EXPECT_THROW(Mlp({Layer{Tensor(Shape{2, 3}), Tensor(Shape{2}), Activation::relu, 0.2},
                      Layer{Tensor(Shape{1, 3}), Tensor(Shape{1}), Activation::identity, 0.2}}),
                 ShapeError);
}

TEST(Forward, BatchMatchesRows) {
    std::mt19937_64 rng(2);
    const Mlp net = random_net(rng, Activation::leaky_relu);
    const Tensor batch = Tensor::matrix({{0.1, 0.2}, {-1.0, 0.5}, {2.0, -2.0}});
    const Tensor out = evaluate(net, batch);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(out[i], f_at(net, Tensor::vector({batch.at(i, 0), batch.at(i, 1)})));
    }
}

TEST(Pattern, WorkedExamples) {
    const Mlp net = single_unit(2.0, -1.0);
    EXPECT_EQ(activation_pattern(net, Tensor::vector({1.0})).active, std::vector<bool>{true});
    EXPECT_EQ(activation_pattern(net, Tensor::vector({0.0})).active, std::vector<bool>{false});
    EXPECT_EQ(activation_pattern(net, Tensor::vector({0.5})).active, std::vector<bool>{false});  // z exactly 0
    // No biases: the first-layer pattern is fixed on rays from the origin.
    Mlp one({Layer{Tensor::matrix({{1, 0}, {0, 1}, {1, 1}}), Tensor(Shape{3}), Activation::relu, 0.2},
             Layer{Tensor::matrix({{1, -1, 2}}), Tensor(Shape{1}), Activation::identity, 0.2}});
    EXPECT_EQ(activation_pattern(one, Tensor::vector({1, 2})), activation_pattern(one, Tensor::vector({3, 0.5})));
    EXPECT_EQ(activation_pattern(one, Tensor::vector({1, 2})).active.size(), one.hidden_units());
}

TEST(EffectiveAffine, WorkedExamples) {
    const Mlp net = single_unit(2.0, -1.0);
    EffectiveAffine a = effective_affine(net, Tensor::vector({1.0}));
    EXPECT_EQ(a.w, Tensor::vector({2.0}));
    EXPECT_EQ(a.b, -1.0);
    a = effective_affine(net, Tensor::vector({0.0}));
    EXPECT_EQ(a.w, Tensor::vector({0.0}));
    EXPECT_EQ(a.b, 0.0);
}

TEST(EffectiveAffine, RejectsNonPiecewiseLinear) {
    Mlp net({Layer{Tensor::matrix({{1.0}}), Tensor(Shape{1}), Activation::tanh, 0.2}});
    EXPECT_THROW(effective_affine(net, Tensor::vector({0.3})), ConfigError);
}

TEST(EffectiveAffine, OracleAndSamePatternAgreement) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const Mlp net = random_net(rng, trial % 2 ? Activation::relu : Activation::leaky_relu, 2 + trial % 2);
        const Tensor x = random_point(rng);
        const EffectiveAffine a = effective_affine(net, x);
        const double f = f_at(net, x);
        EXPECT_LE(std::abs(f - (a.w[0] * x[0] + a.w[1] * x[1] + a.b)), 1e-8 * (1 + std::abs(f)));

        // A short step that stays inside the region.
        const Tensor dir = Tensor::vector({0.6, 0.8});
        const double t = pattern_exit_distance(net, x, dir);
        const double step = std::isinf(t) ? 0.5 : 0.5 * t;
        const Tensor y = Tensor::vector({x[0] + step * dir[0], x[1] + step * dir[1]});
        ASSERT_EQ(activation_pattern(net, x), activation_pattern(net, y));
        const EffectiveAffine b = effective_affine(net, y);
        EXPECT_LE(std::abs(a.w[0] - b.w[0]) + std::abs(a.w[1] - b.w[1]), 1e-10);
        EXPECT_LE(std::abs(a.b - b.b), 1e-10);
    }
}

TEST(EffectiveAffine, WeightEqualsInputGradient) {
    std::mt19937_64 rng(4);
    const Mlp net = random_net(rng, Activation::relu);
    const Tensor x = random_point(rng);
    const ad::Var xv = ad::parameter(x);
    const Tensor g = ad::backward(ad::sum(forward(net, xv)), {xv})[0].value();
    const EffectiveAffine a = effective_affine(net, x);
    EXPECT_LE(max_abs_diff(a.w, g), 1e-12);
}

TEST(PatternExit, ExactOnSingleUnit) {
    // relu(2x - 1) from x = 1 moving left exits at x = 0.5, i.e. t = 0.5.
    const Mlp net = single_unit(2.0, -1.0);
    EXPECT_DOUBLE_EQ(pattern_exit_distance(net, Tensor::vector({1.0}), Tensor::vector({-1.0})), 0.5);
    EXPECT_TRUE(std::isinf(pattern_exit_distance(net, Tensor::vector({1.0}), Tensor::vector({1.0}))));
}

TEST(PatternExit, PatternChangesJustBeyond) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        const Mlp net = random_net(rng, Activation::relu, 3, 8);
        const Tensor x = random_point(rng);
        const Tensor dir = Tensor::vector({std::cos(trial * 0.3), std::sin(trial * 0.3)});
        const double t = pattern_exit_distance(net, x, dir);
        if (std::isinf(t)) continue;
        const auto at = [&](double s) { return Tensor::vector({x[0] + s * dir[0], x[1] + s * dir[1]}); };
        EXPECT_EQ(activation_pattern(net, x), activation_pattern(net, at(0.999 * t)));
        EXPECT_NE(activation_pattern(net, x), activation_pattern(net, at(t * (1 + 1e-6) + 1e-9)));
    }
}

// Bisect to a region boundary; both regions' affine maps agree there.
TEST(Continuity, AcrossBoundaries) {
    std::mt19937_64 rng(21);
    int checked = 0;
    for (int trial = 0; trial < 200 && checked < 30; ++trial) {
        const Mlp net = random_net(rng, Activation::relu, 2, 8);
        const Tensor p = random_point(rng), q = random_point(rng);
        if (activation_pattern(net, p) == activation_pattern(net, q)) continue;
        const auto lerp = [&](double s) {
            return Tensor::vector({p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])});
        };
        double lo = 0.0, hi = 1.0;
        const ActivationPattern start = activation_pattern(net, p);
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            (activation_pattern(net, lerp(mid)) == start ? lo : hi) = mid;
        }
        const Tensor xb = lerp(0.5 * (lo + hi));
        const EffectiveAffine a = effective_affine(net, lerp(lo));
        const EffectiveAffine b = effective_affine(net, lerp(hi));
        const double fa = a.w[0] * xb[0] + a.w[1] * xb[1] + a.b;
        const double fb = b.w[0] * xb[0] + b.w[1] * xb[1] + b.b;
        EXPECT_LE(std::abs(fa - fb), 1e-6);
        ++checked;
    }
    EXPECT_GE(checked, 10);
}

TEST(Init, DeterministicHeNormalZeroBias) {
    const MlpSpec spec{100, {{200, Activation::relu, 0.2}, {1, Activation::identity, 0.2}}};
    const Mlp a = init_mlp(spec, 17), b = init_mlp(spec, 17);
    EXPECT_TRUE(a == b);
    EXPECT_FALSE(a == init_mlp(spec, 18));
    double s = 0.0, s2 = 0.0;
    const auto& w = a.layers()[0].weight.storage();
    for (double x : w) {
        s += x;
        s2 += x * x;
    }
    const double n = static_cast<double>(w.size());
    const double var = s2 / n - (s / n) * (s / n);
    EXPECT_NEAR(var, 0.02, 0.02 * 0.2);
    for (const Layer& l : a.layers())
        for (double x : l.bias.storage()) EXPECT_EQ(x, 0.0);
    EXPECT_THROW(init_mlp(MlpSpec{2, {}}, 1), ConfigError);
}

TEST(Serialization, BitExactRoundTrip) {
    std::mt19937_64 rng(5);
    const Mlp net = random_net(rng, Activation::leaky_relu, 3, 5);
    const Mlp back = mlp_from_json(nlohmann::json::parse(to_json(net).dump()));
    EXPECT_TRUE(back == net);
    EXPECT_EQ(back.spec(), net.spec());
}

TEST(Serialization, CorruptDocuments) {
    EXPECT_THROW(mlp_from_json(nlohmann::json::object()), ConfigError);
    nlohmann::json doc = to_json(single_unit(1, 0));
    doc["weights"][0].push_back(3.0);
    EXPECT_THROW(mlp_from_json(doc), ConfigError);
}

TEST(Parameters, OrderAndNames) {
    std::mt19937_64 rng(1);
    Mlp net = random_net(rng, Activation::relu, 1, 3);
    const auto names = net.parameter_names("D");
    ASSERT_EQ(names.size(), 4u);
    EXPECT_EQ(names[0], "D.layer0.weight");
    EXPECT_EQ(names[3], "D.layer1.bias");
    EXPECT_EQ(net.parameters()[2], &net.layers()[1].weight);
}
