#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "granlab/analysis.hpp"
#include "granlab/error.hpp"
#include "granlab/regularizers.hpp"

using namespace granlab;
using namespace granlab::reg;

namespace {

GranConfig unit_cfg() {
    GranConfig c;
    c.tau = 1.0;
    c.epsilon = 0.1;
    return c;
}

// f(x) = w . x + c on a batch [B, d].
ad::Var linear_batch(const Tensor& w, double c, const ad::Var& x) {
    const std::size_t b = x.shape()[0];
    return ad::add_scalar(ad::reshape(ad::matmul(x, ad::constant(w.reshaped({w.size(), 1}))), Shape{b}), c);
}

nn::Mlp random_net(std::mt19937_64& rng, std::size_t depth, std::size_t width, nn::Activation act) {
    nn::MlpSpec spec{2, {}};
    for (std::size_t i = 0; i < depth; ++i) spec.layers.push_back({width, act, 0.2});
    spec.layers.push_back({1, nn::Activation::identity, 0.2});
    nn::Mlp net = nn::init_mlp(spec, rng);
    std::normal_distribution<double> n(0.0, 0.3);
    for (auto& l : net.layers())
        for (double& b : l.bias.storage()) b = n(rng);
    return net;
}

Tensor random_batch(std::size_t b, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    Tensor t(Shape{b, 2});
    for (double& x : t.storage()) x = u(rng);
    return t;
}

}  // namespace

TEST(Gran, SpecExampleValue) {
    // f = 5 at a point where ||grad f|| = 2.
    const ad::Var x = ad::parameter(Tensor::matrix({{0.0, 0.0}}));
    const ad::Var f = linear_batch(Tensor::vector({2.0, 0.0}), 5.0, x);
    const ad::Var g = gran(f, x, unit_cfg());
    EXPECT_NEAR(g.value()[0], 5.0 * 2.0 / 4.1, 1e-14);
    EXPECT_NEAR(grand_discriminator(f, x, unit_cfg()).value()[0], 1.0 / (1.0 + std::exp(-10.0 / 4.1)), 1e-14);
    EXPECT_NEAR(grand_discriminator(f, x, unit_cfg()).value()[0], 0.919755, 1e-6);
    EXPECT_EQ(granc_critic(f, x, unit_cfg()).value(), g.value());
}

TEST(Gran, ZeroGradientGivesZero) {
    const ad::Var x = ad::parameter(Tensor::matrix({{1.0, -1.0}}));
    const ad::Var f = linear_batch(Tensor::vector({0.0, 0.0}), 7.0, x);
    EXPECT_EQ(gran(f, x, unit_cfg()).value()[0], 0.0);
    EXPECT_EQ(grand_discriminator(f, x, unit_cfg()).value()[0], 0.5);
    EXPECT_EQ(granc_critic(f, x, unit_cfg()).value()[0], 0.0);
}

TEST(Gran, LinearInputGradientNorm) {
    // ||w|| = 3: ||grad g|| = 9 / 9.1.
    const ad::Var x = ad::parameter(Tensor::matrix({{0.3, -0.7}}));
    const ad::Var g = gran(linear_batch(Tensor::vector({3.0, 0.0}), 0.2, x), x, unit_cfg());
    const Tensor gx = ad::backward(ad::sum(g), {x})[0].value();
    EXPECT_NEAR(std::hypot(gx[0], gx[1]), 9.0 / 9.1, 1e-14);
}

TEST(Gran, SingleInputForm) {
    const ad::Var x = ad::parameter(Tensor::vector({1.0, 2.0}));
    const ad::Var f = ad::sum(ad::constant(Tensor::vector({0.0, 2.0})) * x);
    EXPECT_NEAR(gran(f, x, unit_cfg()).item(), 4.0 * 2.0 / 4.1, 1e-14);
}

TEST(Gran, RejectsNonFinite) {
    const ad::Var x = ad::parameter(Tensor::matrix({{0.0, 0.0}}));
    const ad::Var f = ad::log(linear_batch(Tensor::vector({1.0, 0.0}), -1.0, x));
    EXPECT_THROW(gran(f, x, unit_cfg()), NumericError);
}

TEST(Gran, ConfigValidation) {
    GranConfig c;
    c.tau = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = GranConfig{};
    c.epsilon = -1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_NEAR(GranConfig::with_lipschitz(0.83, 0.1).tau, 1.0 / 0.83, 1e-15);
}

TEST(Gran, PerRegionExactnessAndStrictBound) {
    std::mt19937_64 rng(31);
    for (int t = 0; t < 10; ++t) {
        const nn::Mlp net = random_net(rng, 2 + t % 3, 16, t % 2 ? nn::Activation::relu : nn::Activation::leaky_relu);
        GranConfig cfg = GranConfig::with_lipschitz(0.83, 0.1);
        const Tensor xs = random_batch(64, rng);
        const ad::Var x = ad::parameter(xs);
        const ad::Var f = ad::reshape(nn::forward(net, x), Shape{64});
        const Tensor fx = ad::backward(ad::sum(f), {x})[0].value();
        const Tensor gx = ad::backward(ad::sum(gran(f, x, cfg)), {x})[0].value();
        for (std::size_t i = 0; i < 64; ++i) {
            const double n2 = fx.at(i, 0) * fx.at(i, 0) + fx.at(i, 1) * fx.at(i, 1);
            const double measured = std::hypot(gx.at(i, 0), gx.at(i, 1));
            EXPECT_NEAR(measured, 0.83 * n2 / (n2 + 0.1), 1e-10);
            EXPECT_LT(measured, 0.83);
        }
    }
}

TEST(Gran, SameRegionSameNormalizedGradient) {
    std::mt19937_64 rng(8);
    const nn::Mlp net = random_net(rng, 2, 16, nn::Activation::relu);
    const Tensor x0 = Tensor::vector({0.4, -0.2});
    const Tensor dir = Tensor::vector({1.0, 0.0});
    const double t = nn::pattern_exit_distance(net, x0, dir);
    const double s = std::isinf(t) ? 0.3 : 0.5 * t;
    const Tensor both = Tensor::matrix({{x0[0], x0[1]}, {x0[0] + s, x0[1]}});
    const ad::Var x = ad::parameter(both);
    const ad::Var g = gran(ad::reshape(nn::forward(net, x), Shape{2}), x, unit_cfg());
    const Tensor gx = ad::backward(ad::sum(g), {x})[0].value();
    EXPECT_NEAR(gx.at(0, 0), gx.at(1, 0), 1e-10);
    EXPECT_NEAR(gx.at(0, 1), gx.at(1, 1), 1e-10);
}

TEST(Gran, ParameterGradientFlowsThroughFactor) {
    // Full backprop vs detached factor differ; the full one matches differences.
    std::mt19937_64 rng(3);
    const nn::Mlp net = random_net(rng, 2, 6, nn::Activation::leaky_relu);
    const Tensor xs = random_batch(4, rng);
    const Tensor w0 = net.layers()[0].weight;
    const auto loss_of = [&](const ad::Var& w, bool detach) {
        nn::BoundMlp b = nn::bind(net, false);
        b.weights[0] = w;
        const ad::Var x = ad::parameter(xs);
        GranConfig c = unit_cfg();
        c.detach_factor = detach;
        return ad::sum(gran(ad::reshape(nn::forward(b, x), Shape{4}), x, c));
    };
    EXPECT_LE(ad::finite_diff_check([&](const ad::Var& w) { return loss_of(w, false); }, w0, 1e-6), 1e-5);
    const ad::Var wf = ad::parameter(w0), wd = ad::parameter(w0);
    const Tensor full = ad::backward(loss_of(wf, false), {wf})[0].value();
    const Tensor det = ad::backward(loss_of(wd, true), {wd})[0].value();
    EXPECT_GT(max_abs_diff(full, det), 1e-6);
}

TEST(Gran, LinearFactorVariant) {
    GranConfig c = unit_cfg();
    c.factor = GranFactor::linear;
    const ad::Var x = ad::parameter(Tensor::matrix({{0.0, 0.0}}));
    const ad::Var f = linear_batch(Tensor::vector({2.0, 0.0}), 5.0, x);
    EXPECT_NEAR(gran(f, x, c).value()[0], 5.0 / 2.1, 1e-14);
}

TEST(SpectralNorm, DiagonalAndOrthogonal) {
    std::mt19937_64 rng(1);
    const Tensor w = Tensor::matrix({{3, 0}, {0, 1}});
    SpectralNormState s = init_spectral_state(w, rng);
    const Tensor wn = spectral_normalize(w, s, 100);
    EXPECT_LE(max_abs_diff(wn, Tensor::matrix({{1, 0}, {0, 1.0 / 3.0}})), 1e-12);
    EXPECT_NEAR(sigma_estimate(w, s), 3.0, 1e-12);

    const Tensor q = analysis::random_orthogonal(4, rng);
    SpectralNormState sq = init_spectral_state(q, rng);
    EXPECT_LE(max_abs_diff(spectral_normalize(q, sq, 3), q), 1e-12);
}

TEST(SpectralNorm, StateVectorsUnitAndErrors) {
    std::mt19937_64 rng(2);
    const Tensor w = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    SpectralNormState s = init_spectral_state(w, rng);
    power_iterate(w, s, 1);
    EXPECT_NEAR(frobenius_norm(s.u.reshaped({1, 2})), 1.0, 1e-14);
    EXPECT_NEAR(frobenius_norm(s.v.reshaped({1, 3})), 1.0, 1e-14);
    EXPECT_THROW(power_iterate(w, s, 0), std::exception);
    const Tensor z(Shape{2, 3});
    SpectralNormState sz = init_spectral_state(z, rng);
    EXPECT_THROW(spectral_normalize(z, sz, 1), NumericError);
}

TEST(SpectralNorm, ConvergesToSvdOracle) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor w(Shape{64, 64});
    for (double& x : w.storage()) x = n(rng);
    const analysis::SvdResult r = analysis::svd(w);
    ASSERT_GE(r.sigma[0] - r.sigma[1], 0.05);
    SpectralNormState s = init_spectral_state(w, rng);
    const Tensor wn = spectral_normalize(w, s, 200);
    EXPECT_NEAR(sigma_estimate(w, s), r.sigma[0], 1e-6);
    EXPECT_LE(analysis::sigma1(wn), 1.0 + 1e-6);
}

TEST(SpectralNorm, GraphFormMatchesTensorForm) {
    std::mt19937_64 rng(4);
    const Tensor w = Tensor::matrix({{1, -2}, {0.5, 3}, {2, 1}});
    SpectralNormState a = init_spectral_state(w, rng);
    SpectralNormState b = a;
    const Tensor t = spectral_normalize(w, a, 2);
    const ad::Var v = spectral_normalize(ad::parameter(w), b, 2);
    EXPECT_LE(max_abs_diff(t, v.value()), 1e-15);
    // With u, v frozen, d sigma / dW = u v^T.
    const SpectralNormState frozen = b;
    EXPECT_LE(ad::finite_diff_check([&](const ad::Var& x) { return ad::sum(ad::square(spectral_normalize(x, frozen))); },
                                    w, 1e-6),
              1e-5);
}

TEST(Penalty, WorkedExamples) {
    std::mt19937_64 rng(1);
    const Tensor reals = random_batch(8, rng), fakes = random_batch(8, rng);
    const auto with_norm = [](double s) {
        return [s](const ad::Var& x) { return linear_batch(Tensor::vector({0.0, s}), 0.3, x); };
    };
    PenaltyConfig cfg;
    EXPECT_NEAR(gradient_penalty(with_norm(1.0), reals, fakes, cfg, rng).item(), 0.0, 1e-14);
    EXPECT_NEAR(gradient_penalty(with_norm(3.0), reals, fakes, cfg, rng).item(), 40.0, 1e-12);
    cfg.one_sided = true;
    EXPECT_EQ(gradient_penalty(with_norm(0.5), reals, fakes, cfg, rng).item(), 0.0);
    EXPECT_NEAR(gradient_penalty(with_norm(3.0), reals, fakes, cfg, rng).item(), 40.0, 1e-12);
    const PenaltyConfig r1 = PenaltyConfig::r1(10.0);
    EXPECT_EQ(r1.delta, 0.0);
    EXPECT_EQ(r1.sampling, PenaltySampling::reals);
    EXPECT_NEAR(gradient_penalty(with_norm(2.0), reals, fakes, r1, rng).item(), 40.0, 1e-12);
}

TEST(Penalty, Errors) {
    std::mt19937_64 rng(1);
    const auto d = [](const ad::Var& x) { return linear_batch(Tensor::vector({1.0, 0.0}), 0.0, x); };
    EXPECT_THROW(gradient_penalty(d, Tensor(Shape{0, 2}), Tensor(Shape{0, 2}), {}, rng), PreconditionError);
    EXPECT_THROW(gradient_penalty(d, random_batch(3, rng), random_batch(4, rng), {}, rng), ShapeError);
    PenaltyConfig bad;
    bad.lambda = -1.0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Penalty, DifferentiableInParameters) {
    std::mt19937_64 rng(10);
    const nn::Mlp net = random_net(rng, 1, 5, nn::Activation::leaky_relu);
    const Tensor reals = random_batch(6, rng), fakes = random_batch(6, rng);
    const Tensor w0 = net.layers()[0].weight;
    const std::uint64_t seed = rng();
    const auto pen = [&](const ad::Var& w) {
        std::mt19937_64 r(seed);
        const auto d = [&](const ad::Var& x) {
            nn::BoundMlp b = nn::bind(net, false);
            b.weights[0] = w;
            return ad::reshape(nn::forward(b, x), Shape{x.shape()[0]});
        };
        return gradient_penalty(d, reals, fakes, {}, r);
    };
    EXPECT_LE(ad::finite_diff_check(pen, w0, 1e-6), 1e-5);
}

TEST(WeightClip, ClampIdempotent) {
    nn::Mlp net({nn::Layer{Tensor::matrix({{5.0, -0.005}}), Tensor::vector({-3.0}), nn::Activation::identity, 0.2}});
    const nn::Mlp once = weight_clip(net, 0.01);
    EXPECT_EQ(once.layers()[0].weight, Tensor::matrix({{0.01, -0.005}}));
    EXPECT_EQ(once.layers()[0].bias, Tensor::vector({-0.01}));
    EXPECT_TRUE(weight_clip(once, 0.01) == once);
    EXPECT_THROW(weight_clip(net, 0.0), std::exception);
}
