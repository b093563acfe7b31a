#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "granlab/error.hpp"
#include "granlab/optim.hpp"

using namespace granlab;
using namespace granlab::optim;

namespace {

struct Quadratic {
    Tensor a;       // [n, n] positive definite
    Tensor center;  // [n]
    Tensor grad(const Tensor& x) const {
        const std::size_t n = center.size();
        Tensor g(Shape{n});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) g[i] += a.at(i, j) * (x[j] - center[j]);
        return g;
    }
};

Quadratic random_quadratic(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Tensor m(Shape{n, n});
    for (double& x : m.storage()) x = nd(rng);
    Tensor a = matmul(m, transpose(m));
    for (std::size_t i = 0; i < n; ++i) a.at(i, i) += 0.5;
    Tensor c(Shape{n});
    for (double& x : c.storage()) x = nd(rng);
    return {a, c};
}

std::vector<Tensor> adam_trajectory(const Quadratic& q, Tensor x, double scale, const AdamConfig& cfg, int steps) {
    std::vector<Tensor*> params{&x};
    AdamState st = make_adam_state(params);
    std::vector<Tensor> out;
    for (int s = 0; s < steps; ++s) {
        Tensor g = q.grad(x);
        for (double& v : g.storage()) v *= scale;
        const std::vector<Tensor> grads{g};
        adam_step(params, grads, st, cfg, cfg.alpha);
        out.push_back(x);
    }
    return out;
}

}  // namespace

TEST(Adam, FirstStepIsSignStep) {
    Tensor p = Tensor::vector({1.0, -2.0});
    std::vector<Tensor*> params{&p};
    AdamState st = make_adam_state(params);
    AdamConfig cfg;
    cfg.beta1 = 0.5;
    const std::vector<Tensor> g{Tensor::vector({3.0, -0.25})};
    adam_step(params, g, st, cfg, cfg.alpha);
    EXPECT_NEAR(p[0], 1.0 - cfg.alpha, 1e-12);
    EXPECT_NEAR(p[1], -2.0 + cfg.alpha, 1e-10);  // eps_adam / |g| shortens it slightly
    EXPECT_EQ(st.t, 1u);
}

TEST(Adam, ZeroGradientNoUpdate) {
    Tensor p = Tensor::vector({1.0, -2.0});
    std::vector<Tensor*> params{&p};
    AdamState st = make_adam_state(params);
    adam_step(params, std::vector<Tensor>{Tensor(Shape{2})}, st, {}, 1e-3);
    EXPECT_EQ(p, Tensor::vector({1.0, -2.0}));
}

TEST(Adam, ErrorsNameTheBlock) {
    Tensor p = Tensor::vector({1.0});
    std::vector<Tensor*> params{&p};
    AdamState st = make_adam_state(params);
    const std::vector<std::string> names{"D.layer0.weight"};
    try {
        adam_step(params, std::vector<Tensor>{Tensor::vector({NAN})}, st, {}, 1e-3, names);
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("D.layer0.weight"), std::string::npos);
    }
    EXPECT_THROW(adam_step(params, std::vector<Tensor>{Tensor::vector({1.0, 2.0})}, st, {}, 1e-3), ShapeError);
}

TEST(Adam, EpsilonEquivalenceUnderGradientScaling) {
    std::mt19937_64 rng(42);
    const Quadratic q = random_quadratic(6, rng);
    Tensor x0(Shape{6});
    for (double& x : x0.storage()) x = std::normal_distribution<double>(0.0, 2.0)(rng);
    for (double k : {0.0909, 0.83, 1.33}) {
        AdamConfig base;
        base.eps_adam = 1e-3;
        AdamConfig scaled = base;
        scaled.eps_adam = k * base.eps_adam;
        const auto a = adam_trajectory(q, x0, 1.0, base, 200);
        const auto b = adam_trajectory(q, x0, k, scaled, 200);
        double worst = 0.0;
        for (std::size_t s = 0; s < a.size(); ++s) worst = std::max(worst, max_abs_diff(a[s], b[s]));
        EXPECT_LE(worst, 1e-10) << "K=" << k;
    }
}

TEST(Adam, BoundedUpdateMagnitude) {
    std::mt19937_64 rng(3);
    const Quadratic q = random_quadratic(4, rng);
    Tensor x = Tensor::vector({5, -5, 3, 1});
    std::vector<Tensor*> params{&x};
    AdamConfig cfg;
    cfg.beta1 = 0.5;
    cfg.beta2 = 0.999;
    AdamState st = make_adam_state(params);
    for (int s = 0; s < 100; ++s) {
        const Tensor before = x;
        adam_step(params, std::vector<Tensor>{q.grad(x)}, st, cfg, cfg.alpha);
        for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LE(std::abs(x[i] - before[i]), cfg.alpha * (1 + 1e-12));
    }
}

TEST(Adam, LargeEpsilonSuppressesUpdate) {
    const double g = 1e-4;
    AdamConfig cfg;
    cfg.eps_adam = 1e-2;
    Tensor p = Tensor::vector({0.0});
    std::vector<Tensor*> params{&p};
    AdamState st = make_adam_state(params);
    for (int s = 0; s < 20; ++s) {
        const double before = p[0];
        adam_step(params, std::vector<Tensor>{Tensor::vector({g})}, st, cfg, cfg.alpha);
        EXPECT_LE(std::abs(p[0] - before), cfg.alpha * g / cfg.eps_adam * (1 + 1e-6));
    }
}

TEST(Adam, WithoutBiasCorrection) {
    Tensor p = Tensor::vector({0.0});
    std::vector<Tensor*> params{&p};
    AdamState st = make_adam_state(params);
    AdamConfig cfg;
    cfg.beta1 = 0.5;
    cfg.beta2 = 0.9;
    cfg.eps_adam = 0.0;
    cfg.bias_correction = false;
    adam_step(params, std::vector<Tensor>{Tensor::vector({2.0})}, st, cfg, 1.0);
    // m = 1, v = 0.4: step = 1 / sqrt(0.4).
    EXPECT_NEAR(p[0], -1.0 / std::sqrt(0.4), 1e-14);
}

TEST(Sgd, Examples) {
    Tensor p = Tensor::vector({1.0});
    std::vector<Tensor*> params{&p};
    sgd_step(params, std::vector<Tensor>{Tensor::vector({2.0})}, 0.0);
    EXPECT_EQ(p[0], 1.0);
    sgd_step(params, std::vector<Tensor>{Tensor::vector({2.0})}, 0.5);
    EXPECT_EQ(p[0], 0.0);
    Tensor a = Tensor::vector({3.0}), b = Tensor::vector({3.0});
    std::vector<Tensor*> pa{&a}, pb{&b};
    sgd_step(pa, std::vector<Tensor>{Tensor::vector({0.25})}, 0.5);
    sgd_step(pa, std::vector<Tensor>{Tensor::vector({0.25})}, 0.5);
    sgd_step(pb, std::vector<Tensor>{Tensor::vector({0.5})}, 0.5);
    EXPECT_DOUBLE_EQ(a[0], b[0]);
    EXPECT_THROW(sgd_step(pa, std::vector<Tensor>{Tensor::vector({INFINITY})}, 0.5), NumericError);
}

TEST(Schedule, LinearDecay) {
    const LrSchedule lin{ScheduleKind::linear_decay, 1000};
    EXPECT_EQ(lr_at(lin, 2e-4, 0), 2e-4);
    EXPECT_EQ(lr_at(lin, 2e-4, 1000), 0.0);
    EXPECT_DOUBLE_EQ(lr_at(lin, 2e-4, 500), 1e-4);
    EXPECT_THROW(lr_at(lin, 2e-4, 1001), std::exception);
    EXPECT_EQ(lr_at({ScheduleKind::constant, 0}, 3e-4, 123456), 3e-4);
    EXPECT_EQ(parse_schedule(schedule_name(ScheduleKind::linear_decay)), ScheduleKind::linear_decay);
}
