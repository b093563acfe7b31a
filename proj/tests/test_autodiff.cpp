#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "granlab/autodiff.hpp"
#include "granlab/error.hpp"

using namespace granlab;
using namespace granlab::ad;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -3.0, double hi = 3.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(std::move(s));
    for (double& x : t.storage()) x = u(rng);
    return t;
}

}  // namespace

TEST(Record, ForwardExamples) {
    const Var y = affine(constant(Tensor::matrix({{2}})), constant(Tensor::vector({1})), constant(Tensor::vector({-1})));
    EXPECT_EQ(y.value(), Tensor::vector({1}));
    EXPECT_EQ(relu(constant(Tensor::vector({-3, 0, 5}))).value(), Tensor::vector({0, 0, 5}));
    EXPECT_NEAR(softplus(constant(Tensor::vector({0}))).value()[0], std::log(2.0), 1e-15);
}

TEST(Record, ShapeMismatchNamesOpAndShapes) {
    try {
        add(constant(Tensor(Shape{2})), constant(Tensor(Shape{3})));
        FAIL();
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("add"), std::string::npos);
        EXPECT_NE(msg.find("[2]"), std::string::npos);
        EXPECT_NE(msg.find("[3]"), std::string::npos);
    }
    EXPECT_THROW(matmul(constant(Tensor(Shape{2, 3})), constant(Tensor(Shape{2, 3}))), ShapeError);
}

TEST(Backward, LinearGradient) {
    const Var w = constant(Tensor::vector({3, 4}));
    const Var x = parameter(Tensor::vector({1, 1}));
    const GradMap g = backward(sum(w * x), {x});
    EXPECT_EQ(g[0].value(), Tensor::vector({3, 4}));
}

TEST(Backward, DoubleBackpropNormOfInputGradient) {
    const Var w = parameter(Tensor::vector({3, 4}));
    const Var x = parameter(Tensor::vector({1, 1}));
    const Var gx = backward(sum(w * x), {x}, true)[0];
    const Var n = l2_norm(gx);
    EXPECT_DOUBLE_EQ(n.item(), 5.0);
    const Tensor gw = backward(n, {w})[0].value();
    EXPECT_NEAR(gw[0], 0.6, 1e-15);
    EXPECT_NEAR(gw[1], 0.8, 1e-15);
}

TEST(Backward, KinkConventions) {
    const Var x = parameter(Tensor::vector({0.0}));
    EXPECT_EQ(backward(sum(relu(x)), {x})[0].value()[0], 0.0);
    EXPECT_EQ(backward(sum(leaky_relu(x, 0.2)), {x})[0].value()[0], 0.2);
    const Var z = parameter(Tensor::vector({0.0, 0.0}));
    const Tensor g = backward(l2_norm(z), {z})[0].value();
    EXPECT_EQ(g, Tensor::vector({0.0, 0.0}));
}

TEST(Backward, UnreachableTargetGetsZero) {
    const Var a = parameter(Tensor::vector({1, 2}));
    const Var b = parameter(Tensor::matrix({{1, 2}, {3, 4}}));
    const GradMap g = backward(sum(square(a)), {a, b});
    EXPECT_EQ(g[1].value(), Tensor(Shape{2, 2}));
    EXPECT_EQ(g.at(b).value().shape(), b.shape());
}

TEST(Backward, RejectsNonScalarOutput) {
    const Var a = parameter(Tensor::vector({1, 2}));
    EXPECT_THROW(backward(a, {a}), ShapeError);
}

TEST(Backward, Deterministic) {
    std::mt19937_64 rng(1);
    const Tensor xv = random_tensor({4, 3}, rng);
    const Tensor wv = random_tensor({2, 3}, rng);
    const auto run = [&] {
        const Var x = parameter(xv), w = parameter(wv);
        const Var y = sum(softplus(affine(w, x, constant(Tensor(Shape{2})))));
        const GradMap g = backward(y, {x, w});
        return std::make_tuple(y.item(), g[0].value(), g[1].value());
    };
    EXPECT_EQ(run(), run());
}

TEST(Backward, NoGradGuardStopsRecording) {
    const Var a = parameter(Tensor::vector({1}));
    {
        NoGradGuard guard;
        EXPECT_FALSE(grad_enabled());
        EXPECT_FALSE((a * a).requires_grad());
    }
    EXPECT_TRUE(grad_enabled());
    EXPECT_TRUE((a * a).requires_grad());
}

TEST(FiniteDiff, WorkedExamples) {
    EXPECT_LE(finite_diff_check([](const Var& x) { return sum(square(x)); }, Tensor::vector({1, 2}), 1e-5), 1e-6);
    EXPECT_LE(finite_diff_check(
                  [](const Var& x) { return sum(constant(Tensor::vector({2, -3, 0.5})) * x); },
                  Tensor::vector({0.3, 1.1, -2}), 0.7),
              1e-10);
    const Var x = parameter(Tensor::vector({0.0}));
    EXPECT_DOUBLE_EQ(backward(sum(sigmoid(x)), {x})[0].value()[0], 0.25);
    EXPECT_LE(finite_diff_check([](const Var& v) { return sum(sigmoid(v)); }, Tensor::vector({0.0}), 1e-5), 1e-6);
}

TEST(FiniteDiff, Errors) {
    const auto f = [](const Var& x) { return sum(log(x)); };
    EXPECT_THROW(finite_diff_check(f, Tensor::vector({1.0}), 0.0), PreconditionError);
    try {
        finite_diff_check(f, Tensor::vector({1.0, 1e-7}), 1e-5);
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos);
    }
}

// Every differentiable op against central differences at random points in [-3, 3].
TEST(FiniteDiff, EveryOp) {
    std::mt19937_64 rng(11);
    const Tensor c3 = random_tensor({3}, rng);
    const Tensor rows = random_tensor({4, 3}, rng);
    const Tensor mat = random_tensor({3, 2}, rng);
    const Tensor bias = random_tensor({2}, rng);
    using F = std::function<Var(const Var&)>;
    const std::vector<std::pair<std::string, F>> cases = {
        {"add", [&](const Var& x) { return sum(square(x + constant(c3))); }},
        {"sub", [&](const Var& x) { return sum(square(x - constant(c3))); }},
        {"mul", [&](const Var& x) { return sum(x * x * constant(c3)); }},
        {"div", [&](const Var& x) { return sum(x / add_scalar(square(x), 1.0)); }},
        {"safe_div", [&](const Var& x) { return sum(safe_div(x, add_scalar(square(x), 0.5))); }},
        {"neg", [&](const Var& x) { return sum(square(-x)); }},
        {"scalar", [&](const Var& x) { return sum(square(mul_scalar(add_scalar(x, 0.5), 1.7))); }},
        {"tanh", [&](const Var& x) { return sum(tanh(x)); }},
        {"sigmoid", [&](const Var& x) { return sum(sigmoid(x)); }},
        {"softplus", [&](const Var& x) { return sum(softplus(x)); }},
        {"log", [&](const Var& x) { return sum(log(add_scalar(square(x), 1.0))); }},
        {"exp", [&](const Var& x) { return sum(exp(mul_scalar(x, 0.3))); }},
        {"sqrt", [&](const Var& x) { return sum(sqrt(add_scalar(square(x), 1.0))); }},
        {"mean", [&](const Var& x) { return mean(square(x)); }},
        {"l2_norm", [&](const Var& x) { return l2_norm(x); }},
        {"expand", [&](const Var& x) { return sum(square(expand(mean(x), Shape{5}))); }},
        {"relu", [&](const Var& x) { return sum(square(relu(x))); }},
        {"leaky", [&](const Var& x) { return sum(square(leaky_relu(x, 0.2))); }},
        {"clamp", [&](const Var& x) { return sum(square(clamp(x, -1.0, 1.0))); }},
    };
    for (const auto& [name, f] : cases) {
        for (int trial = 0; trial < 5; ++trial) {
            const Tensor p = random_tensor({3}, rng);
            EXPECT_LE(finite_diff_check(f, p, 1e-6), 1e-5) << name;
        }
    }
    const std::vector<std::pair<std::string, F>> matrix_cases = {
        {"matmul", [&](const Var& x) { return sum(square(matmul(x, constant(mat)))); }},
        {"matmul_ta", [&](const Var& x) { return sum(square(matmul(x, constant(rows), true, false))); }},
        {"matmul_tb", [&](const Var& x) { return sum(square(matmul(constant(rows), x, false, true))); }},
        {"affine", [&](const Var& x) { return sum(square(affine(constant(transpose(mat)), x, constant(bias)))); }},
        {"row_norm", [&](const Var& x) { return sum(row_norm(x)); }},
        {"row_sum", [&](const Var& x) { return sum(square(row_sum(x))); }},
        {"scale_rows", [&](const Var& x) { return sum(square(scale_rows(x, row_sum(x)))); }},
        {"sum_rows", [&](const Var& x) { return sum(square(sum_rows(x))); }},
        {"broadcast", [&](const Var& x) { return sum(square(x * broadcast_rows(sum_rows(x), 4))); }},
        {"reshape", [&](const Var& x) { return sum(square(matmul(reshape(x, Shape{3, 4}), constant(rows)))); }},
    };
    for (const auto& [name, f] : matrix_cases) {
        for (int trial = 0; trial < 3; ++trial) {
            EXPECT_LE(finite_diff_check(f, random_tensor({4, 3}, rng), 1e-6), 1e-5) << name;
        }
    }
    // Weight-side gradients of affine.
    const Tensor xb = random_tensor({4, 3}, rng);
    EXPECT_LE(finite_diff_check([&](const Var& w) { return sum(square(affine(w, constant(xb), constant(bias)))); },
                                random_tensor({2, 3}, rng), 1e-6),
              1e-5);
    EXPECT_LE(finite_diff_check(
                  [&](const Var& b) { return sum(square(affine(constant(transpose(mat)), constant(xb), b))); },
                  random_tensor({2}, rng), 1e-6),
              1e-5);
}

// Hessian-vector style check: gradient of ||grad_x f||^2 over theta.
TEST(DoubleBackprop, GradientOfSquaredInputGradient) {
    std::mt19937_64 rng(7);
    const Tensor x0 = random_tensor({3}, rng);
    const Tensor b0 = random_tensor({4}, rng);
    const Tensor v0 = random_tensor({1, 4}, rng);
    const auto g_of_theta = [&](const Var& w) {
        const Var x = parameter(x0);
        const Var f = sum(affine(constant(v0), tanh(affine(w, x, constant(b0))), constant(Tensor(Shape{1}))));
        const Var gx = backward(f, {x}, true)[0];
        return sum(square(gx));
    };
    EXPECT_LE(finite_diff_check(g_of_theta, random_tensor({4, 3}, rng), 1e-5), 1e-5);
}

TEST(DoubleBackprop, ThirdOrderThroughCubic) {
    // f = x^3: f' = 3x^2, f'' = 6x, f''' = 6.
    const Var x = parameter(Tensor::vector({2.0}));
    const Var f = sum(x * x * x);
    const Var d1 = backward(f, {x}, true)[0];
    const Var d2 = backward(sum(d1), {x}, true)[0];
    const Var d3 = backward(sum(d2), {x}, true)[0];
    EXPECT_DOUBLE_EQ(d1.value()[0], 12.0);
    EXPECT_DOUBLE_EQ(d2.value()[0], 12.0);
    EXPECT_DOUBLE_EQ(d3.value()[0], 6.0);
}
