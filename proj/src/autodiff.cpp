#include "granlab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "granlab/error.hpp"
#include "granlab/kernels.hpp"

namespace granlab::ad {
namespace {

thread_local bool t_grad_enabled = true;

[[noreturn]] void shape_fail(Op op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + shape_str(a) + " and " +
                     shape_str(b));
}

[[noreturn]] void shape_fail(Op op, const Shape& a) {
    throw ShapeError(std::string(op_name(op)) + ": unsupported shape " + shape_str(a));
}

template <class F>
Tensor map1(const Tensor& x, F f) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return out;
}

template <class F>
Tensor map2(Op op, const Tensor& x, const Tensor& y, F f) {
    if (x.shape() != y.shape()) shape_fail(op, x.shape(), y.shape());
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
    return out;
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void require_rank(Op op, const Tensor& t, std::size_t rank) {
    if (t.rank() != rank) shape_fail(op, t.shape());
}

Tensor compute(Op op, const std::vector<const Tensor*>& in, const OpAttrs& at) {
    switch (op) {
        case Op::leaf:
            throw Error("record: leaf is not an operation");
        case Op::add:
            return map2(op, *in[0], *in[1], [](double x, double y) { return x + y; });
        case Op::sub:
            return map2(op, *in[0], *in[1], [](double x, double y) { return x - y; });
        case Op::mul:
            return map2(op, *in[0], *in[1], [](double x, double y) { return x * y; });
        case Op::div:
            return map2(op, *in[0], *in[1], [](double x, double y) { return x / y; });
        case Op::safe_div:
            return map2(op, *in[0], *in[1], [](double x, double y) { return y == 0.0 ? 0.0 : x / y; });
        case Op::neg:
            return map1(*in[0], [](double x) { return -x; });
        case Op::add_scalar:
            return map1(*in[0], [c = at.a](double x) { return x + c; });
        case Op::mul_scalar:
            return map1(*in[0], [c = at.a](double x) { return x * c; });
        case Op::matmul: {
            const Tensor& a = *in[0];
            const Tensor& b = *in[1];
            require_rank(op, a, 2);
            require_rank(op, b, 2);
            const std::size_t m = at.trans_a ? a.cols() : a.rows();
            const std::size_t ka = at.trans_a ? a.rows() : a.cols();
            const std::size_t kb = at.trans_b ? b.cols() : b.rows();
            const std::size_t n = at.trans_b ? b.rows() : b.cols();
            if (ka != kb) shape_fail(op, a.shape(), b.shape());
            Tensor out(Shape{m, n});
            kernels::gemm({m, n, ka}, at.trans_a, at.trans_b, a.data(), b.data(), out.data());
            return out;
        }
        case Op::affine: {
            const Tensor& w = *in[0];
            const Tensor& x = *in[1];
            const Tensor& b = *in[2];
            require_rank(op, w, 2);
            const std::size_t out_dim = w.rows(), in_dim = w.cols();
            if (b.shape() != Shape{out_dim}) shape_fail(op, w.shape(), b.shape());
            const bool batched = x.rank() == 2;
            if (!(x.rank() == 1 || batched)) shape_fail(op, x.shape());
            const std::size_t batch = batched ? x.shape()[0] : 1;
            const std::size_t xin = batched ? x.shape()[1] : x.shape()[0];
            if (xin != in_dim) shape_fail(op, w.shape(), x.shape());
            Tensor out(batched ? Shape{batch, out_dim} : Shape{out_dim});
            kernels::gemm({batch, out_dim, in_dim}, false, true, x.data(), w.data(), out.data());
            for (std::size_t r = 0; r < batch; ++r)
                for (std::size_t j = 0; j < out_dim; ++j) out[r * out_dim + j] += b[j];
            return out;
        }
        case Op::relu:
            return map1(*in[0], [](double x) { return x > 0.0 ? x : 0.0; });
        case Op::leaky_relu:
            return map1(*in[0], [s = at.a](double x) { return x > 0.0 ? x : s * x; });
        case Op::tanh:
            return map1(*in[0], [](double x) { return std::tanh(x); });
        case Op::sigmoid:
            return map1(*in[0], stable_sigmoid);
        case Op::softplus:
            return map1(*in[0], stable_softplus);
        case Op::log:
            return map1(*in[0], [](double x) { return std::log(x); });
        case Op::exp:
            return map1(*in[0], [](double x) { return std::exp(x); });
        case Op::square:
            return map1(*in[0], [](double x) { return x * x; });
        case Op::sqrt:
            return map1(*in[0], [](double x) { return std::sqrt(x); });
        case Op::sum: {
            double s = 0.0;
            for (double v : in[0]->data()) s += v;
            return Tensor::scalar(s);
        }
        case Op::mean: {
            double s = 0.0;
            for (double v : in[0]->data()) s += v;
            return Tensor::scalar(s / static_cast<double>(in[0]->size()));
        }
        case Op::expand:
            if (in[0]->size() != 1) shape_fail(op, in[0]->shape(), at.shape);
            return Tensor(at.shape, (*in[0])[0]);
        case Op::l2_norm: {
            double s = 0.0;
            for (double v : in[0]->data()) s += v * v;
            return Tensor::scalar(std::sqrt(s));
        }
        case Op::row_norm:
        case Op::row_sum: {
            const Tensor& x = *in[0];
            require_rank(op, x, 2);
            const std::size_t r = x.rows(), c = x.cols();
            Tensor out(Shape{r});
            for (std::size_t i = 0; i < r; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    const double v = x[i * c + j];
                    s += op == Op::row_norm ? v * v : v;
                }
                out[i] = op == Op::row_norm ? std::sqrt(s) : s;
            }
            return out;
        }
        case Op::scale_rows: {
            const Tensor& x = *in[0];
            const Tensor& s = *in[1];
            require_rank(op, x, 2);
            if (s.shape() != Shape{x.rows()}) shape_fail(op, x.shape(), s.shape());
            Tensor out(x.shape());
            const std::size_t c = x.cols();
            for (std::size_t i = 0; i < x.rows(); ++i)
                for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] * s[i];
            return out;
        }
        case Op::sum_rows: {
            const Tensor& x = *in[0];
            require_rank(op, x, 2);
            const std::size_t c = x.cols();
            Tensor out(Shape{c});
            for (std::size_t i = 0; i < x.rows(); ++i)
                for (std::size_t j = 0; j < c; ++j) out[j] += x[i * c + j];
            return out;
        }
        case Op::broadcast_rows: {
            const Tensor& x = *in[0];
            require_rank(op, x, 1);
            const std::size_t rows = at.shape.at(0), c = x.size();
            Tensor out(Shape{rows, c});
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[j];
            return out;
        }
        case Op::reshape:
            if (numel(at.shape) != in[0]->size()) shape_fail(op, in[0]->shape(), at.shape);
            return in[0]->reshaped(at.shape);
        case Op::clamp:
            return map1(*in[0], [lo = at.a, hi = at.b](double x) { return std::clamp(x, lo, hi); });
    }
    throw Error("record: unknown op");
}

std::size_t arity(Op op) {
    switch (op) {
        case Op::leaf:
            return 0;
        case Op::add:
        case Op::sub:
        case Op::mul:
        case Op::div:
        case Op::safe_div:
        case Op::matmul:
        case Op::scale_rows:
            return 2;
        case Op::affine:
            return 3;
        default:
            return 1;
    }
}

Tensor step_mask(const Tensor& x, double below) {
    return map1(x, [below](double v) { return v > 0.0 ? 1.0 : below; });
}

// Vector-Jacobian product of `node` for input `i`, built from recorded ops.
Var vjp(const std::shared_ptr<Node>& node, const Var& g, std::size_t i) {
    const Var self(node);
    const Var in0(node->inputs[0]);
    const OpAttrs& at = node->attrs;
    switch (node->op) {
        case Op::add:
            return g;
        case Op::sub:
            return i == 0 ? g : neg(g);
        case Op::mul:
            return mul(g, Var(node->inputs[1 - i]));
        case Op::div: {
            const Var den(node->inputs[1]);
            return i == 0 ? div(g, den) : neg(div(mul(g, self), den));
        }
        case Op::safe_div: {
            const Var den(node->inputs[1]);
            return i == 0 ? safe_div(g, den) : neg(safe_div(mul(g, self), den));
        }
        case Op::neg:
            return neg(g);
        case Op::add_scalar:
            return g;
        case Op::mul_scalar:
            return mul_scalar(g, at.a);
        case Op::matmul: {
            const Var a(node->inputs[0]);
            const Var b(node->inputs[1]);
            const bool ta = at.trans_a, tb = at.trans_b;
            if (i == 0) {
                if (!ta) return matmul(g, b, false, !tb);
                return tb ? matmul(b, g, true, true) : matmul(b, g, false, true);
            }
            if (!tb) return matmul(a, g, !ta, false);
            return ta ? matmul(g, a, true, true) : matmul(g, a, true, false);
        }
        case Op::affine: {
            const Var w(node->inputs[0]);
            const Var x(node->inputs[1]);
            const bool batched = x.shape().size() == 2;
            const Var g2 = batched ? g : reshape(g, Shape{1, g.shape()[0]});
            if (i == 0) {
                const Var x2 = batched ? x : reshape(x, Shape{1, x.shape()[0]});
                return matmul(g2, x2, true, false);
            }
            if (i == 1) {
                const Var dx = matmul(g2, w);
                return batched ? dx : reshape(dx, x.shape());
            }
            return sum_rows(g2);
        }
        case Op::relu:
            return mul(g, constant(step_mask(in0.value(), 0.0)));
        case Op::leaky_relu:
            return mul(g, constant(step_mask(in0.value(), at.a)));
        case Op::tanh:
            return mul(g, add_scalar(neg(square(self)), 1.0));
        case Op::sigmoid:
            return mul(g, mul(self, add_scalar(neg(self), 1.0)));
        case Op::softplus:
            return mul(g, sigmoid(in0));
        case Op::log:
            return div(g, in0);
        case Op::exp:
            return mul(g, self);
        case Op::square:
            return mul(g, mul_scalar(in0, 2.0));
        case Op::sqrt:
            return safe_div(mul_scalar(g, 0.5), self);
        case Op::sum:
            return expand(g, in0.shape());
        case Op::mean:
            return mul_scalar(expand(g, in0.shape()), 1.0 / static_cast<double>(in0.value().size()));
        case Op::expand:
            return reshape(sum(g), in0.shape());
        case Op::l2_norm:
            return mul(expand(safe_div(g, self), in0.shape()), in0);
        case Op::row_norm:
            return scale_rows(in0, safe_div(g, self));
        case Op::row_sum:
            return scale_rows(constant(Tensor(in0.shape(), 1.0)), g);
        case Op::scale_rows: {
            const Var s(node->inputs[1]);
            return i == 0 ? scale_rows(g, s) : row_sum(mul(g, in0));
        }
        case Op::sum_rows:
            return broadcast_rows(g, in0.shape()[0]);
        case Op::broadcast_rows:
            return sum_rows(g);
        case Op::reshape:
            return reshape(g, in0.shape());
        case Op::clamp: {
            const Tensor mask = map1(in0.value(), [lo = at.a, hi = at.b](double v) {
                return (v >= lo && v <= hi) ? 1.0 : 0.0;
            });
            return mul(g, constant(mask));
        }
        case Op::leaf:
            break;
    }
    throw Error("backward: no derivative for " + std::string(op_name(node->op)));
}

std::vector<std::shared_ptr<Node>> topo_order(const std::shared_ptr<Node>& root) {
    std::vector<std::shared_ptr<Node>> order;
    std::unordered_set<const Node*> seen;
    std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            const std::shared_ptr<Node>& child = n->inputs[next++];
            if (child->requires_grad && seen.insert(child.get()).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace

std::string_view op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::div: return "div";
        case Op::safe_div: return "safe_div";
        case Op::neg: return "neg";
        case Op::add_scalar: return "add_scalar";
        case Op::mul_scalar: return "mul_scalar";
        case Op::matmul: return "matmul";
        case Op::affine: return "affine";
        case Op::relu: return "relu";
        case Op::leaky_relu: return "leaky_relu";
        case Op::tanh: return "tanh";
        case Op::sigmoid: return "sigmoid";
        case Op::softplus: return "softplus";
        case Op::log: return "log";
        case Op::exp: return "exp";
        case Op::square: return "square";
        case Op::sqrt: return "sqrt";
        case Op::sum: return "sum";
        case Op::mean: return "mean";
        case Op::expand: return "expand";
        case Op::l2_norm: return "l2_norm";
        case Op::row_norm: return "row_norm";
        case Op::row_sum: return "row_sum";
        case Op::scale_rows: return "scale_rows";
        case Op::sum_rows: return "sum_rows";
        case Op::broadcast_rows: return "broadcast_rows";
        case Op::reshape: return "reshape";
        case Op::clamp: return "clamp";
    }
    return "unknown";
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

Var parameter(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
}

Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Var detach(const Var& v) { return constant(v.value()); }

Var record(Op op, std::span<const Var> inputs, OpAttrs attrs) {
    if (inputs.size() != arity(op)) {
        throw Error(std::string(op_name(op)) + ": expected " + std::to_string(arity(op)) + " inputs, got " +
                    std::to_string(inputs.size()));
    }
    std::vector<const Tensor*> values;
    values.reserve(inputs.size());
    bool needs_grad = false;
    for (const Var& v : inputs) {
        if (!v.defined()) throw Error(std::string(op_name(op)) + ": undefined input");
        values.push_back(&v.value());
        needs_grad = needs_grad || v.requires_grad();
    }
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value = compute(op, values, attrs);
    n->requires_grad = needs_grad && t_grad_enabled;
    if (n->requires_grad) {
        for (const Var& v : inputs) n->inputs.push_back(v.node());
    }
    n->attrs = std::move(attrs);
    return Var(std::move(n));
}

namespace {
Var rec1(Op op, const Var& a, OpAttrs at = {}) {
    const Var in[] = {a};
    return record(op, in, std::move(at));
}
Var rec2(Op op, const Var& a, const Var& b, OpAttrs at = {}) {
    const Var in[] = {a, b};
    return record(op, in, std::move(at));
}
}  // namespace

Var add(const Var& a, const Var& b) { return rec2(Op::add, a, b); }
Var sub(const Var& a, const Var& b) { return rec2(Op::sub, a, b); }
Var mul(const Var& a, const Var& b) { return rec2(Op::mul, a, b); }
Var div(const Var& a, const Var& b) { return rec2(Op::div, a, b); }
Var safe_div(const Var& a, const Var& b) { return rec2(Op::safe_div, a, b); }
Var neg(const Var& a) { return rec1(Op::neg, a); }
Var add_scalar(const Var& a, double c) { return rec1(Op::add_scalar, a, {.a = c}); }
Var mul_scalar(const Var& a, double c) { return rec1(Op::mul_scalar, a, {.a = c}); }
Var matmul(const Var& a, const Var& b, bool trans_a, bool trans_b) {
    return rec2(Op::matmul, a, b, {.trans_a = trans_a, .trans_b = trans_b});
}
Var affine(const Var& w, const Var& x, const Var& b) {
    const Var in[] = {w, x, b};
    return record(Op::affine, in);
}
Var relu(const Var& a) { return rec1(Op::relu, a); }
Var leaky_relu(const Var& a, double slope) { return rec1(Op::leaky_relu, a, {.a = slope}); }
Var tanh(const Var& a) { return rec1(Op::tanh, a); }
Var sigmoid(const Var& a) { return rec1(Op::sigmoid, a); }
Var softplus(const Var& a) { return rec1(Op::softplus, a); }
Var log(const Var& a) { return rec1(Op::log, a); }
Var exp(const Var& a) { return rec1(Op::exp, a); }
Var square(const Var& a) { return rec1(Op::square, a); }
Var sqrt(const Var& a) { return rec1(Op::sqrt, a); }
Var sum(const Var& a) { return rec1(Op::sum, a); }
Var mean(const Var& a) { return rec1(Op::mean, a); }
Var expand(const Var& a, Shape shape) { return rec1(Op::expand, a, {.shape = std::move(shape)}); }
Var l2_norm(const Var& a) { return rec1(Op::l2_norm, a); }
Var row_norm(const Var& a) { return rec1(Op::row_norm, a); }
Var row_sum(const Var& a) { return rec1(Op::row_sum, a); }
Var scale_rows(const Var& x, const Var& s) { return rec2(Op::scale_rows, x, s); }
Var sum_rows(const Var& a) { return rec1(Op::sum_rows, a); }
Var broadcast_rows(const Var& a, std::size_t rows) {
    return rec1(Op::broadcast_rows, a, {.shape = Shape{rows}});
}
Var reshape(const Var& a, Shape shape) { return rec1(Op::reshape, a, {.shape = std::move(shape)}); }
Var clamp(const Var& a, double lo, double hi) { return rec1(Op::clamp, a, {.a = lo, .b = hi}); }

GradMap::GradMap(std::vector<const Node*> keys, std::vector<Var> grads)
    : keys_(std::move(keys)), grads_(std::move(grads)) {}

const Var& GradMap::at(const Var& target) const {
    for (std::size_t i = 0; i < keys_.size(); ++i) {
        if (keys_[i] == target.node().get()) return grads_[i];
    }
    throw Error("GradMap: target was not differentiated against");
}

GradMap backward(const Var& output, std::span<const Var> wrt, bool create_graph) {
    if (!output.defined() || output.value().size() != 1) {
        throw ShapeError("backward: output must be scalar, got " +
                         (output.defined() ? shape_str(output.shape()) : std::string("undefined")));
    }
    std::unordered_map<const Node*, Var> grads;
    if (output.requires_grad()) {
        const bool previous = t_grad_enabled;
        t_grad_enabled = create_graph;
        try {
            const auto order = topo_order(output.node());
            // Only nodes with a path to some target need a gradient.
            std::unordered_set<const Node*> relevant;
            for (const Var& target : wrt) relevant.insert(target.node().get());
            for (const auto& n : order) {
                for (const auto& child : n->inputs) {
                    if (relevant.count(child.get())) {
                        relevant.insert(n.get());
                        break;
                    }
                }
            }
            grads.emplace(output.node().get(), constant(Tensor(output.shape(), 1.0)));
            for (auto it = order.rbegin(); it != order.rend(); ++it) {
                const std::shared_ptr<Node>& n = *it;
                auto found = grads.find(n.get());
                if (found == grads.end() || n->op == Op::leaf) continue;
                const Var g = found->second;
                for (std::size_t i = 0; i < n->inputs.size(); ++i) {
                    const auto& child = n->inputs[i];
                    if (!child->requires_grad || !relevant.count(child.get())) continue;
                    Var contrib = vjp(n, g, i);
                    auto [pos, inserted] = grads.try_emplace(child.get(), contrib);
                    if (!inserted) pos->second = add(pos->second, contrib);
                }
            }
        } catch (...) {
            t_grad_enabled = previous;
            throw;
        }
        t_grad_enabled = previous;
    }
    std::vector<const Node*> keys;
    std::vector<Var> result;
    keys.reserve(wrt.size());
    result.reserve(wrt.size());
    for (const Var& target : wrt) {
        keys.push_back(target.node().get());
        auto found = grads.find(target.node().get());
        result.push_back(found != grads.end() ? found->second : constant(Tensor(target.shape(), 0.0)));
    }
    return GradMap(std::move(keys), std::move(result));
}

GradMap backward(const Var& output, std::initializer_list<Var> wrt, bool create_graph) {
    return backward(output, std::span<const Var>(wrt.begin(), wrt.size()), create_graph);
}

double finite_diff_check(const std::function<Var(const Var&)>& f, const Tensor& point, double step) {
    if (!(step > 0.0)) throw PreconditionError("finite_diff_check: step must be positive");
    const Var x = parameter(point);
    const Var y = f(x);
    if (!std::isfinite(y.item())) throw NumericError("finite_diff_check: non-finite value at the base point");
    const Tensor analytic = backward(y, {x})[0].value();
    double worst = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        Tensor plus = point, minus = point;
        plus[i] += step;
        minus[i] -= step;
        // f may differentiate internally, so the probes stay leaves.
        const double fp = f(parameter(plus)).item();
        const double fm = f(parameter(minus)).item();
        const double numeric = (fp - fm) / (2.0 * step);
        if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
            throw NumericError("finite_diff_check: non-finite value at coordinate " + std::to_string(i));
        }
        const double denom = std::max(std::abs(analytic[i]), 1e-8);
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace granlab::ad
