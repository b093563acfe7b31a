#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "granlab/tensor.hpp"

namespace granlab::ad {

enum class Op {
    leaf,
    add,
    sub,
    mul,
    div,
    safe_div,
    neg,
    add_scalar,
    mul_scalar,
    matmul,
    affine,
    relu,
    leaky_relu,
    tanh,
    sigmoid,
    softplus,
    log,
    exp,
    square,
    sqrt,
    sum,
    mean,
    expand,
    l2_norm,
    row_norm,
    row_sum,
    scale_rows,
    sum_rows,
    broadcast_rows,
    reshape,
    clamp,
};

std::string_view op_name(Op op);

/// Per-op parameters: `a` is the scalar operand, leaky slope or clamp low;
/// `b` is the clamp high; `shape` is the target of reshape/expand/broadcast.
struct OpAttrs {
    double a = 0.0;
    double b = 0.0;
    bool trans_a = false;
    bool trans_b = false;
    Shape shape{};
};

struct Node {
    Op op = Op::leaf;
    std::vector<std::shared_ptr<Node>> inputs;
    Tensor value;
    bool requires_grad = false;
    OpAttrs attrs;
};

/// Handle to a node of the recorded graph. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_->requires_grad; }
    Op op() const { return node_->op; }
    double item() const { return node_->value.item(); }

    bool defined() const { return node_ != nullptr; }
    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// A leaf that gradients can be taken against.
Var parameter(Tensor value);
/// A leaf that is never differentiated.
Var constant(Tensor value);
/// Same value, cut from the graph.
Var detach(const Var& v);

/// Evaluates `op` on `inputs` eagerly and records the node when any input
/// requires a gradient and recording is enabled on this thread.
Var record(Op op, std::span<const Var> inputs, OpAttrs attrs = {});

/// Disables recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
/// a / b elementwise, with 0 wherever b == 0.
Var safe_div(const Var& a, const Var& b);
Var neg(const Var& a);
Var add_scalar(const Var& a, double c);
Var mul_scalar(const Var& a, double c);
Var matmul(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false);
/// W x + b for W [out, in], b [out], and x either [in] or a batch [B, in].
Var affine(const Var& w, const Var& x, const Var& b);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var log(const Var& a);
Var exp(const Var& a);
Var square(const Var& a);
Var sqrt(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
/// Repeats a single-element tensor to `shape`.
Var expand(const Var& a, Shape shape);
/// Euclidean norm over all elements; its gradient at the zero vector is zero.
Var l2_norm(const Var& a);
/// [B, d] -> [B] Euclidean norm of every row.
Var row_norm(const Var& a);
/// [B, d] -> [B]
Var row_sum(const Var& a);
/// [B, d] x [B] -> [B, d], row i scaled by s[i].
Var scale_rows(const Var& x, const Var& s);
/// [B, d] -> [d]
Var sum_rows(const Var& a);
/// [d] -> [rows, d]
Var broadcast_rows(const Var& a, std::size_t rows);
Var reshape(const Var& a, Shape shape);
Var clamp(const Var& a, double lo, double hi);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator+(const Var& a, double c) { return add_scalar(a, c); }
inline Var operator*(const Var& a, double c) { return mul_scalar(a, c); }
inline Var operator*(double c, const Var& a) { return mul_scalar(a, c); }

/// Gradients of a scalar output, aligned with the `wrt` list it was built from.
class GradMap {
public:
    GradMap() = default;
    GradMap(std::vector<const Node*> keys, std::vector<Var> grads);

    std::size_t size() const { return grads_.size(); }
    const Var& operator[](std::size_t i) const { return grads_[i]; }
    /// Throws if `target` was not part of the wrt list.
    const Var& at(const Var& target) const;
    const std::vector<Var>& all() const { return grads_; }

private:
    std::vector<const Node*> keys_;
    std::vector<Var> grads_;
};

/// Reverse-mode sweep from `output` (which must hold exactly one element).
///
/// Targets unreachable from the output get an all-zero gradient. With
/// `create_graph`, every gradient is itself a recorded node that can be
/// differentiated again; otherwise gradients are constants.
///
/// Kink conventions: relu'(0) = 0, leaky_relu'(0) = slope, the gradient of a
/// norm at the zero vector is zero.
GradMap backward(const Var& output, std::span<const Var> wrt, bool create_graph = false);
GradMap backward(const Var& output, std::initializer_list<Var> wrt, bool create_graph = false);

/// Max coordinatewise relative error between the reverse-mode gradient of
/// `f` at `point` and central differences of step `step`; the denominator is
/// max(|analytic|, 1e-8). Throws NumericError naming the coordinate when a
/// non-finite value is met.
double finite_diff_check(const std::function<Var(const Var&)>& f, const Tensor& point, double step);

}  // namespace granlab::ad
