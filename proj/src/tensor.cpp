#include "granlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "granlab/error.hpp"
#include "granlab/kernels.hpp"

namespace granlab {

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (numel(shape_) != data_.size()) {
        throw ShapeError("tensor: shape " + shape_str(shape_) + " does not match " +
                         std::to_string(data_.size()) + " elements");
    }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("tensor: ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
    if (shape_.size() != 2) throw ShapeError("tensor: rows() on shape " + shape_str(shape_));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (shape_.size() != 2) throw ShapeError("tensor: cols() on shape " + shape_str(shape_));
    return shape_[1];
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("tensor: item() on shape " + shape_str(shape_));
    return data_[0];
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
    if (numel(shape) != data_.size()) {
        throw ShapeError("reshape: " + shape_str(shape_) + " -> " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

Tensor transpose(const Tensor& m) {
    const std::size_t r = m.rows(), c = m.cols();
    Tensor out(Shape{c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(j, i) = m.at(i, j);
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    Tensor out(Shape{a.rows(), b.cols()});
    kernels::gemm(kernels::GemmDims{a.rows(), b.cols(), a.cols()}, false, false, a.data(), b.data(),
                  out.data());
    return out;
}

Tensor identity(std::size_t n) {
    Tensor out(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) out.at(i, i) = 1.0;
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) {
        throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double frobenius_norm(const Tensor& m) {
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return std::sqrt(s);
}

}  // namespace granlab
