#pragma once

#include <cstddef>
#include <span>

namespace granlab::kernels {

/// C[m x n] = op(A)[m x k] * op(B)[k x n]. With trans_a, A is stored k x m;
/// with trans_b, B is stored n x k.
struct GemmDims {
    std::size_t m;
    std::size_t n;
    std::size_t k;
};

enum class Exec { serial, parallel };

namespace serial {
void gemm(GemmDims d, bool trans_a, bool trans_b, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
}

namespace omp {
// Rows of C are distributed over threads; each element is accumulated by a
// single thread in the same order as the serial kernel, so results match bitwise.
void gemm(GemmDims d, bool trans_a, bool trans_b, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
}

/// Dispatches to the OpenMP kernel once m*n*k crosses `parallel_threshold()`.
void gemm(GemmDims d, bool trans_a, bool trans_b, std::span<const double> a, std::span<const double> b,
          std::span<double> c);

std::size_t parallel_threshold();
bool openmp_enabled();
int max_threads();

}  // namespace granlab::kernels
