#include "granlab/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace granlab::kernels {
namespace {

void gemm_row(std::size_t i, GemmDims d, bool trans_a, bool trans_b, const double* a, const double* b,
              double* c) {
    double* crow = c + i * d.n;
    if (!trans_b) {
        for (std::size_t j = 0; j < d.n; ++j) crow[j] = 0.0;
        for (std::size_t p = 0; p < d.k; ++p) {
            const double av = trans_a ? a[p * d.m + i] : a[i * d.k + p];
            const double* brow = b + p * d.n;
            for (std::size_t j = 0; j < d.n; ++j) crow[j] += av * brow[j];
        }
        return;
    }
    for (std::size_t j = 0; j < d.n; ++j) {
        const double* bcol = b + j * d.k;
        double s = 0.0;
        if (trans_a) {
            for (std::size_t p = 0; p < d.k; ++p) s += a[p * d.m + i] * bcol[p];
        } else {
            const double* arow = a + i * d.k;
            for (std::size_t p = 0; p < d.k; ++p) s += arow[p] * bcol[p];
        }
        crow[j] = s;
    }
}

}  // namespace

namespace serial {
void gemm(GemmDims d, bool trans_a, bool trans_b, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
    for (std::size_t i = 0; i < d.m; ++i) gemm_row(i, d, trans_a, trans_b, a.data(), b.data(), c.data());
}
}  // namespace serial

namespace omp {
void gemm(GemmDims d, bool trans_a, bool trans_b, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
    const long m = static_cast<long>(d.m);
    const double* ap = a.data();
    const double* bp = b.data();
    double* cp = c.data();
#pragma omp parallel for schedule(static)
    for (long i = 0; i < m; ++i) gemm_row(static_cast<std::size_t>(i), d, trans_a, trans_b, ap, bp, cp);
}
}  // namespace omp

std::size_t parallel_threshold() { return std::size_t{1} << 18; }

void gemm(GemmDims d, bool trans_a, bool trans_b, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
    if (openmp_enabled() && max_threads() > 1 && d.m > 1 && d.m * d.n * d.k >= parallel_threshold()) {
        omp::gemm(d, trans_a, trans_b, a, b, c);
    } else {
        serial::gemm(d, trans_a, trans_b, a, b, c);
    }
}

bool openmp_enabled() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace granlab::kernels
