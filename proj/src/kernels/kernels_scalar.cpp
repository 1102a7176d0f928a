#include "mach/kernels.hpp"

#include <algorithm>

namespace mach::kernels::scalar {
namespace {

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
        y[k] += alpha * x[k];
    }
}

void scale(double alpha, double* y, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
        y[k] *= alpha;
    }
}

void gather_add(const double* row, const std::uint32_t* idx, double* acc, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
        acc[k] += row[idx[k]];
    }
}

void gather_min(const double* row, const std::uint32_t* idx, double* acc, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
        // same operand order as _mm256_min_pd / vminq_f64 on non-NaN input
        const double v = row[idx[k]];
        acc[k] = v < acc[k] ? v : acc[k];
    }
}

const KernelTable kTable{Isa::Scalar, axpy, scale, gather_add, gather_min};

}  // namespace

const KernelTable& table() { return kTable; }

}  // namespace mach::kernels::scalar
