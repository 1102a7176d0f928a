// AArch64 only; NEON is baseline there so no runtime check is needed.
#include "mach/kernels.hpp"

#include <arm_neon.h>

namespace mach::kernels::neon {
namespace {

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const float64x2_t a = vdupq_n_f64(alpha);
    std::size_t k = 0;
    for (; k + 2 <= n; k += 2) {
        // separate mul and add: vfmaq would round differently from scalar
        const float64x2_t prod = vmulq_f64(a, vld1q_f64(x + k));
        vst1q_f64(y + k, vaddq_f64(vld1q_f64(y + k), prod));
    }
    for (; k < n; ++k) {
        y[k] += alpha * x[k];
    }
}

void scale(double alpha, double* y, std::size_t n) {
    const float64x2_t a = vdupq_n_f64(alpha);
    std::size_t k = 0;
    for (; k + 2 <= n; k += 2) {
        vst1q_f64(y + k, vmulq_f64(vld1q_f64(y + k), a));
    }
    for (; k < n; ++k) {
        y[k] *= alpha;
    }
}

void gather_add(const double* row, const std::uint32_t* idx, double* acc, std::size_t n) {
    std::size_t k = 0;
    for (; k + 2 <= n; k += 2) {
        float64x2_t g = vdupq_n_f64(row[idx[k]]);
        g = vsetq_lane_f64(row[idx[k + 1]], g, 1);
        vst1q_f64(acc + k, vaddq_f64(vld1q_f64(acc + k), g));
    }
    for (; k < n; ++k) {
        acc[k] += row[idx[k]];
    }
}

void gather_min(const double* row, const std::uint32_t* idx, double* acc, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
        const double v = row[idx[k]];
        acc[k] = v < acc[k] ? v : acc[k];
    }
}

const KernelTable kTable{Isa::Neon, axpy, scale, gather_add, gather_min};

}  // namespace

const KernelTable& table() { return kTable; }

}  // namespace mach::kernels::neon
