// Compiled with -mavx2 only; never called unless the CPU reports AVX2.
#include "mach/kernels.hpp"

#include <immintrin.h>

namespace mach::kernels::avx2 {
namespace {

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d a = _mm256_set1_pd(alpha);
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        const __m256d prod = _mm256_mul_pd(a, _mm256_loadu_pd(x + k));
        _mm256_storeu_pd(y + k, _mm256_add_pd(_mm256_loadu_pd(y + k), prod));
    }
    for (; k < n; ++k) {
        y[k] += alpha * x[k];
    }
}

void scale(double alpha, double* y, std::size_t n) {
    const __m256d a = _mm256_set1_pd(alpha);
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        _mm256_storeu_pd(y + k, _mm256_mul_pd(_mm256_loadu_pd(y + k), a));
    }
    for (; k < n; ++k) {
        y[k] *= alpha;
    }
}

void gather_add(const double* row, const std::uint32_t* idx, double* acc, std::size_t n) {
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        const __m128i vi = _mm_loadu_si128(reinterpret_cast<const __m128i*>(idx + k));
        const __m256d g = _mm256_i32gather_pd(row, vi, 8);
        _mm256_storeu_pd(acc + k, _mm256_add_pd(_mm256_loadu_pd(acc + k), g));
    }
    for (; k < n; ++k) {
        acc[k] += row[idx[k]];
    }
}

void gather_min(const double* row, const std::uint32_t* idx, double* acc, std::size_t n) {
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        const __m128i vi = _mm_loadu_si128(reinterpret_cast<const __m128i*>(idx + k));
        const __m256d g = _mm256_i32gather_pd(row, vi, 8);
        // min_pd(a, b) returns b unless a < b
        _mm256_storeu_pd(acc + k, _mm256_min_pd(g, _mm256_loadu_pd(acc + k)));
    }
    for (; k < n; ++k) {
        const double v = row[idx[k]];
        acc[k] = v < acc[k] ? v : acc[k];
    }
}

const KernelTable kTable{Isa::Avx2, axpy, scale, gather_add, gather_min};

}  // namespace

const KernelTable& table() { return kTable; }

}  // namespace mach::kernels::avx2
