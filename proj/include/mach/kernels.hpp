#pragma once
// Data-parallel inner loops shared by training and inference.
//
// Every kernel is elementwise (no horizontal reductions), so the scalar and
// SIMD variants produce bit-identical results. Models trained on an AVX2
// host and a scalar host are byte-identical.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace mach::kernels {

enum class Isa { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa);

struct KernelTable {
    Isa isa;
    // y[k] += alpha * x[k]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // y[k] *= alpha
    void (*scale)(double alpha, double* y, std::size_t n);
    // acc[k] += row[idx[k]]
    void (*gather_add)(const double* row, const std::uint32_t* idx, double* acc, std::size_t n);
    // acc[k] = min(acc[k], row[idx[k]])
    void (*gather_min)(const double* row, const std::uint32_t* idx, double* acc, std::size_t n);
};

// ISAs compiled into this binary and supported by the running CPU.
std::vector<Isa> available_isas();

// Throws std::invalid_argument if the ISA is not available.
const KernelTable& kernels_for(Isa isa);

// Selected once per process: the widest available ISA, unless MACH_SIMD
// (scalar|avx2|neon|auto) says otherwise.
const KernelTable& active();

namespace scalar {
const KernelTable& table();
}
#if defined(MACH_HAVE_AVX2)
namespace avx2 {
const KernelTable& table();
}
#endif
#if defined(MACH_HAVE_NEON)
namespace neon {
const KernelTable& table();
}
#endif

// Span conveniences over the active table.
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), y.size());
}

inline void scale(double alpha, std::span<double> y) {
    active().scale(alpha, y.data(), y.size());
}

}  // namespace mach::kernels
