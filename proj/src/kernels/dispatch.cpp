#include "mach/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace mach::kernels {
namespace {

bool cpu_supports(Isa isa) {
    switch (isa) {
    case Isa::Scalar:
        return true;
    case Isa::Avx2:
#if defined(MACH_HAVE_AVX2)
        return __builtin_cpu_supports("avx2");
#else
        return false;
#endif
    case Isa::Neon:
#if defined(MACH_HAVE_NEON)
        return true;
#else
        return false;
#endif
    }
    return false;
}

const KernelTable& select_from_env() {
    const char* env = std::getenv("MACH_SIMD");
    const std::string choice = env ? env : "auto";
    if (choice == "scalar") {
        return scalar::table();
    }
    if (choice == "avx2") {
        return kernels_for(Isa::Avx2);
    }
    if (choice == "neon") {
        return kernels_for(Isa::Neon);
    }
    if (choice != "auto" && !choice.empty()) {
        throw std::invalid_argument("MACH_SIMD must be one of scalar|avx2|neon|auto, got '" + choice + "'");
    }
    const auto isas = available_isas();
    return kernels_for(isas.back());
}

}  // namespace

std::string_view isa_name(Isa isa) {
    switch (isa) {
    case Isa::Scalar:
        return "scalar";
    case Isa::Avx2:
        return "avx2";
    case Isa::Neon:
        return "neon";
    }
    return "unknown";
}

std::vector<Isa> available_isas() {
    std::vector<Isa> out;
    for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon}) {
        if (cpu_supports(isa)) {
            out.push_back(isa);
        }
    }
    return out;
}

const KernelTable& kernels_for(Isa isa) {
    if (!cpu_supports(isa)) {
        throw std::invalid_argument("kernel ISA not available: " + std::string(isa_name(isa)));
    }
    switch (isa) {
#if defined(MACH_HAVE_AVX2)
    case Isa::Avx2:
        return avx2::table();
#endif
#if defined(MACH_HAVE_NEON)
    case Isa::Neon:
        return neon::table();
#endif
    default:
        return scalar::table();
    }
}

const KernelTable& active() {
    static const KernelTable& table = select_from_env();
    return table;
}

}  // namespace mach::kernels
