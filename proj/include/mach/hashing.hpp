#pragma once
// Seeded 2-universal hash functions mapping class ids [0, K) to buckets [0, B).

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace mach {

enum class HashKind : std::uint32_t {
    // ((a*x + b) mod p) mod B, any B >= 2
    CarterWegman = 0,
    // (a*x mod 2^64) & (B - 1), a odd, B a power of two
    OddMultiplier = 1,
};

std::string_view hash_kind_name(HashKind kind);
// Accepts "carter-wegman" / "cw" and "odd-multiplier" / "odd".
HashKind parse_hash_kind(std::string_view name);

// 2^61 - 1. Default modulus for CarterWegman specs.
inline constexpr std::uint64_t kMersenne61 = (std::uint64_t{1} << 61) - 1;

struct HashSpec {
    HashKind kind = HashKind::CarterWegman;
    std::uint64_t a = 1;
    std::uint64_t b = 0;
    std::uint64_t p = kMersenne61;  // unused by OddMultiplier
    std::uint64_t buckets = 2;
    std::uint64_t universe = 2;

    // Throws std::invalid_argument when a construction invariant is violated.
    void validate() const;

    bool operator==(const HashSpec&) const = default;
};

// Builds and validates a spec from explicit parameters.
HashSpec make_carter_wegman(std::uint64_t a, std::uint64_t b, std::uint64_t p, std::uint64_t buckets,
                            std::uint64_t universe);
HashSpec make_odd_multiplier(std::uint64_t a, std::uint64_t buckets, std::uint64_t universe);

// R independent specs. Function r depends only on (seed, r, K, B, kind), so
// growing R keeps the first functions unchanged.
std::vector<HashSpec> make_hash_family(std::uint64_t universe, std::uint64_t buckets, std::size_t count,
                                       std::uint64_t seed, HashKind kind = HashKind::CarterWegman);

// Throws std::out_of_range for class >= spec.universe.
std::uint64_t hash_class(const HashSpec& spec, std::uint64_t cls);

// Unchecked fast path; caller guarantees cls < spec.universe.
inline std::uint64_t hash_class_unchecked(const HashSpec& spec, std::uint64_t cls) {
    if (spec.kind == HashKind::OddMultiplier) {
        return (spec.a * cls) & (spec.buckets - 1);
    }
    const unsigned __int128 v = static_cast<unsigned __int128>(spec.a) * cls + spec.b;
    return static_cast<std::uint64_t>(v % spec.p) % spec.buckets;
}

// Row-major [specs.size()][universe] table of bucket ids.
std::vector<std::uint32_t> bucket_table(std::span<const HashSpec> specs, std::uint64_t universe);

bool is_prime(std::uint64_t n);

// splitmix64 finalizer; also used for other seeded streams in the library.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace mach
