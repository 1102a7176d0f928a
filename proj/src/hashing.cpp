#include "mach/hashing.hpp"

#include <limits>
#include <stdexcept>
#include <string>

namespace mach {
namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t mulmod(std::uint64_t x, std::uint64_t y, std::uint64_t m) {
    return static_cast<std::uint64_t>(static_cast<unsigned __int128>(x) * y % m);
}

std::uint64_t powmod(std::uint64_t base, std::uint64_t exp, std::uint64_t m) {
    std::uint64_t result = 1 % m;
    base %= m;
    while (exp > 0) {
        if (exp & 1) {
            result = mulmod(result, base, m);
        }
        base = mulmod(base, base, m);
        exp >>= 1;
    }
    return result;
}

bool is_power_of_two(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

// Counter-based stream: draw k of function r is a pure function of (seed, r, k).
class SplitStream {
public:
    SplitStream(std::uint64_t seed, std::uint64_t index)
        : state_(splitmix64(splitmix64(seed) ^ splitmix64(index * kGolden + 1))) {}

    std::uint64_t next() {
        state_ += kGolden;
        return splitmix64(state_);
    }

    // Uniform in [0, bound) by rejection.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t v = next();
        while (v >= limit) {
            v = next();
        }
        return v % bound;
    }

private:
    std::uint64_t state_;
};

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

bool is_prime(std::uint64_t n) {
    if (n < 2) {
        return false;
    }
    for (std::uint64_t small : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
        if (n % small == 0) {
            return n == small;
        }
    }
    std::uint64_t d = n - 1;
    int s = 0;
    while ((d & 1) == 0) {
        d >>= 1;
        ++s;
    }
    // Deterministic Miller-Rabin for all 64-bit n.
    for (std::uint64_t witness : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
        std::uint64_t x = powmod(witness, d, n);
        if (x == 1 || x == n - 1) {
            continue;
        }
        bool composite = true;
        for (int r = 1; r < s; ++r) {
            x = mulmod(x, x, n);
            if (x == n - 1) {
                composite = false;
                break;
            }
        }
        if (composite) {
            return false;
        }
    }
    return true;
}

std::string_view hash_kind_name(HashKind kind) {
    switch (kind) {
    case HashKind::CarterWegman:
        return "carter-wegman";
    case HashKind::OddMultiplier:
        return "odd-multiplier";
    }
    return "unknown";
}

HashKind parse_hash_kind(std::string_view name) {
    if (name == "carter-wegman" || name == "cw") {
        return HashKind::CarterWegman;
    }
    if (name == "odd-multiplier" || name == "odd") {
        return HashKind::OddMultiplier;
    }
    throw std::invalid_argument("unknown hash kind '" + std::string(name) + "'");
}

void HashSpec::validate() const {
    if (buckets < 2) {
        throw std::invalid_argument("hash spec needs at least 2 buckets, got " + std::to_string(buckets));
    }
    if (buckets > std::numeric_limits<std::uint32_t>::max()) {
        throw std::invalid_argument("bucket count exceeds 32-bit range");
    }
    if (universe < 1) {
        throw std::invalid_argument("hash spec universe must be positive");
    }
    switch (kind) {
    case HashKind::CarterWegman:
        if (p <= universe) {
            throw std::invalid_argument("carter-wegman prime p=" + std::to_string(p) +
                                        " must exceed universe K=" + std::to_string(universe));
        }
        if (!is_prime(p)) {
            throw std::invalid_argument("carter-wegman modulus " + std::to_string(p) + " is not prime");
        }
        if (a < 1 || a >= p) {
            throw std::invalid_argument("carter-wegman multiplier must lie in [1, p)");
        }
        if (b >= p) {
            throw std::invalid_argument("carter-wegman offset must lie in [0, p)");
        }
        break;
    case HashKind::OddMultiplier:
        if ((a & 1) == 0) {
            throw std::invalid_argument("odd-multiplier hash needs an odd multiplier");
        }
        if (!is_power_of_two(buckets)) {
            throw std::invalid_argument("odd-multiplier hash needs a power-of-two bucket count, got " +
                                        std::to_string(buckets));
        }
        break;
    default:
        throw std::invalid_argument("unknown hash kind");
    }
}

HashSpec make_carter_wegman(std::uint64_t a, std::uint64_t b, std::uint64_t p, std::uint64_t buckets,
                            std::uint64_t universe) {
    HashSpec spec{HashKind::CarterWegman, a, b, p, buckets, universe};
    spec.validate();
    return spec;
}

HashSpec make_odd_multiplier(std::uint64_t a, std::uint64_t buckets, std::uint64_t universe) {
    HashSpec spec{HashKind::OddMultiplier, a, 0, 0, buckets, universe};
    spec.validate();
    return spec;
}

std::vector<HashSpec> make_hash_family(std::uint64_t universe, std::uint64_t buckets, std::size_t count,
                                       std::uint64_t seed, HashKind kind) {
    if (buckets < 2) {
        throw std::invalid_argument("hash family needs B >= 2, got " + std::to_string(buckets));
    }
    if (count < 1) {
        throw std::invalid_argument("hash family needs R >= 1");
    }
    if (kind == HashKind::OddMultiplier && !is_power_of_two(buckets)) {
        throw std::invalid_argument("odd-multiplier hash needs a power-of-two bucket count, got " +
                                    std::to_string(buckets));
    }
    if (kind == HashKind::CarterWegman && universe >= kMersenne61) {
        throw std::invalid_argument("class universe too large for the 2^61-1 modulus");
    }

    std::vector<HashSpec> specs;
    specs.reserve(count);
    for (std::size_t r = 0; r < count; ++r) {
        SplitStream stream(seed, r);
        HashSpec spec;
        spec.kind = kind;
        spec.buckets = buckets;
        spec.universe = universe;
        if (kind == HashKind::CarterWegman) {
            spec.p = kMersenne61;
            spec.a = 1 + stream.below(kMersenne61 - 1);
            spec.b = stream.below(kMersenne61);
        } else {
            spec.p = 0;
            spec.a = stream.next() | 1;
            spec.b = 0;
        }
        spec.validate();
        specs.push_back(spec);
    }
    return specs;
}

std::uint64_t hash_class(const HashSpec& spec, std::uint64_t cls) {
    if (cls >= spec.universe) {
        throw std::out_of_range("class id " + std::to_string(cls) + " outside universe of size " +
                                std::to_string(spec.universe));
    }
    return hash_class_unchecked(spec, cls);
}

std::vector<std::uint32_t> bucket_table(std::span<const HashSpec> specs, std::uint64_t universe) {
    std::vector<std::uint32_t> table(specs.size() * universe);
    for (std::size_t r = 0; r < specs.size(); ++r) {
        if (specs[r].universe < universe) {
            throw std::invalid_argument("hash spec universe smaller than class count");
        }
        for (std::uint64_t i = 0; i < universe; ++i) {
            table[r * universe + i] = static_cast<std::uint32_t>(hash_class_unchecked(specs[r], i));
        }
    }
    return table;
}

}  // namespace mach
