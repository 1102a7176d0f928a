#pragma once
// Planning and audit tools: how many repetitions R are needed, which class
// pairs a set of hash functions cannot separate, and what a configuration costs.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mach/hashing.hpp"

namespace mach {

struct PlanRequest {
    std::uint64_t classes = 2;  // K
    std::uint64_t buckets = 2;  // B
    double delta = 0.01;        // allowed failure probability
};

// ceil(2 ln(K / sqrt(delta)) / ln B), at least 1.
std::uint64_t plan_repetitions(const PlanRequest& req);

// Union bound K^2 (1/B)^R on Pr(some pair is indistinguishable).
double indistinguishable_pair_bound(std::uint64_t classes, std::uint64_t buckets, std::uint64_t repetitions);

using ClassPair = std::pair<std::uint32_t, std::uint32_t>;

// Every (i, j), i < j < K, with h_r(i) == h_r(j) for all r; sorted ascending.
std::vector<ClassPair> audit_distinguishability(std::span<const HashSpec> specs, std::uint64_t classes);

// O(K^2 R) pair scan; same result as audit_distinguishability.
std::vector<ClassPair> audit_distinguishability_brute_force(std::span<const HashSpec> specs, std::uint64_t classes);

struct CostReport {
    std::uint64_t model_floats = 0;      // B R d
    std::uint64_t bias_floats = 0;       // B R
    std::uint64_t inference_mults = 0;   // R B d + K R
    std::uint64_t oaa_model_floats = 0;  // K d
    double reduction_ratio = 0.0;        // K d / (B R d)

    std::uint64_t model_bytes() const { return (model_floats + bias_floats) * 8; }
};

// Throws std::overflow_error if any count exceeds 64 bits.
CostReport cost_report(std::uint64_t classes, std::uint64_t buckets, std::uint64_t repetitions, std::uint64_t dim);

}  // namespace mach
