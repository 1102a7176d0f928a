#include "mach/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace mach {
namespace {

std::uint64_t checked_mul(std::uint64_t x, std::uint64_t y) {
    std::uint64_t out = 0;
    if (__builtin_mul_overflow(x, y, &out)) {
        throw std::overflow_error("cost arithmetic overflows 64 bits");
    }
    return out;
}

std::uint64_t checked_add(std::uint64_t x, std::uint64_t y) {
    std::uint64_t out = 0;
    if (__builtin_add_overflow(x, y, &out)) {
        throw std::overflow_error("cost arithmetic overflows 64 bits");
    }
    return out;
}

}  // namespace

std::uint64_t plan_repetitions(const PlanRequest& req) {
    if (req.buckets < 2) {
        throw std::invalid_argument("planning needs B >= 2 (log B must be positive)");
    }
    if (!(req.delta > 0.0 && req.delta < 1.0)) {
        throw std::invalid_argument("delta must lie in (0, 1)");
    }
    if (req.classes < 1) {
        throw std::invalid_argument("planning needs K >= 1");
    }
    const double k = static_cast<double>(req.classes);
    const double exact = 2.0 * std::log(k / std::sqrt(req.delta)) / std::log(static_cast<double>(req.buckets));
    // Guard against ln rounding pushing an integral value just above the integer
    // (K=1024, B=8, delta=0.5 evaluates to 7.000000000000001).
    const double nearest = std::round(exact);
    const double r = std::abs(exact - nearest) <= 1e-9 * std::max(1.0, nearest) ? nearest : std::ceil(exact);
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(r));
}

double indistinguishable_pair_bound(std::uint64_t classes, std::uint64_t buckets, std::uint64_t repetitions) {
    const double k = static_cast<double>(classes);
    return k * k * std::pow(1.0 / static_cast<double>(buckets), static_cast<double>(repetitions));
}

std::vector<ClassPair> audit_distinguishability(std::span<const HashSpec> specs, std::uint64_t classes) {
    for (const auto& spec : specs) {
        if (spec.universe < classes) {
            throw std::invalid_argument("hash spec universe smaller than class count");
        }
    }
    const std::size_t rep = specs.size();
    const auto table = bucket_table(specs, classes);

    // Sort class ids by their R-tuple signature, then emit all pairs inside each run.
    std::vector<std::uint32_t> order(classes);
    for (std::uint32_t i = 0; i < classes; ++i) {
        order[i] = i;
    }
    auto sig_less = [&](std::uint32_t l, std::uint32_t r) {
        for (std::size_t j = 0; j < rep; ++j) {
            const auto a = table[j * classes + l];
            const auto b = table[j * classes + r];
            if (a != b) {
                return a < b;
            }
        }
        return l < r;
    };
    auto sig_equal = [&](std::uint32_t l, std::uint32_t r) {
        for (std::size_t j = 0; j < rep; ++j) {
            if (table[j * classes + l] != table[j * classes + r]) {
                return false;
            }
        }
        return true;
    };
    std::sort(order.begin(), order.end(), sig_less);

    std::vector<ClassPair> pairs;
    for (std::size_t start = 0; start < order.size();) {
        std::size_t end = start + 1;
        while (end < order.size() && sig_equal(order[start], order[end])) {
            ++end;
        }
        // within a run ids are ascending
        for (std::size_t a = start; a < end; ++a) {
            for (std::size_t b = a + 1; b < end; ++b) {
                pairs.emplace_back(order[a], order[b]);
            }
        }
        start = end;
    }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

std::vector<ClassPair> audit_distinguishability_brute_force(std::span<const HashSpec> specs, std::uint64_t classes) {
    std::vector<ClassPair> pairs;
    for (std::uint32_t i = 0; i < classes; ++i) {
        for (std::uint32_t j = i + 1; j < classes; ++j) {
            bool same = true;
            for (const auto& spec : specs) {
                if (hash_class(spec, i) != hash_class(spec, j)) {
                    same = false;
                    break;
                }
            }
            if (same) {
                pairs.emplace_back(i, j);
            }
        }
    }
    return pairs;
}

CostReport cost_report(std::uint64_t classes, std::uint64_t buckets, std::uint64_t repetitions, std::uint64_t dim) {
    if (classes == 0 || buckets == 0 || repetitions == 0 || dim == 0) {
        throw std::invalid_argument("cost report needs positive K, B, R, d");
    }
    CostReport c;
    const std::uint64_t br = checked_mul(buckets, repetitions);
    c.model_floats = checked_mul(br, dim);
    c.bias_floats = br;
    c.inference_mults = checked_add(checked_mul(br, dim), checked_mul(classes, repetitions));
    c.oaa_model_floats = checked_mul(classes, dim);
    checked_mul(checked_add(c.model_floats, c.bias_floats), 8);
    c.reduction_ratio = static_cast<double>(c.oaa_model_floats) / static_cast<double>(c.model_floats);
    return c;
}

}  // namespace mach
