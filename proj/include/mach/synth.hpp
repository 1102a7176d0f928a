#pragma once
// Synthetic sparse datasets drawn from a planted softmax model.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mach/data_io.hpp"

namespace mach {

struct SynthConfig {
    std::size_t classes = 64;    // K
    std::size_t dim = 32;        // d
    std::size_t examples = 20000;  // N
    std::size_t nnz = 8;         // nonzero features per example, capped at d
    double scale = 1.0;          // std-dev of the planted weights
    bool nonnegative = false;    // |N(0,1)| feature values, like term weights
    std::uint64_t seed = 0;
};

// K x d planted weights, class-major.
struct TruthModel {
    std::size_t classes = 0;
    std::size_t dim = 0;
    std::vector<double> weights;

    double weight(std::size_t cls, std::size_t feature) const { return weights[cls * dim + feature]; }
    std::vector<double> probabilities(const SparseVector& x) const;
    std::uint32_t most_likely(const SparseVector& x) const;
};

struct SynthData {
    Dataset data;
    TruthModel truth;
};

// x: nnz distinct features with N(0,1) (or |N(0,1)|) values; y ~ softmax(truth x).
SynthData make_synthetic(const SynthConfig& cfg);

// Fraction of examples whose label equals the planted model's most likely class.
double bayes_accuracy(const TruthModel& truth, const Dataset& ds);

// Text: first line "K d", then K lines of d weights.
void write_truth(const TruthModel& truth, const std::filesystem::path& path);
TruthModel read_truth(const std::filesystem::path& path);

}  // namespace mach
