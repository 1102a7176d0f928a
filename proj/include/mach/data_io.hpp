#pragma once
// Sparse labeled datasets in libsvm text format.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mach/hashing.hpp"

namespace mach {

// Error from the libsvm reader; what() carries "path:line: message".
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, std::size_t line) : std::runtime_error(msg), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct SparseVector {
    std::vector<std::uint32_t> indices;  // strictly increasing
    std::vector<double> values;

    std::size_t nnz() const { return indices.size(); }

    // Sorts, merges duplicates by summing, and checks finiteness.
    static SparseVector from_pairs(std::vector<std::pair<std::uint32_t, double>> pairs);

    // Throws std::invalid_argument on unsorted/duplicate indices, length
    // mismatch, non-finite values, or an index >= dim.
    void validate(std::size_t dim) const;

    bool operator==(const SparseVector&) const = default;
};

// Maps arbitrary integer labels to dense ids [0, K) and back.
class LabelMap {
public:
    LabelMap() = default;
    explicit LabelMap(std::vector<std::int64_t> originals);

    static LabelMap identity(std::size_t classes);

    std::size_t size() const { return originals_.size(); }
    std::int64_t original(std::uint32_t internal) const;
    std::optional<std::uint32_t> find(std::int64_t original) const;
    std::span<const std::int64_t> originals() const { return originals_; }

    bool operator==(const LabelMap& other) const { return originals_ == other.originals_; }

private:
    std::vector<std::int64_t> originals_;
    std::unordered_map<std::int64_t, std::uint32_t> lookup_;
};

struct Example {
    SparseVector x;
    std::uint32_t label = 0;  // internal id
};

struct Dataset {
    std::vector<Example> examples;
    std::size_t dim = 0;      // d
    std::size_t classes = 0;  // K
    LabelMap labels;
    // Rows skipped because their label was not in a supplied label map.
    std::size_t dropped_unknown = 0;

    std::size_t size() const { return examples.size(); }
    void validate() const;
};

struct LoadOptions {
    std::optional<std::size_t> expected_dim;
    // When set, raw labels must be integers in [0, K) and the map is the identity.
    std::optional<std::size_t> expected_classes;
    // Reuse an existing map (e.g. the one stored with a model); unknown labels are errors.
    const LabelMap* label_map = nullptr;
    // With label_map: skip rows whose label is unknown (counted in dropped_unknown).
    bool drop_unknown_labels = false;
    bool one_based = false;
    bool l2_normalize = false;
};

Dataset load_libsvm(const std::filesystem::path& path, const LoadOptions& options = {});
Dataset parse_libsvm(std::istream& in, const LoadOptions& options = {}, const std::string& source = "<stream>");

// Writes original labels and 0-based (or 1-based) indices with round-trip precision.
void write_libsvm(const Dataset& ds, const std::filesystem::path& path, bool one_based = false);
void write_libsvm(const Dataset& ds, std::ostream& out, bool one_based = false);

// Scales each row to unit L2 norm; zero rows are left as-is.
void l2_normalize_rows(Dataset& ds);

// Label source for the trainer: example index -> class id in [0, B).
using LabelAccessor = std::function<std::uint32_t(std::size_t)>;

LabelAccessor dataset_labels(const Dataset& ds);

// Lazy D_j view: accessor(i) == hash_class(spec, y_i), nothing materialized.
LabelAccessor hashed_label_view(const Dataset& ds, const HashSpec& spec);

// Splits ds into [0, n - holdout) and [n - holdout, n); both keep dim, classes and labels.
std::pair<Dataset, Dataset> split_tail(const Dataset& ds, std::size_t holdout);

// Deterministic epoch order from a 64-bit seed (Fisher-Yates over splitmix64).
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed);

// Batches of example indices for one epoch; the last batch may be short.
std::vector<std::span<const std::size_t>> make_batches(std::span<const std::size_t> order, std::size_t batch_size);

}  // namespace mach
