#pragma once
// MACH: R independent B-class softmax models over hashed labels, aggregated
// into K class scores at inference.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mach/data_io.hpp"
#include "mach/hashing.hpp"
#include "mach/softmax.hpp"

namespace mach {

struct MachConfig {
    std::uint64_t classes = 2;      // K
    std::uint64_t buckets = 2;      // B
    std::uint64_t repetitions = 1;  // R
    std::uint64_t seed = 0;
    HashKind hash_kind = HashKind::CarterWegman;
    // One-vs-all baseline: R = 1, B = K and h(i) = i.
    bool identity_hash = false;
    TrainConfig train;

    void validate() const;
    bool operator==(const MachConfig&) const = default;

    static MachConfig one_vs_all(std::uint64_t classes, const TrainConfig& train);
};

// The hash functions a config implies: seeded family, or identity for one-vs-all.
std::vector<HashSpec> specs_for(const MachConfig& cfg);

enum class Estimator { Unbiased, Min, Median };

std::string_view estimator_name(Estimator est);
Estimator parse_estimator(std::string_view name);
inline constexpr Estimator kAllEstimators[] = {Estimator::Unbiased, Estimator::Min, Estimator::Median};

class MachModel {
public:
    MachModel() = default;
    // Validates shapes and hash specs and precomputes the R x K bucket table.
    MachModel(MachConfig config, std::vector<HashSpec> specs, std::vector<SoftmaxModel> models, LabelMap labels,
              std::size_t dim);

    const MachConfig& config() const { return config_; }
    std::span<const HashSpec> specs() const { return specs_; }
    std::span<const SoftmaxModel> models() const { return models_; }
    const LabelMap& labels() const { return labels_; }
    std::size_t dim() const { return dim_; }
    std::size_t classes() const { return config_.classes; }
    std::size_t buckets() const { return config_.buckets; }
    std::size_t repetitions() const { return models_.size(); }

    // Row r holds h_r(i) for i in [0, K).
    std::span<const std::uint32_t> bucket_table() const { return table_; }

    bool operator==(const MachModel& other) const;

private:
    MachConfig config_;
    std::vector<HashSpec> specs_;
    std::vector<SoftmaxModel> models_;
    LabelMap labels_;
    std::size_t dim_ = 0;
    std::vector<std::uint32_t> table_;
};

struct MetaProbabilities {
    std::size_t repetitions = 0;
    std::size_t buckets = 0;
    std::vector<double> values;  // row-major R x B

    std::span<const double> row(std::size_t r) const { return {values.data() + r * buckets, buckets}; }
    std::span<double> row(std::size_t r) { return {values.data() + r * buckets, buckets}; }
};

struct SubmodelReport {
    std::size_t index = 0;
    double wall_ms = 0.0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

struct TrainOptions {
    std::size_t workers = 1;  // capped at R
};

MachModel mach_train(const Dataset& ds, const MachConfig& cfg, const TrainOptions& opts = {},
                     std::vector<SubmodelReport>* reports = nullptr);

// Same as mach_train but with caller-supplied hash functions.
MachModel mach_train_with_specs(const Dataset& ds, const MachConfig& cfg, std::vector<HashSpec> specs,
                                const TrainOptions& opts = {}, std::vector<SubmodelReport>* reports = nullptr);

MetaProbabilities meta_probabilities(const MachModel& mm, const SparseVector& x);

// Class scores from meta-probabilities; table is the row-major R x K bucket table.
//   Unbiased: B/(B-1) * (mean_r P[r][h_r(i)] - 1/B)
//   Min:      min_r P[r][h_r(i)]
//   Median:   median_r P[r][h_r(i)], mean of the two central values for even R
void score_from_meta(const MetaProbabilities& meta, std::span<const std::uint32_t> table, std::size_t classes,
                     Estimator est, std::span<double> out);

std::vector<double> score_classes(const MachModel& mm, const SparseVector& x, Estimator est);

// Unbiased estimate of p_i. A single hash draw may give a negative value.
double estimate_class_probability(const MachModel& mm, const SparseVector& x, std::uint64_t cls);

// First index of the maximum, i.e. ties go to the smallest class id.
std::uint32_t argmax(std::span<const double> scores);

struct ScoredLabel {
    std::int64_t label = 0;  // original label
    double score = 0.0;
};

struct Prediction {
    std::uint32_t internal = 0;
    std::int64_t label = 0;
    std::vector<ScoredLabel> top;  // descending score, ties by class id
};

std::vector<Prediction> predict(const MachModel& mm, std::span<const SparseVector> xs, Estimator est,
                                std::size_t top_k = 1, std::size_t workers = 1);

struct Evaluation {
    std::size_t examples = 0;
    std::vector<Estimator> estimators;
    std::vector<std::size_t> correct;  // parallel to estimators

    double accuracy(std::size_t k) const {
        return examples == 0 ? 0.0 : static_cast<double>(correct[k]) / static_cast<double>(examples);
    }
};

// Top-1 accuracy for each estimator from one pass of meta-probabilities per example.
// ds labels must use mm's label map.
Evaluation evaluate(const MachModel& mm, const Dataset& ds, std::span<const Estimator> estimators,
                    std::size_t workers = 1);

// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the first failure by index.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace mach
