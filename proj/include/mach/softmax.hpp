#pragma once
// B-class multinomial logistic regression on sparse inputs, trained by
// mini-batch gradient descent on mean cross-entropy (no regularization).

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mach/data_io.hpp"

namespace mach {

enum class Optimizer : std::uint32_t {
    Sgd = 0,
};

struct TrainConfig {
    std::uint32_t epochs = 10;
    std::uint32_t batch_size = 64;
    double learning_rate = 0.1;
    double lr_decay = 0.9;  // step for epoch e is learning_rate * lr_decay^e
    std::uint64_t shuffle_seed = 0;
    Optimizer optimizer = Optimizer::Sgd;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

// Raised when a step produces a non-finite loss.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SoftmaxModel {
public:
    SoftmaxModel() = default;
    // Zero-initialized.
    SoftmaxModel(std::size_t dim, std::size_t buckets);

    std::size_t dim() const { return dim_; }
    std::size_t buckets() const { return buckets_; }

    // Weights are stored feature-major: the B weights for feature j are contiguous.
    double weight(std::size_t bucket, std::size_t feature) const { return weights_[feature * buckets_ + bucket]; }
    double& weight(std::size_t bucket, std::size_t feature) { return weights_[feature * buckets_ + bucket]; }
    std::span<const double> column(std::size_t feature) const {
        return {weights_.data() + feature * buckets_, buckets_};
    }
    std::span<double> column(std::size_t feature) { return {weights_.data() + feature * buckets_, buckets_}; }

    std::span<const double> bias() const { return bias_; }
    std::span<double> bias() { return bias_; }
    std::span<const double> raw_weights() const { return weights_; }
    std::span<double> raw_weights() { return weights_; }

    // Throws if any parameter is NaN or infinite.
    void check_finite() const;

    bool operator==(const SoftmaxModel&) const = default;

private:
    std::size_t dim_ = 0;
    std::size_t buckets_ = 0;
    std::vector<double> weights_;
    std::vector<double> bias_;
};

// Unchecked: x must already be validated against m.dim(). out.size() == m.buckets().
void predict_proba_into(const SoftmaxModel& m, const SparseVector& x, std::span<double> out);

std::vector<double> predict_proba(const SoftmaxModel& m, const SparseVector& x);

struct Gradient {
    std::vector<double> weights;  // feature-major, same layout as SoftmaxModel
    std::vector<double> bias;
    std::size_t dim = 0;
    std::size_t buckets = 0;

    double weight(std::size_t bucket, std::size_t feature) const { return weights[feature * buckets + bucket]; }
};

// Gradient of the mean cross-entropy over the batch.
Gradient gradient(const SoftmaxModel& m, const Dataset& ds, std::span<const std::size_t> batch,
                  const LabelAccessor& labels);

// Mean cross-entropy of m over the listed examples (all examples if empty).
double mean_loss(const SoftmaxModel& m, const Dataset& ds, const LabelAccessor& labels,
                 std::span<const std::size_t> subset = {});

struct TrainStats {
    double initial_loss = 0.0;    // mean loss of the zero model
    double final_epoch_loss = 0.0;  // mean of batch losses during the last epoch
};

SoftmaxModel train_logistic(const Dataset& ds, const LabelAccessor& labels, std::size_t buckets,
                            const TrainConfig& cfg, TrainStats* stats = nullptr);

}  // namespace mach
