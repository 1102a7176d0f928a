#include "mach/softmax.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mach/kernels.hpp"

namespace mach {
namespace {

// logits = bias + W^T x; returns log-sum-exp of the logits.
double forward_logits(const SoftmaxModel& m, const SparseVector& x, std::span<double> logits) {
    std::copy(m.bias().begin(), m.bias().end(), logits.begin());
    const auto& kt = kernels::active();
    for (std::size_t k = 0; k < x.nnz(); ++k) {
        kt.axpy(x.values[k], m.column(x.indices[k]).data(), logits.data(), logits.size());
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) {
        z += std::exp(l - top);
    }
    return top + std::log(z);
}

// logits -> probabilities in place, given their log-sum-exp.
void normalize(std::span<double> logits, double lse) {
    for (double& l : logits) {
        l = std::exp(l - lse);
    }
}

void check_labels(const Dataset& ds, const LabelAccessor& labels, std::size_t buckets) {
    for (std::size_t n = 0; n < ds.size(); ++n) {
        const std::uint32_t y = labels(n);
        if (y >= buckets) {
            throw std::invalid_argument("example " + std::to_string(n) + " has label " + std::to_string(y) +
                                        " >= B=" + std::to_string(buckets));
        }
    }
}

void check_features(const Dataset& ds, std::size_t dim) {
    if (ds.dim > dim) {
        throw std::invalid_argument("dataset dimension " + std::to_string(ds.dim) + " exceeds model dimension " +
                                    std::to_string(dim));
    }
    for (const auto& ex : ds.examples) {
        ex.x.validate(dim);
    }
}

// Accumulates the batch gradient into grad_w/grad_b and returns the summed loss.
// Every feature column written for the first time is appended to touched.
double accumulate_batch(const SoftmaxModel& m, const Dataset& ds, std::span<const std::size_t> batch,
                        const LabelAccessor& labels, std::span<double> grad_w, std::span<double> grad_b,
                        std::vector<std::uint8_t>& marked, std::vector<std::uint32_t>& touched,
                        std::vector<double>& scratch) {
    const std::size_t buckets = m.buckets();
    const auto& kt = kernels::active();
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (std::size_t n : batch) {
        const SparseVector& x = ds.examples[n].x;
        const std::uint32_t y = labels(n);
        const double lse = forward_logits(m, x, scratch);
        loss += lse - scratch[y];
        normalize(scratch, lse);
        scratch[y] -= 1.0;
        kt.scale(inv_n, scratch.data(), buckets);
        kt.axpy(1.0, scratch.data(), grad_b.data(), buckets);
        for (std::size_t k = 0; k < x.nnz(); ++k) {
            const std::uint32_t j = x.indices[k];
            if (!marked[j]) {
                marked[j] = 1;
                touched.push_back(j);
            }
            kt.axpy(x.values[k], scratch.data(), grad_w.data() + std::size_t{j} * buckets, buckets);
        }
    }
    return loss;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) {
        throw std::invalid_argument("epochs must be positive");
    }
    if (batch_size < 1) {
        throw std::invalid_argument("batch size must be positive");
    }
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("learning rate must be finite and non-negative");
    }
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
        throw std::invalid_argument("lr decay must lie in (0, 1]");
    }
    if (optimizer != Optimizer::Sgd) {
        throw std::invalid_argument("unknown optimizer");
    }
}

SoftmaxModel::SoftmaxModel(std::size_t dim, std::size_t buckets)
    : dim_(dim), buckets_(buckets), weights_(dim * buckets, 0.0), bias_(buckets, 0.0) {
    if (buckets < 1) {
        throw std::invalid_argument("softmax model needs at least one output");
    }
}

void SoftmaxModel::check_finite() const {
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(weights_.begin(), weights_.end(), finite) || !std::all_of(bias_.begin(), bias_.end(), finite)) {
        throw TrainingError("softmax model has non-finite parameters");
    }
}

void predict_proba_into(const SoftmaxModel& m, const SparseVector& x, std::span<double> out) {
    const double lse = forward_logits(m, x, out);
    normalize(out, lse);
}

std::vector<double> predict_proba(const SoftmaxModel& m, const SparseVector& x) {
    x.validate(m.dim());
    std::vector<double> out(m.buckets());
    predict_proba_into(m, x, out);
    return out;
}

Gradient gradient(const SoftmaxModel& m, const Dataset& ds, std::span<const std::size_t> batch,
                  const LabelAccessor& labels) {
    Gradient g;
    g.dim = m.dim();
    g.buckets = m.buckets();
    g.weights.assign(g.dim * g.buckets, 0.0);
    g.bias.assign(g.buckets, 0.0);
    if (batch.empty()) {
        return g;
    }
    for (std::size_t n : batch) {
        if (n >= ds.size()) {
            throw std::out_of_range("batch refers to example " + std::to_string(n) + " beyond dataset");
        }
        ds.examples[n].x.validate(m.dim());
        if (labels(n) >= m.buckets()) {
            throw std::invalid_argument("label " + std::to_string(labels(n)) + " >= B=" + std::to_string(m.buckets()));
        }
    }
    std::vector<std::uint8_t> marked(m.dim(), 0);
    std::vector<std::uint32_t> touched;
    std::vector<double> scratch(m.buckets());
    accumulate_batch(m, ds, batch, labels, g.weights, g.bias, marked, touched, scratch);
    return g;
}

double mean_loss(const SoftmaxModel& m, const Dataset& ds, const LabelAccessor& labels,
                 std::span<const std::size_t> subset) {
    std::vector<double> scratch(m.buckets());
    double total = 0.0;
    std::size_t count = 0;
    auto add = [&](std::size_t n) {
        const std::uint32_t y = labels(n);
        if (y >= m.buckets()) {
            throw std::invalid_argument("label " + std::to_string(y) + " >= B=" + std::to_string(m.buckets()));
        }
        ds.examples[n].x.validate(m.dim());
        const double lse = forward_logits(m, ds.examples[n].x, scratch);
        total += lse - scratch[y];
        ++count;
    };
    if (subset.empty()) {
        for (std::size_t n = 0; n < ds.size(); ++n) {
            add(n);
        }
    } else {
        for (std::size_t n : subset) {
            add(n);
        }
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

SoftmaxModel train_logistic(const Dataset& ds, const LabelAccessor& labels, std::size_t buckets,
                            const TrainConfig& cfg, TrainStats* stats) {
    cfg.validate();
    if (ds.size() == 0) {
        throw std::invalid_argument("cannot train on an empty dataset");
    }
    if (buckets < 1) {
        throw std::invalid_argument("softmax needs at least one output");
    }
    check_features(ds, ds.dim);
    check_labels(ds, labels, buckets);

    SoftmaxModel model(ds.dim, buckets);
    const auto& kt = kernels::active();

    if (stats != nullptr) {
        // zero weights give uniform outputs
        stats->initial_loss = std::log(static_cast<double>(buckets));
    }

    std::vector<double> grad_w(ds.dim * buckets, 0.0);
    std::vector<double> grad_b(buckets, 0.0);
    std::vector<std::uint8_t> marked(ds.dim, 0);
    std::vector<std::uint32_t> touched;
    std::vector<double> scratch(buckets);

    double step = cfg.learning_rate;
    double epoch_loss = 0.0;
    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Each epoch gets its own deterministic order derived from the shuffle seed.
        const auto order = shuffled_order(ds.size(), splitmix64(cfg.shuffle_seed) + epoch);
        const auto batches = make_batches(order, cfg.batch_size);
        double loss_sum = 0.0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const auto batch = batches[bi];
            const double batch_loss = accumulate_batch(model, ds, batch, labels, grad_w, grad_b, marked, touched, scratch);
            if (!std::isfinite(batch_loss)) {
                throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) + " batch " + std::to_string(bi));
            }
            loss_sum += batch_loss;

            kt.axpy(-step, grad_b.data(), model.bias().data(), buckets);
            std::fill(grad_b.begin(), grad_b.end(), 0.0);
            for (std::uint32_t j : touched) {
                double* g = grad_w.data() + std::size_t{j} * buckets;
                kt.axpy(-step, g, model.column(j).data(), buckets);
                std::fill(g, g + buckets, 0.0);
                marked[j] = 0;
            }
            touched.clear();
        }
        epoch_loss = loss_sum / static_cast<double>(ds.size());
        step *= cfg.lr_decay;
    }
    model.check_finite();
    if (stats != nullptr) {
        stats->final_epoch_loss = epoch_loss;
    }
    return model;
}

}  // namespace mach
