#include "mach/mach.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <string>
#include <thread>

#include "mach/kernels.hpp"

namespace mach {

void MachConfig::validate() const {
    if (classes < 2) {
        throw std::invalid_argument("MACH needs K >= 2 classes");
    }
    if (buckets < 2) {
        throw std::invalid_argument("MACH needs B >= 2 buckets, got " + std::to_string(buckets));
    }
    if (repetitions < 1) {
        throw std::invalid_argument("MACH needs R >= 1 repetitions");
    }
    if (identity_hash && (repetitions != 1 || buckets < classes)) {
        throw std::invalid_argument("identity hashing requires R = 1 and B >= K");
    }
    train.validate();
}

MachConfig MachConfig::one_vs_all(std::uint64_t classes, const TrainConfig& train) {
    MachConfig cfg;
    cfg.classes = classes;
    cfg.buckets = classes;
    cfg.repetitions = 1;
    cfg.identity_hash = true;
    cfg.train = train;
    return cfg;
}

std::vector<HashSpec> specs_for(const MachConfig& cfg) {
    cfg.validate();
    if (cfg.identity_hash) {
        return {make_carter_wegman(1, 0, kMersenne61, cfg.buckets, cfg.classes)};
    }
    return make_hash_family(cfg.classes, cfg.buckets, cfg.repetitions, cfg.seed, cfg.hash_kind);
}

std::string_view estimator_name(Estimator est) {
    switch (est) {
    case Estimator::Unbiased:
        return "unbiased";
    case Estimator::Min:
        return "min";
    case Estimator::Median:
        return "median";
    }
    return "unknown";
}

Estimator parse_estimator(std::string_view name) {
    for (Estimator est : kAllEstimators) {
        if (estimator_name(est) == name) {
            return est;
        }
    }
    throw std::invalid_argument("unknown estimator '" + std::string(name) + "'");
}

MachModel::MachModel(MachConfig config, std::vector<HashSpec> specs, std::vector<SoftmaxModel> models,
                     LabelMap labels, std::size_t dim)
    : config_(std::move(config)), specs_(std::move(specs)), models_(std::move(models)), labels_(std::move(labels)),
      dim_(dim) {
    config_.validate();
    if (specs_.empty() || specs_.size() != models_.size()) {
        throw std::invalid_argument("MACH model needs one hash spec per sub-model");
    }
    if (specs_.size() > config_.repetitions) {
        throw std::invalid_argument("more sub-models than configured repetitions");
    }
    for (std::size_t r = 0; r < specs_.size(); ++r) {
        specs_[r].validate();
        if (specs_[r].buckets != config_.buckets || specs_[r].universe < config_.classes) {
            throw std::invalid_argument("hash spec " + std::to_string(r) + " does not match model config");
        }
        if (specs_[r].kind != specs_.front().kind) {
            throw std::invalid_argument("all hash specs of a model must share one construction");
        }
        if (models_[r].buckets() != config_.buckets || models_[r].dim() != dim_) {
            throw std::invalid_argument("sub-model " + std::to_string(r) + " has shape " +
                                        std::to_string(models_[r].buckets()) + "x" +
                                        std::to_string(models_[r].dim()) + ", expected " +
                                        std::to_string(config_.buckets) + "x" + std::to_string(dim_));
        }
    }
    if (labels_.size() > config_.classes) {
        throw std::invalid_argument("label map larger than class count");
    }
    table_ = mach::bucket_table(specs_, config_.classes);
}

bool MachModel::operator==(const MachModel& other) const {
    return config_ == other.config_ && specs_ == other.specs_ && models_ == other.models_ &&
           labels_ == other.labels_ && dim_ == other.dim_;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    std::vector<std::exception_ptr> errors(n);
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
                break;
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::atomic<bool> failed{false};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n && !failed; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                        failed = true;
                    }
                }
            });
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

MachModel mach_train_with_specs(const Dataset& ds, const MachConfig& cfg, std::vector<HashSpec> specs,
                                const TrainOptions& opts, std::vector<SubmodelReport>* reports) {
    cfg.validate();
    if (ds.size() == 0) {
        throw std::invalid_argument("cannot train MACH on an empty dataset");
    }
    if (ds.classes > cfg.classes) {
        throw std::invalid_argument("dataset has " + std::to_string(ds.classes) + " classes but K=" +
                                    std::to_string(cfg.classes));
    }
    if (specs.size() != cfg.repetitions) {
        throw std::invalid_argument("expected " + std::to_string(cfg.repetitions) + " hash specs, got " +
                                    std::to_string(specs.size()));
    }
    ds.validate();

    const std::size_t rep = specs.size();
    std::vector<SoftmaxModel> models(rep);
    std::vector<SubmodelReport> local(rep);
    parallel_for(rep, opts.workers, [&](std::size_t r) {
        const auto start = std::chrono::steady_clock::now();
        TrainStats stats;
        try {
            models[r] = train_logistic(ds, hashed_label_view(ds, specs[r]), cfg.buckets, cfg.train, &stats);
        } catch (const std::exception& e) {
            throw TrainingError("sub-model " + std::to_string(r) + ": " + e.what());
        }
        const auto stop = std::chrono::steady_clock::now();
        local[r] = SubmodelReport{r, std::chrono::duration<double, std::milli>(stop - start).count(),
                                  stats.initial_loss, stats.final_epoch_loss};
    });
    if (reports != nullptr) {
        *reports = std::move(local);
    }
    return MachModel(cfg, std::move(specs), std::move(models), ds.labels, ds.dim);
}

MachModel mach_train(const Dataset& ds, const MachConfig& cfg, const TrainOptions& opts,
                     std::vector<SubmodelReport>* reports) {
    return mach_train_with_specs(ds, cfg, specs_for(cfg), opts, reports);
}

MetaProbabilities meta_probabilities(const MachModel& mm, const SparseVector& x) {
    x.validate(mm.dim());
    MetaProbabilities meta;
    meta.repetitions = mm.repetitions();
    meta.buckets = mm.buckets();
    meta.values.resize(meta.repetitions * meta.buckets);
    for (std::size_t r = 0; r < meta.repetitions; ++r) {
        predict_proba_into(mm.models()[r], x, meta.row(r));
    }
    return meta;
}

void score_from_meta(const MetaProbabilities& meta, std::span<const std::uint32_t> table, std::size_t classes,
                     Estimator est, std::span<double> out) {
    const std::size_t rep = meta.repetitions;
    if (table.size() < rep * classes || out.size() != classes || rep == 0) {
        throw std::invalid_argument("score buffer or bucket table has the wrong shape");
    }
    const auto& kt = kernels::active();
    switch (est) {
    case Estimator::Unbiased: {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t r = 0; r < rep; ++r) {
            kt.gather_add(meta.row(r).data(), table.data() + r * classes, out.data(), classes);
        }
        const double b = static_cast<double>(meta.buckets);
        const double slope = b / (b - 1.0);
        const double inv_b = 1.0 / b;
        const double rd = static_cast<double>(rep);
        for (double& s : out) {
            s = slope * (s / rd - inv_b);
        }
        break;
    }
    case Estimator::Min: {
        std::fill(out.begin(), out.end(), std::numeric_limits<double>::infinity());
        for (std::size_t r = 0; r < rep; ++r) {
            kt.gather_min(meta.row(r).data(), table.data() + r * classes, out.data(), classes);
        }
        break;
    }
    case Estimator::Median: {
        std::vector<double> column(rep);
        const std::size_t mid = rep / 2;
        for (std::size_t i = 0; i < classes; ++i) {
            for (std::size_t r = 0; r < rep; ++r) {
                column[r] = meta.values[r * meta.buckets + table[r * classes + i]];
            }
            std::sort(column.begin(), column.end());
            out[i] = (rep % 2 == 1) ? column[mid] : 0.5 * (column[mid - 1] + column[mid]);
        }
        break;
    }
    }
}

std::vector<double> score_classes(const MachModel& mm, const SparseVector& x, Estimator est) {
    const auto meta = meta_probabilities(mm, x);
    std::vector<double> scores(mm.classes());
    score_from_meta(meta, mm.bucket_table(), mm.classes(), est, scores);
    return scores;
}

double estimate_class_probability(const MachModel& mm, const SparseVector& x, std::uint64_t cls) {
    if (cls >= mm.classes()) {
        throw std::out_of_range("class id " + std::to_string(cls) + " outside [0, " + std::to_string(mm.classes()) +
                                ")");
    }
    const auto meta = meta_probabilities(mm, x);
    const auto table = mm.bucket_table();
    double sum = 0.0;
    for (std::size_t r = 0; r < meta.repetitions; ++r) {
        sum += meta.values[r * meta.buckets + table[r * mm.classes() + cls]];
    }
    const double b = static_cast<double>(meta.buckets);
    return b / (b - 1.0) * (sum / static_cast<double>(meta.repetitions) - 1.0 / b);
}

std::uint32_t argmax(std::span<const double> scores) {
    if (scores.empty()) {
        throw std::invalid_argument("argmax of empty score vector");
    }
    return static_cast<std::uint32_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

namespace {

std::int64_t original_or_internal(const LabelMap& labels, std::uint32_t internal) {
    // Classes beyond the label map (K set larger than the observed labels) report their internal id.
    return internal < labels.size() ? labels.original(internal) : static_cast<std::int64_t>(internal);
}

}  // namespace

std::vector<Prediction> predict(const MachModel& mm, std::span<const SparseVector> xs, Estimator est,
                                std::size_t top_k, std::size_t workers) {
    top_k = std::max<std::size_t>(1, std::min<std::size_t>(top_k, mm.classes()));
    for (const auto& x : xs) {
        x.validate(mm.dim());
    }
    std::vector<Prediction> out(xs.size());
    parallel_for(xs.size(), workers, [&](std::size_t n) {
        const auto scores = score_classes(mm, xs[n], est);
        std::vector<std::uint32_t> ids(scores.size());
        for (std::uint32_t i = 0; i < ids.size(); ++i) {
            ids[i] = i;
        }
        std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(top_k), ids.end(),
                          [&](std::uint32_t l, std::uint32_t r) {
                              return scores[l] > scores[r] || (scores[l] == scores[r] && l < r);
                          });
        Prediction& p = out[n];
        p.internal = ids.front();
        p.label = original_or_internal(mm.labels(), p.internal);
        for (std::size_t k = 0; k < top_k; ++k) {
            p.top.push_back(ScoredLabel{original_or_internal(mm.labels(), ids[k]), scores[ids[k]]});
        }
    });
    return out;
}

Evaluation evaluate(const MachModel& mm, const Dataset& ds, std::span<const Estimator> estimators,
                    std::size_t workers) {
    if (ds.dim > mm.dim()) {
        throw std::invalid_argument("dataset dimension " + std::to_string(ds.dim) + " exceeds model dimension " +
                                    std::to_string(mm.dim()));
    }
    if (ds.classes > mm.classes()) {
        throw std::invalid_argument("dataset has more classes than the model");
    }
    Evaluation ev;
    // rows dropped for unknown labels can never be predicted correctly
    ev.examples = ds.size() + ds.dropped_unknown;
    ev.estimators.assign(estimators.begin(), estimators.end());
    ev.correct.assign(estimators.size(), 0);

    std::vector<std::vector<std::uint8_t>> hits(estimators.size(), std::vector<std::uint8_t>(ds.size(), 0));
    parallel_for(ds.size(), workers, [&](std::size_t n) {
        const auto meta = meta_probabilities(mm, ds.examples[n].x);
        std::vector<double> scores(mm.classes());
        for (std::size_t e = 0; e < estimators.size(); ++e) {
            score_from_meta(meta, mm.bucket_table(), mm.classes(), estimators[e], scores);
            hits[e][n] = argmax(scores) == ds.examples[n].label ? 1 : 0;
        }
    });
    for (std::size_t e = 0; e < estimators.size(); ++e) {
        for (std::uint8_t h : hits[e]) {
            ev.correct[e] += h;
        }
    }
    return ev;
}

}  // namespace mach
