#include "mach/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "mach/hashing.hpp"

namespace mach {
namespace {

// Portable generator so the same seed yields the same files on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return splitmix64(state_);
    }
    // (0, 1)
    double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        spare_ = radius * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return radius * std::cos(2.0 * std::numbers::pi * u2);
    }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::vector<double> logits(const TruthModel& t, const SparseVector& x) {
    std::vector<double> out(t.classes, 0.0);
    for (std::size_t c = 0; c < t.classes; ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < x.nnz(); ++k) {
            s += t.weight(c, x.indices[k]) * x.values[k];
        }
        out[c] = s;
    }
    return out;
}

}  // namespace

std::vector<double> TruthModel::probabilities(const SparseVector& x) const {
    auto p = logits(*this, x);
    const double top = *std::max_element(p.begin(), p.end());
    double z = 0.0;
    for (double& v : p) {
        v = std::exp(v - top);
        z += v;
    }
    for (double& v : p) {
        v /= z;
    }
    return p;
}

std::uint32_t TruthModel::most_likely(const SparseVector& x) const {
    const auto l = logits(*this, x);
    return static_cast<std::uint32_t>(std::max_element(l.begin(), l.end()) - l.begin());
}

SynthData make_synthetic(const SynthConfig& cfg) {
    if (cfg.classes < 2 || cfg.dim < 1 || cfg.examples < 1) {
        throw std::invalid_argument("synthetic data needs K >= 2, d >= 1, N >= 1");
    }
    const std::size_t nnz = std::clamp<std::size_t>(cfg.nnz, 1, cfg.dim);
    Rng rng(cfg.seed);

    SynthData out;
    TruthModel& truth = out.truth;
    truth.classes = cfg.classes;
    truth.dim = cfg.dim;
    truth.weights.resize(cfg.classes * cfg.dim);
    for (double& w : truth.weights) {
        w = cfg.scale * rng.normal();
    }

    Dataset& ds = out.data;
    ds.dim = cfg.dim;
    ds.classes = cfg.classes;
    ds.labels = LabelMap::identity(cfg.classes);
    ds.examples.reserve(cfg.examples);

    std::vector<std::uint32_t> features(cfg.dim);
    std::iota(features.begin(), features.end(), 0u);
    for (std::size_t n = 0; n < cfg.examples; ++n) {
        // partial Fisher-Yates picks nnz distinct features
        for (std::size_t k = 0; k < nnz; ++k) {
            std::swap(features[k], features[k + rng.below(cfg.dim - k)]);
        }
        std::vector<std::pair<std::uint32_t, double>> pairs;
        pairs.reserve(nnz);
        for (std::size_t k = 0; k < nnz; ++k) {
            const double v = rng.normal();
            pairs.emplace_back(features[k], cfg.nonnegative ? std::abs(v) : v);
        }
        Example ex;
        ex.x = SparseVector::from_pairs(std::move(pairs));

        const auto p = truth.probabilities(ex.x);
        const double u = rng.uniform();
        double cum = 0.0;
        std::uint32_t y = static_cast<std::uint32_t>(cfg.classes - 1);
        for (std::size_t c = 0; c < p.size(); ++c) {
            cum += p[c];
            if (u < cum) {
                y = static_cast<std::uint32_t>(c);
                break;
            }
        }
        ex.label = y;
        ds.examples.push_back(std::move(ex));
    }
    return out;
}

double bayes_accuracy(const TruthModel& truth, const Dataset& ds) {
    if (ds.size() == 0) {
        return 0.0;
    }
    std::size_t hits = 0;
    for (const auto& ex : ds.examples) {
        hits += truth.most_likely(ex.x) == ex.label ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(ds.size());
}

void write_truth(const TruthModel& truth, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write truth file " + path.string());
    }
    out << std::setprecision(17) << truth.classes << ' ' << truth.dim << '\n';
    for (std::size_t c = 0; c < truth.classes; ++c) {
        for (std::size_t j = 0; j < truth.dim; ++j) {
            out << (j ? " " : "") << truth.weight(c, j);
        }
        out << '\n';
    }
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

TruthModel read_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open truth file " + path.string());
    }
    TruthModel t;
    if (!(in >> t.classes >> t.dim)) {
        throw std::runtime_error("malformed truth file header in " + path.string());
    }
    t.weights.resize(t.classes * t.dim);
    for (double& w : t.weights) {
        if (!(in >> w)) {
            throw std::runtime_error("truncated truth file " + path.string());
        }
    }
    return t;
}

}  // namespace mach
