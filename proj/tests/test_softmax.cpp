#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "mach/softmax.hpp"
#include "test_util.hpp"

using namespace mach;

namespace {

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// Reference loss written without the library's forward pass: dense logits,
// plain log-sum-exp, mean over the batch.
double reference_loss(const SoftmaxModel& m, const Dataset& ds, std::span<const std::size_t> batch) {
    double total = 0.0;
    for (std::size_t n : batch) {
        std::vector<double> dense(m.dim(), 0.0);
        const auto& x = ds.examples[n].x;
        for (std::size_t k = 0; k < x.nnz(); ++k) {
            dense[x.indices[k]] = x.values[k];
        }
        std::vector<double> logits(m.buckets());
        for (std::size_t b = 0; b < m.buckets(); ++b) {
            double s = m.bias()[b];
            for (std::size_t j = 0; j < m.dim(); ++j) {
                s += m.weight(b, j) * dense[j];
            }
            logits[b] = s;
        }
        const double top = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double l : logits) z += std::exp(l - top);
        total += top + std::log(z) - logits[ds.examples[n].label];
    }
    return total / static_cast<double>(batch.size());
}

SoftmaxModel random_model(std::mt19937_64& rng, std::size_t dim, std::size_t buckets, double scale) {
    SoftmaxModel m(dim, buckets);
    std::normal_distribution<double> dist(0.0, scale);
    for (double& w : m.raw_weights()) w = dist(rng);
    for (double& b : m.bias()) b = dist(rng);
    return m;
}

Dataset single_example(double z, std::uint32_t label) {
    Dataset ds;
    ds.dim = 1;
    ds.classes = 2;
    ds.labels = LabelMap::identity(2);
    ds.examples.push_back(Example{SparseVector{{0}, {z}}, label});
    return ds;
}

}  // namespace

TEST(PredictProba, ZeroModelIsUniform) {
    const SoftmaxModel m(5, 7);
    const auto p = predict_proba(m, SparseVector{{1, 3}, {2.0, -1.0}});
    for (double v : p) {
        EXPECT_DOUBLE_EQ(v, 1.0 / 7.0);
    }
}

TEST(PredictProba, TwoClassClosedForm) {
    for (double w : {-3.0, 0.5, 2.0}) {
        for (double z : {-1.5, 0.25, 4.0}) {
            SoftmaxModel m(1, 2);
            m.weight(0, 0) = w;
            const auto p = predict_proba(m, SparseVector{{0}, {z}});
            EXPECT_NEAR(p[0], sigmoid(w * z), 1e-15);
            EXPECT_NEAR(p[1], 1.0 - sigmoid(w * z), 1e-15);
        }
    }
}

TEST(PredictProba, NormalizedAndStableForLargeWeights) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t dim = 1 + rng() % 10;
        const std::size_t buckets = 2 + rng() % 8;
        const double scale = trial < 100 ? 1.0 : 1e3;
        const SoftmaxModel m = random_model(rng, dim, buckets, scale);
        const auto x = testutil::random_sparse(rng, dim, dim, 3.0);
        const auto p = predict_proba(m, x);
        double sum = 0.0;
        for (double v : p) {
            ASSERT_TRUE(std::isfinite(v));
            ASSERT_GE(v, 0.0);
            sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(PredictProba, IndexOverflowRejected) {
    const SoftmaxModel m(3, 2);
    EXPECT_THROW(predict_proba(m, SparseVector{{3}, {1.0}}), std::invalid_argument);
}

TEST(Gradient, ZeroModelSingleExample) {
    const Dataset ds = single_example(1.0, 0);
    const SoftmaxModel m(1, 2);
    const std::vector<std::size_t> batch{0};
    const auto g = gradient(m, ds, batch, dataset_labels(ds));
    EXPECT_DOUBLE_EQ(g.bias[0], -0.5);
    EXPECT_DOUBLE_EQ(g.bias[1], 0.5);
}

// Central finite differences against an independent dense loss.
TEST(Gradient, MatchesFiniteDifferences) {
    std::mt19937_64 rng(2024);
    const double h = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t buckets = 2 + rng() % 4;
        const std::size_t dim = 1 + rng() % 8;
        const Dataset ds = testutil::random_dataset(rng, 6, dim, buckets, dim);
        SoftmaxModel m = random_model(rng, dim, buckets, 0.5);
        std::vector<std::size_t> batch(ds.size());
        std::iota(batch.begin(), batch.end(), std::size_t{0});
        const auto g = gradient(m, ds, batch, dataset_labels(ds));

        auto check = [&](double analytic, double& param, const char* what) {
            const double saved = param;
            param = saved + h;
            const double up = reference_loss(m, ds, batch);
            param = saved - h;
            const double down = reference_loss(m, ds, batch);
            param = saved;
            const double numeric = (up - down) / (2 * h);
            const double scale = std::max(std::abs(analytic), std::abs(numeric));
            // below 1e-6 both are numerically zero; compare absolutely there
            if (scale < 1e-6) {
                EXPECT_LT(std::abs(analytic - numeric), 1e-10) << what;
            } else {
                EXPECT_LT(std::abs(analytic - numeric) / scale, 1e-5) << what << " a=" << analytic << " n=" << numeric;
            }
        };
        for (std::size_t b = 0; b < buckets; ++b) {
            for (std::size_t j = 0; j < dim; ++j) {
                check(g.weight(b, j), m.weight(b, j), "weight");
            }
            check(g.bias[b], m.bias()[b], "bias");
        }
    }
}

TEST(Gradient, UntouchedColumnsAreZero) {
    std::mt19937_64 rng(8);
    Dataset ds;
    ds.dim = 6;
    ds.classes = 3;
    ds.labels = LabelMap::identity(3);
    ds.examples.push_back(Example{SparseVector{{1, 4}, {0.5, -2.0}}, 2});
    const SoftmaxModel m = random_model(rng, 6, 3, 1.0);
    const std::vector<std::size_t> batch{0};
    const auto g = gradient(m, ds, batch, dataset_labels(ds));
    for (std::size_t j : {0u, 2u, 3u, 5u}) {
        for (std::size_t b = 0; b < 3; ++b) {
            EXPECT_EQ(g.weight(b, j), 0.0);
        }
    }
}

TEST(Gradient, DuplicateExampleDoublesContribution) {
    std::mt19937_64 rng(4);
    const Dataset ds = testutil::random_dataset(rng, 2, 5, 3, 5);
    const SoftmaxModel m = random_model(rng, 5, 3, 1.0);
    const std::vector<std::size_t> once{0};
    const std::vector<std::size_t> twice{0, 0};
    const auto g1 = gradient(m, ds, once, dataset_labels(ds));
    const auto g2 = gradient(m, ds, twice, dataset_labels(ds));
    // mean over two copies: each contributes half, so the sum equals one full copy
    EXPECT_EQ(g1.weights, g2.weights);
    EXPECT_EQ(g1.bias, g2.bias);
}

TEST(Gradient, LabelOutOfRangeRejected) {
    const Dataset ds = single_example(1.0, 1);
    const SoftmaxModel m(1, 1);
    const std::vector<std::size_t> batch{0};
    EXPECT_THROW(gradient(m, ds, batch, dataset_labels(ds)), std::invalid_argument);
}

// One example, batch of one: the logit margin m = l0 - l1 follows
// m <- m + step * (1 - sigmoid(m)) * (2 z^2 + 2), with the step decaying per epoch.
TEST(TrainLogistic, SingleExampleMatchesMarginRecurrence) {
    const double z = 0.8;
    const Dataset ds = single_example(z, 0);
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 1;
    cfg.learning_rate = 0.5;
    cfg.lr_decay = 0.95;
    const SoftmaxModel m = train_logistic(ds, dataset_labels(ds), 2, cfg);

    double margin = 0.0;
    double step = cfg.learning_rate;
    for (std::uint32_t e = 0; e < cfg.epochs; ++e) {
        margin += step * (1.0 - sigmoid(margin)) * (2 * z * z + 2);
        step *= cfg.lr_decay;
    }
    const auto p = predict_proba(m, ds.examples[0].x);
    EXPECT_NEAR(p[0], sigmoid(margin), 1e-12);
    EXPECT_GT(p[0], 0.9);
}

TEST(TrainLogistic, ZeroLearningRateKeepsInitialization) {
    std::mt19937_64 rng(6);
    const Dataset ds = testutil::random_dataset(rng, 50, 8, 4);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    const SoftmaxModel m = train_logistic(ds, dataset_labels(ds), 4, cfg);
    EXPECT_EQ(m, SoftmaxModel(8, 4));
}

TEST(TrainLogistic, SeparableBlobsReachFullAccuracy) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> noise(0.0, 0.4);
    Dataset ds;
    ds.dim = 2;
    ds.classes = 2;
    ds.labels = LabelMap::identity(2);
    for (int n = 0; n < 200; ++n) {
        const std::uint32_t y = n % 2;
        const double c = y == 0 ? 2.0 : -2.0;
        ds.examples.push_back(Example{SparseVector{{0, 1}, {c + noise(rng), c + noise(rng)}}, y});
    }

    // Perceptron oracle: reaching zero training errors certifies separability.
    double w0 = 0, w1 = 0, bias = 0;
    bool separated = false;
    for (int epoch = 0; epoch < 1000 && !separated; ++epoch) {
        separated = true;
        for (const auto& ex : ds.examples) {
            const double t = ex.label == 0 ? 1.0 : -1.0;
            if (t * (w0 * ex.x.values[0] + w1 * ex.x.values[1] + bias) <= 0) {
                w0 += t * ex.x.values[0];
                w1 += t * ex.x.values[1];
                bias += t;
                separated = false;
            }
        }
    }
    ASSERT_TRUE(separated);

    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 16;
    const SoftmaxModel m = train_logistic(ds, dataset_labels(ds), 2, cfg);
    std::size_t correct = 0;
    for (const auto& ex : ds.examples) {
        const auto p = predict_proba(m, ex.x);
        correct += (p[0] >= p[1] ? 0u : 1u) == ex.label;
    }
    EXPECT_EQ(correct, ds.size());
}

TEST(TrainLogistic, LossDecreasesOnSyntheticData) {
    std::mt19937_64 rng(21);
    const Dataset ds = testutil::random_dataset(rng, 300, 10, 3, 5);
    TrainStats stats;
    const SoftmaxModel m = train_logistic(ds, dataset_labels(ds), 3, TrainConfig{}, &stats);
    EXPECT_DOUBLE_EQ(stats.initial_loss, std::log(3.0));
    EXPECT_LE(mean_loss(m, ds, dataset_labels(ds)), stats.initial_loss);
}

TEST(TrainLogistic, BitIdenticalAcrossRuns) {
    std::mt19937_64 rng(33);
    const Dataset ds = testutil::random_dataset(rng, 200, 12, 5, 6);
    TrainConfig cfg;
    cfg.shuffle_seed = 99;
    const SoftmaxModel a = train_logistic(ds, dataset_labels(ds), 5, cfg);
    const SoftmaxModel b = train_logistic(ds, dataset_labels(ds), 5, cfg);
    EXPECT_EQ(a, b);
    cfg.shuffle_seed = 100;
    EXPECT_NE(a, train_logistic(ds, dataset_labels(ds), 5, cfg));
}

TEST(TrainLogistic, Errors) {
    std::mt19937_64 rng(1);
    const Dataset ds = testutil::random_dataset(rng, 200, 3, 4);
    EXPECT_THROW(train_logistic(ds, dataset_labels(ds), 3, TrainConfig{}), std::invalid_argument);
    EXPECT_THROW(train_logistic(Dataset{}, dataset_labels(ds), 3, TrainConfig{}), std::invalid_argument);
    TrainConfig bad;
    bad.lr_decay = 0.0;
    EXPECT_THROW(train_logistic(ds, dataset_labels(ds), 4, bad), std::invalid_argument);
}

TEST(TrainLogistic, NonFiniteLossNamesBatch) {
    Dataset ds = single_example(1e300, 0);
    ds.examples.push_back(Example{SparseVector{{0}, {-1e300}}, 1});
    TrainConfig cfg;
    cfg.learning_rate = 1e10;
    cfg.batch_size = 1;
    try {
        train_logistic(ds, dataset_labels(ds), 2, cfg);
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos) << e.what();
    }
}
