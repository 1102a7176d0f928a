// mach: train, predict, evaluate and plan MACH classifiers.
//
// Output is key=value lines so scripts can parse results. Exit codes:
// 0 success, 2 usage error, 1 runtime error.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "mach/analysis.hpp"
#include "mach/kernels.hpp"
#include "mach/mach.hpp"
#include "mach/persist.hpp"
#include "mach/synth.hpp"

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataFlags {
    bool one_based = false;
    bool normalize = false;
};

void add_data_flags(CLI::App* cmd, DataFlags& flags) {
    cmd->add_flag("--one-based", flags.one_based, "Feature indices in the file start at 1");
    cmd->add_flag("--normalize", flags.normalize, "Scale every example to unit L2 norm");
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string out;
    std::optional<std::uint64_t> buckets;
    std::optional<std::uint64_t> repetitions;
    std::optional<std::uint64_t> classes;
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> shuffle_seed;
    std::uint32_t epochs = 10;
    std::uint32_t batch = 64;
    double lr = 0.1;
    double lr_decay = 0.9;
    std::size_t workers = 1;
    std::string hash = "carter-wegman";
    bool oaa = false;
    DataFlags data_flags;
};

void setup_train(CLI::App& app, TrainArgs& a) {
    auto* cmd = app.add_subcommand("train", "Train R hashed sub-models and write a model file");
    cmd->add_option("--data", a.data, "Training set in libsvm format")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", a.out, "Output model file")->required();
    cmd->add_option("--B", a.buckets, "Buckets per sub-model (>= 2)")->check(CLI::Range(std::uint64_t{2}, std::uint64_t{1} << 32));
    cmd->add_option("--R", a.repetitions, "Number of sub-models (>= 1)")->check(CLI::Range(std::uint64_t{1}, std::uint64_t{1} << 20));
    cmd->add_option("--K", a.classes, "Class count; labels must then lie in 0..K-1 (default: one class per distinct label)")
        ->check(CLI::Range(std::uint64_t{2}, std::uint64_t{1} << 32));
    cmd->add_option("--seed", a.seed, "Hash family seed");
    cmd->add_option("--shuffle-seed", a.shuffle_seed, "Mini-batch shuffle seed (default: --seed)");
    cmd->add_option("--epochs", a.epochs, "Passes over the data")->check(CLI::PositiveNumber);
    cmd->add_option("--batch", a.batch, "Mini-batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--lr", a.lr, "Initial learning rate")->check(CLI::NonNegativeNumber);
    cmd->add_option("--lr-decay", a.lr_decay, "Per-epoch learning-rate factor in (0, 1]")
        ->check(CLI::Range(1e-300, 1.0));
    cmd->add_option("--workers", a.workers, "Parallel sub-model trainers (capped at R)")
        ->envname("MACH_WORKERS")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--hash", a.hash, "Hash construction")->check(CLI::IsMember({"carter-wegman", "cw", "odd-multiplier", "odd"}));
    cmd->add_flag("--oaa", a.oaa, "One-vs-all baseline: B = K, R = 1, identity hash");
    add_data_flags(cmd, a.data_flags);
}

int run_train(const TrainArgs& a) {
    if (a.oaa && (a.buckets || a.repetitions)) {
        throw UsageError("--oaa sets B and R itself; drop --B/--R");
    }
    if (!a.oaa && (!a.buckets || !a.repetitions)) {
        throw UsageError("train needs --B and --R (or --oaa)");
    }
    mach::TrainConfig tc;
    tc.epochs = a.epochs;
    tc.batch_size = a.batch;
    tc.learning_rate = a.lr;
    tc.lr_decay = a.lr_decay;
    tc.shuffle_seed = a.shuffle_seed.value_or(a.seed);
    const mach::HashKind kind = mach::parse_hash_kind(a.hash);
    try {
        tc.validate();
        // Probe the hash construction before touching the data.
        if (!a.oaa) {
            mach::make_hash_family(std::max<std::uint64_t>(a.classes.value_or(2), 2), *a.buckets, 1, a.seed, kind);
        }
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }

    const auto start = std::chrono::steady_clock::now();
    mach::LoadOptions lo;
    lo.expected_classes = a.classes;
    lo.one_based = a.data_flags.one_based;
    lo.l2_normalize = a.data_flags.normalize;
    const mach::Dataset ds = mach::load_libsvm(a.data, lo);

    mach::MachConfig cfg;
    if (a.oaa) {
        cfg = mach::MachConfig::one_vs_all(ds.classes, tc);
    } else {
        cfg.classes = a.classes.value_or(ds.classes);
        cfg.buckets = *a.buckets;
        cfg.repetitions = *a.repetitions;
        cfg.seed = a.seed;
        cfg.hash_kind = kind;
        cfg.train = tc;
    }
    std::cout << "load_ms=" << fmt(elapsed_ms(start)) << " N=" << ds.size() << " d=" << ds.dim
              << " K=" << cfg.classes << " simd=" << mach::kernels::isa_name(mach::kernels::active().isa) << '\n';

    std::vector<mach::SubmodelReport> reports;
    const auto train_start = std::chrono::steady_clock::now();
    const mach::MachModel mm = mach::mach_train(ds, cfg, mach::TrainOptions{a.workers}, &reports);
    const double train_ms = elapsed_ms(train_start);
    for (const auto& r : reports) {
        std::cout << "submodel=" << r.index << " wall_ms=" << fmt(r.wall_ms) << " initial_loss=" << fmt(r.initial_loss)
                  << " final_loss=" << fmt(r.final_loss) << '\n';
    }
    mach::save_model(mm, a.out);
    const auto cost = mach::cost_report(cfg.classes, cfg.buckets, cfg.repetitions, ds.dim);
    std::cout << "model=" << a.out << " B=" << cfg.buckets << " R=" << cfg.repetitions
              << " model_floats=" << cost.model_floats << " bias_floats=" << cost.bias_floats
              << " train_wall_ms=" << fmt(train_ms) << " wall_ms=" << fmt(elapsed_ms(start)) << '\n';
    return 0;
}

// --- predict / eval ---------------------------------------------------------

struct PredictArgs {
    std::string model;
    std::string data;
    std::string out;
    std::string estimator = "unbiased";
    std::size_t top_k = 1;
    std::size_t workers = 1;
    DataFlags data_flags;
};

void setup_predict(CLI::App& app, PredictArgs& a) {
    auto* cmd = app.add_subcommand("predict", "Predict labels for a libsvm file");
    cmd->add_option("--model", a.model, "Model file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--data", a.data, "Inputs in libsvm format (labels ignored)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", a.out, "Predictions file (default: stdout)");
    cmd->add_option("--estimator", a.estimator, "unbiased|min|median")->check(CLI::IsMember({"unbiased", "min", "median"}));
    cmd->add_option("--top-k", a.top_k, "Scored labels per line")->check(CLI::PositiveNumber);
    cmd->add_option("--workers", a.workers, "Parallel inference threads")->envname("MACH_WORKERS")->check(CLI::PositiveNumber);
    add_data_flags(cmd, a.data_flags);
}

int run_predict(const PredictArgs& a) {
    const mach::Estimator est = mach::parse_estimator(a.estimator);
    const mach::MachModel mm = mach::load_model(a.model);
    mach::LoadOptions lo;
    lo.expected_dim = mm.dim();
    lo.one_based = a.data_flags.one_based;
    lo.l2_normalize = a.data_flags.normalize;
    const mach::Dataset ds = mach::load_libsvm(a.data, lo);
    std::vector<mach::SparseVector> xs;
    xs.reserve(ds.size());
    for (const auto& ex : ds.examples) {
        xs.push_back(ex.x);
    }
    const auto start = std::chrono::steady_clock::now();
    const auto preds = mach::predict(mm, xs, est, a.top_k, a.workers);
    const double ms = elapsed_ms(start);
    if (a.out.empty()) {
        mach::write_predictions(std::cout, preds);
    } else {
        std::ofstream out(a.out);
        if (!out) {
            throw std::runtime_error("cannot write predictions to " + a.out);
        }
        mach::write_predictions(out, preds);
        std::cout << "predictions=" << a.out << " N=" << preds.size() << " wall_ms=" << fmt(ms) << '\n';
    }
    return 0;
}

struct EvalArgs {
    std::string model;
    std::string data;
    std::string estimator = "unbiased";
    bool all_estimators = false;
    std::size_t workers = 1;
    DataFlags data_flags;
};

void setup_eval(CLI::App& app, EvalArgs& a) {
    auto* cmd = app.add_subcommand("eval", "Top-1 accuracy of a model on a labeled libsvm file");
    cmd->add_option("--model", a.model, "Model file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--data", a.data, "Labeled data in libsvm format")->required()->check(CLI::ExistingFile);
    cmd->add_option("--estimator", a.estimator, "unbiased|min|median")->check(CLI::IsMember({"unbiased", "min", "median"}));
    cmd->add_flag("--all-estimators", a.all_estimators, "Score all three estimators from one pass");
    cmd->add_option("--workers", a.workers, "Parallel inference threads")->envname("MACH_WORKERS")->check(CLI::PositiveNumber);
    add_data_flags(cmd, a.data_flags);
}

int run_eval(const EvalArgs& a) {
    std::vector<mach::Estimator> ests;
    if (a.all_estimators) {
        ests.assign(std::begin(mach::kAllEstimators), std::end(mach::kAllEstimators));
    } else {
        ests.push_back(mach::parse_estimator(a.estimator));
    }
    const mach::MachModel mm = mach::load_model(a.model);
    mach::LoadOptions lo;
    lo.expected_dim = mm.dim();
    lo.label_map = &mm.labels();
    lo.drop_unknown_labels = true;
    lo.one_based = a.data_flags.one_based;
    lo.l2_normalize = a.data_flags.normalize;
    const mach::Dataset ds = mach::load_libsvm(a.data, lo);

    const auto start = std::chrono::steady_clock::now();
    const auto ev = mach::evaluate(mm, ds, ests, a.workers);
    const double ms = elapsed_ms(start);
    const auto cost = mach::cost_report(mm.classes(), mm.buckets(), mm.repetitions(), mm.dim());
    for (std::size_t e = 0; e < ests.size(); ++e) {
        std::cout << "estimator=" << mach::estimator_name(ests[e]) << " accuracy=" << fmt(ev.accuracy(e))
                  << " correct=" << ev.correct[e] << " examples=" << ev.examples
                  << " unknown_labels=" << ds.dropped_unknown << '\n';
    }
    std::cout << "K=" << mm.classes() << " B=" << mm.buckets() << " R=" << mm.repetitions() << " d=" << mm.dim()
              << " model_floats=" << cost.model_floats << " reduction_ratio=" << fmt(cost.reduction_ratio)
              << " wall_ms=" << fmt(ms) << '\n';
    return 0;
}

// --- plan / audit / cost ----------------------------------------------------

struct PlanArgs {
    std::uint64_t classes = 0;
    std::uint64_t buckets = 0;
    double delta = 0.01;
};

void setup_plan(CLI::App& app, PlanArgs& a) {
    auto* cmd = app.add_subcommand("plan", "Smallest R separating all class pairs with probability >= 1 - delta");
    cmd->add_option("--K", a.classes, "Class count")->required()->check(CLI::PositiveNumber);
    cmd->add_option("--B", a.buckets, "Buckets per sub-model (>= 2)")->required()->check(CLI::Range(std::uint64_t{2}, std::uint64_t{1} << 32));
    cmd->add_option("--delta", a.delta, "Failure probability in (0, 1)")->check(CLI::Range(0.0, 1.0));
}

int run_plan(const PlanArgs& a) {
    if (!(a.delta > 0.0 && a.delta < 1.0)) {
        throw UsageError("--delta must lie strictly between 0 and 1");
    }
    const std::uint64_t r = mach::plan_repetitions({a.classes, a.buckets, a.delta});
    std::cout << "R=" << r << " K=" << a.classes << " B=" << a.buckets << " delta=" << fmt(a.delta)
              << " pair_bound=" << fmt(mach::indistinguishable_pair_bound(a.classes, a.buckets, r)) << '\n';
    return 0;
}

struct AuditArgs {
    std::optional<std::string> model;
    std::optional<std::uint64_t> classes;
    std::optional<std::uint64_t> buckets;
    std::optional<std::uint64_t> repetitions;
    std::uint64_t seed = 0;
    std::string hash = "carter-wegman";
};

void setup_audit(CLI::App& app, AuditArgs& a) {
    auto* cmd = app.add_subcommand("audit", "List class pairs that fall in the same bucket under every hash");
    cmd->add_option("--model", a.model, "Audit the hash functions stored in this model")->check(CLI::ExistingFile);
    cmd->add_option("--K", a.classes, "Class count")->check(CLI::Range(std::uint64_t{1}, std::uint64_t{1} << 32));
    cmd->add_option("--B", a.buckets, "Buckets (>= 2)")->check(CLI::Range(std::uint64_t{2}, std::uint64_t{1} << 32));
    cmd->add_option("--R", a.repetitions, "Hash functions")->check(CLI::Range(std::uint64_t{1}, std::uint64_t{1} << 20));
    cmd->add_option("--seed", a.seed, "Hash family seed");
    cmd->add_option("--hash", a.hash, "Hash construction")->check(CLI::IsMember({"carter-wegman", "cw", "odd-multiplier", "odd"}));
}

int run_audit(const AuditArgs& a) {
    std::vector<mach::HashSpec> specs;
    std::uint64_t classes = 0;
    if (a.model) {
        if (a.buckets || a.repetitions) {
            throw UsageError("--model already fixes B and R");
        }
        const auto mm = mach::load_model(*a.model);
        specs.assign(mm.specs().begin(), mm.specs().end());
        classes = a.classes.value_or(mm.classes());
        if (classes > mm.classes()) {
            throw UsageError("--K exceeds the model's class count");
        }
    } else {
        if (!a.classes || !a.buckets || !a.repetitions) {
            throw UsageError("audit needs --K, --B and --R (or --model)");
        }
        classes = *a.classes;
        try {
            specs = mach::make_hash_family(classes, *a.buckets, *a.repetitions, a.seed, mach::parse_hash_kind(a.hash));
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    const auto pairs = mach::audit_distinguishability(specs, classes);
    std::cout << "pairs=" << pairs.size() << " K=" << classes << " B=" << specs.front().buckets
              << " R=" << specs.size() << '\n';
    for (const auto& [i, j] : pairs) {
        std::cout << "pair=" << i << ',' << j << '\n';
    }
    return 0;
}

struct CostArgs {
    std::uint64_t classes = 0, buckets = 0, repetitions = 0, dim = 0;
};

void setup_cost(CLI::App& app, CostArgs& a) {
    auto* cmd = app.add_subcommand("cost", "Parameter and multiplication counts for a configuration");
    cmd->add_option("--K", a.classes, "Class count")->required()->check(CLI::PositiveNumber);
    cmd->add_option("--B", a.buckets, "Buckets")->required()->check(CLI::PositiveNumber);
    cmd->add_option("--R", a.repetitions, "Sub-models")->required()->check(CLI::PositiveNumber);
    cmd->add_option("--d", a.dim, "Feature dimension")->required()->check(CLI::PositiveNumber);
}

int run_cost(const CostArgs& a) {
    const auto c = mach::cost_report(a.classes, a.buckets, a.repetitions, a.dim);
    std::cout << "model_floats=" << c.model_floats << '\n'
              << "bias_floats=" << c.bias_floats << '\n'
              << "inference_mults=" << c.inference_mults << '\n'
              << "oaa_model_floats=" << c.oaa_model_floats << '\n'
              << "reduction_ratio=" << fmt(c.reduction_ratio) << '\n'
              << "model_bytes=" << c.model_bytes() << '\n';
    return 0;
}

// --- synth -------------------------------------------------------------------

struct SynthArgs {
    mach::SynthConfig cfg;
    std::string out;
    std::optional<std::string> truth;
    std::size_t test_n = 0;
    std::optional<std::string> test_out;
};

void setup_synth(CLI::App& app, SynthArgs& a) {
    auto* cmd = app.add_subcommand("synth", "Sample a dataset from a planted softmax model");
    cmd->add_option("--K", a.cfg.classes, "Classes")->required()->check(CLI::Range(std::size_t{2}, std::size_t{1} << 32));
    cmd->add_option("--d", a.cfg.dim, "Feature dimension")->required()->check(CLI::PositiveNumber);
    cmd->add_option("--N", a.cfg.examples, "Examples")->required()->check(CLI::PositiveNumber);
    cmd->add_option("--nnz", a.cfg.nnz, "Nonzero features per example (capped at d)")->check(CLI::PositiveNumber);
    cmd->add_option("--scale", a.cfg.scale, "Std-dev of planted weights")->check(CLI::NonNegativeNumber);
    cmd->add_flag("--nonnegative", a.cfg.nonnegative, "Draw feature values as |N(0,1)|");
    cmd->add_option("--seed", a.cfg.seed, "Generator seed");
    cmd->add_option("--out", a.out, "libsvm output")->required();
    cmd->add_option("--truth", a.truth, "Planted weights output (default: <out>.truth)");
    cmd->add_option("--test-N", a.test_n, "Extra held-out examples from the same model");
    cmd->add_option("--test-out", a.test_out, "Held-out libsvm output (required with --test-N)");
}

int run_synth(const SynthArgs& a) {
    if (a.test_n > 0 && !a.test_out) {
        throw UsageError("--test-N needs --test-out");
    }
    mach::SynthConfig cfg = a.cfg;
    cfg.examples += a.test_n;
    const auto synth = mach::make_synthetic(cfg);
    const auto [train, test] = mach::split_tail(synth.data, a.test_n);
    mach::write_libsvm(train, a.out);
    const std::string truth_path = a.truth.value_or(a.out + ".truth");
    mach::write_truth(synth.truth, truth_path);
    if (a.test_n > 0) {
        mach::write_libsvm(test, *a.test_out);
    }
    std::cout << "out=" << a.out << " truth=" << truth_path << " N=" << train.size() << " test_N=" << test.size()
              << " K=" << cfg.classes << " d=" << cfg.dim
              << " bayes_accuracy=" << fmt(mach::bayes_accuracy(synth.truth, train)) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MACH: extreme classification with merged hashed classifiers"};
    app.require_subcommand(1);

    TrainArgs train;
    PredictArgs predict;
    EvalArgs eval;
    PlanArgs plan;
    AuditArgs audit;
    CostArgs cost;
    SynthArgs synth;
    setup_train(app, train);
    setup_predict(app, predict);
    setup_eval(app, eval);
    setup_plan(app, plan);
    setup_audit(app, audit);
    setup_cost(app, cost);
    setup_synth(app, synth);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const auto* cmd = app.get_subcommands().front();
        const std::string name = cmd->get_name();
        if (name == "train") return run_train(train);
        if (name == "predict") return run_predict(predict);
        if (name == "eval") return run_eval(eval);
        if (name == "plan") return run_plan(plan);
        if (name == "audit") return run_audit(audit);
        if (name == "cost") return run_cost(cost);
        if (name == "synth") return run_synth(synth);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
