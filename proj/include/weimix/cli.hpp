#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "weimix/config.hpp"
#include "weimix/dataio.hpp"
#include "weimix/errors.hpp"
#include "weimix/metrics.hpp"
#include "weimix/model_io.hpp"
#include "weimix/neuralnet.hpp"
#include "weimix/synthgen.hpp"

namespace weimix {

/// Relative gap between held-out and ground-truth loss that synth-validate
/// accepts as evidence the estimator recovered the generator.
inline constexpr double kSynthGapThreshold = 0.05;

/// Across-fold summary: mean with a normal 95% interval, bounds clipped
/// to [0, 1].
struct FoldReport {
    std::vector<double> fold_cindex;
    double mean = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
};

inline FoldReport summarize_folds(const std::vector<double>& scores) {
    if (scores.empty()) throw std::invalid_argument("summarize_folds: no scores");
    FoldReport r;
    r.fold_cindex = scores;
    double sum = 0.0;
    for (double s : scores) sum += s;
    r.mean = sum / static_cast<double>(scores.size());
    double var = 0.0;
    if (scores.size() > 1) {
        for (double s : scores) var += (s - r.mean) * (s - r.mean);
        var /= static_cast<double>(scores.size() - 1);
    }
    const double half = 1.96 * std::sqrt(var) / std::sqrt(static_cast<double>(scores.size()));
    r.ci_lower = std::max(0.0, r.mean - half);
    r.ci_upper = std::min(1.0, r.mean + half);
    return r;
}

namespace detail {

inline std::ofstream open_report(const std::string& out_dir, const std::string& name) {
    std::filesystem::create_directories(out_dir);
    const std::string path = out_dir + "/" + name;
    std::ofstream out(path);
    if (!out) throw DataError("report: cannot write '" + path + "'");
    return out;
}

inline std::string real_str(double x) { return format_real(x); }

/// Fold-wise training seeds derived once from the config seed, so fold f
/// trains identically no matter which other folds run.
inline std::vector<std::uint64_t> fold_seeds(std::uint64_t seed, std::size_t k) {
    Rng spawner(seed);
    std::vector<std::uint64_t> seeds(k);
    for (std::size_t f = 0; f < k; ++f) seeds[f] = spawner.next_u64();
    return seeds;
}

inline TrainingData to_training(const Dataset& ds, const std::vector<std::size_t>& idx,
                                const ScalerStats& scaler, const CensoringSpec& cens) {
    const Dataset scaled = apply_scaler(scaler, ds.subset(idx));
    TrainingData td;
    td.x = scaled.feature_matrix();
    td.times = scaled.times();
    td.deltas = scaled.deltas();
    td.censoring = cens;
    return td;
}

/// The likelihood's censoring rule for a loaded dataset. In global mode an
/// unset threshold falls back to the dataset's maximum time, which makes the
/// censored term exact for the rows censored at end of study.
inline CensoringSpec resolve_censoring(const TrainConfig& cfg, const Dataset& ds) {
    if (cfg.censoring_mode == "per-observation") return CensoringSpec::per_observation();
    double tc = cfg.censoring_threshold;
    if (!(tc > 0.0)) {
        tc = 0.0;
        for (const auto& rec : ds.records) tc = std::max(tc, rec.time);
    }
    return CensoringSpec::global_threshold(tc);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth-validate
// ---------------------------------------------------------------------------

struct SynthCase {
    GenFunction function_id;
    std::size_t p;
};

inline std::vector<SynthCase> resolve_synth_cases(const std::optional<std::string>& function,
                                                  const std::optional<std::size_t>& p) {
    std::vector<GenFunction> fns;
    if (function) fns = {parse_gen_function(*function)};
    else fns = {GenFunction::Linear, GenFunction::Quadratic, GenFunction::Cubic};
    std::vector<std::size_t> ps;
    if (p) {
        if (*p != 1 && *p != 2) throw ConfigError("synth-validate: p must be 1 or 2");
        ps = {*p};
    } else {
        ps = {1, 2};
    }
    std::vector<SynthCase> cases;
    for (GenFunction f : fns)
        for (std::size_t pp : ps) cases.push_back({f, pp});
    return cases;
}

struct SynthValidateOptions {
    std::vector<SynthCase> cases;
    std::size_t n = 10000;
    double censor_fraction = 0.5;
    TrainConfig config;
    std::string out_dir = ".";
};

struct SynthCaseResult {
    SynthCase which;
    double nll_pred = 0.0;
    double nll_real = 0.0;
    double relative_gap = 0.0;
    bool pass = false;
    std::vector<EpochStats> trace;
};

/// One generate-train-compare cycle: a single seeded split, training on the
/// scaled training portion, and both losses evaluated on the same held-out
/// rows (the model at its predictions, the generator at the truth).
inline SynthCaseResult run_synth_case(const SynthCase& which, std::size_t n, double censor_fraction,
                                      const TrainConfig& cfg) {
    GeneratorSpec spec;
    spec.function_id = which.function_id;
    spec.p = which.p;
    spec.n = n;
    spec.censor_fraction = censor_fraction;
    spec.seed = cfg.seed;
    const SynthData sd = generate(spec);

    const FoldPlan plan = make_folds(sd.dataset.n(), cfg.k_folds, cfg.val_fraction, cfg.seed);
    const ScalerStats scaler = fit_scaler(sd.dataset.subset(plan.train_idx[0]));
    const TrainingData tr = detail::to_training(sd.dataset, plan.train_idx[0], scaler, sd.censoring);
    const TrainingData val = detail::to_training(sd.dataset, plan.val_idx[0], scaler, sd.censoring);
    const TrainingData test = detail::to_training(sd.dataset, plan.test_idx[0], scaler, sd.censoring);

    TrainConfig case_cfg = cfg;
    case_cfg.p = which.p;
    const TrainResult result = train(tr, val, case_cfg);

    SynthCaseResult out;
    out.which = which;
    out.trace = result.trace;
    out.nll_pred = evaluate_nll(result.model, test);
    out.nll_real = real_nll(sd, plan.test_idx[0]);
    out.relative_gap = std::abs(out.nll_pred - out.nll_real) / std::abs(out.nll_real);
    out.pass = out.relative_gap <= kSynthGapThreshold;
    return out;
}

/// Returns 0 when every case meets the gap threshold, 5 otherwise.
inline int cmd_synth_validate(const SynthValidateOptions& opt) {
    opt.config.validate();
    if (opt.cases.empty()) throw ConfigError("synth-validate: no cases selected");
    if (opt.n == 0) throw ConfigError("synth-validate: n must be > 0");
    if (!(opt.censor_fraction >= 0.0) || !(opt.censor_fraction < 1.0))
        throw ConfigError("synth-validate: censor fraction must lie in [0, 1)");

    std::vector<SynthCaseResult> results;
    for (const SynthCase& c : opt.cases)
        results.push_back(run_synth_case(c, opt.n, opt.censor_fraction, opt.config));

    std::ofstream report = detail::open_report(opt.out_dir, "report.csv");
    report << "# command=synth-validate\n";
    report << effective_config_lines(opt.config);
    report << "# n=" << opt.n << "\n";
    report << "# censor_fraction=" << detail::real_str(opt.censor_fraction) << "\n";
    report << "# gap_threshold=" << detail::real_str(kSynthGapThreshold) << "\n";
    report << "function,p,nll_pred,nll_real,relative_gap,pass\n";
    bool all_pass = true;
    for (const SynthCaseResult& r : results) {
        report << gen_function_name(r.which.function_id) << "," << r.which.p << ","
               << detail::real_str(r.nll_pred) << "," << detail::real_str(r.nll_real) << ","
               << detail::real_str(r.relative_gap) << "," << (r.pass ? 1 : 0) << "\n";
        all_pass = all_pass && r.pass;
    }

    std::ofstream trace = detail::open_report(opt.out_dir, "loss_trace.csv");
    trace << "# command=synth-validate\n";
    trace << "function,p,epoch,train_nll,val_nll\n";
    for (const SynthCaseResult& r : results)
        for (const EpochStats& e : r.trace)
            trace << gen_function_name(r.which.function_id) << "," << r.which.p << "," << e.epoch << ","
                  << detail::real_str(e.train_nll) << "," << detail::real_str(e.val_nll) << "\n";

    return all_pass ? 0 : 5;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOptions {
    std::string data_path;
    TrainConfig config;
    std::string out_dir = ".";
};

/// k-fold cross validation: per fold, fit the scaler on that fold's
/// gradient-update rows only, train with early stopping on the inner
/// validation split, rank the test fold by predicted mean lifetime, and score
/// with the concordance index. The best-scoring fold's model is saved.
inline int cmd_train(const TrainOptions& opt) {
    const TrainConfig& cfg = opt.config;
    cfg.validate();
    if (cfg.schema.empty()) throw ConfigError("train: --schema (or config key schema) is required");
    if (opt.data_path.empty()) throw ConfigError("train: --data is required");

    const DatasetSchema schema = load_schema(cfg.schema);
    const Dataset ds = load_csv(opt.data_path, schema);
    const CensoringSpec cens = detail::resolve_censoring(cfg, ds);
    const FoldPlan plan = make_folds(ds.n(), cfg.k_folds, cfg.val_fraction, cfg.seed);
    const std::vector<std::uint64_t> seeds = detail::fold_seeds(cfg.seed, cfg.k_folds);

    std::vector<double> scores;
    std::vector<std::vector<EpochStats>> traces;
    std::size_t violations = 0;
    std::optional<TrainedModel> best;
    double best_score = -1.0;

    for (std::size_t f = 0; f < cfg.k_folds; ++f) {
        const ScalerStats scaler = fit_scaler(ds.subset(plan.train_idx[f]));
        const TrainingData tr = detail::to_training(ds, plan.train_idx[f], scaler, cens);
        const TrainingData val = detail::to_training(ds, plan.val_idx[f], scaler, cens);
        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = seeds[f];
        const TrainResult result = train(tr, val, fold_cfg);
        violations += result.invariant_violations;
        traces.push_back(result.trace);

        const TrainingData test = detail::to_training(ds, plan.test_idx[f], scaler, cens);
        const std::vector<double> mu = predict_mean_lifetime(result.model, test.x);
        const double score = concordance_index(test.times, mu, test.deltas).c_index;
        scores.push_back(score);
        if (score > best_score) {
            best_score = score;
            best = TrainedModel{result.model, scaler, ds.feature_names};
        }
    }

    const FoldReport fr = summarize_folds(scores);
    std::filesystem::create_directories(opt.out_dir);
    save_model(*best, opt.out_dir + "/model.json");

    std::ofstream report = detail::open_report(opt.out_dir, "report.csv");
    report << "# command=train\n";
    report << effective_config_lines(cfg);
    report << "# data=" << opt.data_path << "\n";
    if (cens.mode == CensoringSpec::Mode::GlobalThreshold)
        report << "# censoring_threshold_used=" << detail::real_str(cens.t_c) << "\n";
    report << "# invariant_violations=" << violations << "\n";
    report << "row_type,fold,c_index,ci_lower,ci_upper\n";
    for (std::size_t f = 0; f < scores.size(); ++f)
        report << "fold," << f << "," << detail::real_str(scores[f]) << ",,\n";
    report << "mean,," << detail::real_str(fr.mean) << "," << detail::real_str(fr.ci_lower) << ","
           << detail::real_str(fr.ci_upper) << "\n";

    std::ofstream trace = detail::open_report(opt.out_dir, "loss_trace.csv");
    trace << "# command=train\n";
    trace << "fold,epoch,train_nll,val_nll\n";
    for (std::size_t f = 0; f < traces.size(); ++f)
        for (const EpochStats& e : traces[f])
            trace << f << "," << e.epoch << "," << detail::real_str(e.train_nll) << ","
                  << detail::real_str(e.val_nll) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictOptions {
    std::string model_path;
    std::string data_path;
    std::string schema_path;
    std::vector<double> horizons;
    std::string out_dir = ".";
};

/// Per-record mean lifetime plus survival at each requested horizon. Raw
/// features are standardized with the scaler stored in the model file.
inline int cmd_predict(const PredictOptions& opt) {
    if (opt.model_path.empty()) throw ConfigError("predict: --model is required");
    if (opt.data_path.empty()) throw ConfigError("predict: --data is required");
    if (opt.schema_path.empty()) throw ConfigError("predict: --schema is required");
    for (double h : opt.horizons)
        if (!std::isfinite(h) || !(h > 0.0)) throw ConfigError("predict: horizons must be positive");

    const TrainedModel tm = load_model(opt.model_path);
    const DatasetSchema schema = load_schema(opt.schema_path);
    const Dataset ds = load_csv(opt.data_path, schema);
    if (ds.feature_names != tm.feature_names)
        throw DataError("predict: dataset features do not match the model's stored feature names");

    const Matrix x = apply_scaler(tm.scaler, ds).feature_matrix();
    const std::vector<double> mu = predict_mean_lifetime(tm.net, x);
    std::vector<std::vector<double>> surv;
    for (double h : opt.horizons) surv.push_back(survival_at_horizon(tm.net, x, h));

    std::ofstream out = detail::open_report(opt.out_dir, "predictions.csv");
    out << "# command=predict\n";
    out << "# model=" << opt.model_path << "\n";
    out << "# data=" << opt.data_path << "\n";
    out << "index,mean_lifetime";
    for (double h : opt.horizons) out << ",S@" << detail::real_str(h);
    out << "\n";
    for (std::size_t i = 0; i < ds.n(); ++i) {
        out << i << "," << detail::real_str(mu[i]);
        for (std::size_t h = 0; h < surv.size(); ++h) out << "," << detail::real_str(surv[h][i]);
        out << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// sensitivity
// ---------------------------------------------------------------------------

struct SensitivityOptions {
    std::string data_path;
    TrainConfig config;
    std::vector<double> quantiles = {0.5, 0.45, 0.35, 0.25};
    std::vector<double> horizons;
    std::string out_dir = ".";
};

/// For each censoring quantile: recensor the training data at that quantile
/// of the observed times, rerun the cross-validation protocol, and average
/// the per-horizon concordance across folds. Held-out folds keep the
/// dataset's own labels so the evaluation stays fixed while the training
/// information degrades. Quantiles >= 1 are the degenerate no-recensoring
/// case and reproduce the unmodified protocol.
inline int cmd_sensitivity(const SensitivityOptions& opt) {
    const TrainConfig& cfg = opt.config;
    cfg.validate();
    if (cfg.schema.empty()) throw ConfigError("sensitivity: --schema (or config key schema) is required");
    if (opt.data_path.empty()) throw ConfigError("sensitivity: --data is required");
    if (opt.quantiles.empty()) throw ConfigError("sensitivity: --quantiles must be nonempty");
    if (opt.horizons.empty()) throw ConfigError("sensitivity: --horizons must be nonempty");
    for (double q : opt.quantiles)
        if (!(q > 0.0) || !(q <= 1.0)) throw ConfigError("sensitivity: quantiles must lie in (0, 1]");
    for (double h : opt.horizons)
        if (!std::isfinite(h) || !(h > 0.0)) throw ConfigError("sensitivity: horizons must be positive");

    const DatasetSchema schema = load_schema(cfg.schema);
    const Dataset ds = load_csv(opt.data_path, schema);
    std::vector<double> sorted_times = ds.times();
    std::sort(sorted_times.begin(), sorted_times.end());

    const FoldPlan plan = make_folds(ds.n(), cfg.k_folds, cfg.val_fraction, cfg.seed);
    const std::vector<std::uint64_t> seeds = detail::fold_seeds(cfg.seed, cfg.k_folds);

    struct Row {
        double quantile, t_c, t_sth, c_index;
    };
    std::vector<Row> rows;

    for (double q : opt.quantiles) {
        const double t_c = sorted_quantile(sorted_times, q);
        const bool degenerate = q >= 1.0;  // above every time: recensoring is a no-op
        const Dataset working = degenerate ? ds : recensor(ds, t_c);
        std::size_t uncensored = 0;
        for (const auto& rec : working.records) uncensored += rec.delta;
        if (uncensored == 0)
            throw DataError("sensitivity: recensoring at quantile " + detail::real_str(q) +
                            " leaves no uncensored rows");
        const CensoringSpec cens =
            degenerate ? detail::resolve_censoring(cfg, working) : CensoringSpec::global_threshold(t_c);

        std::vector<std::vector<double>> fold_scores;  // [fold][horizon]
        for (std::size_t f = 0; f < cfg.k_folds; ++f) {
            const ScalerStats scaler = fit_scaler(working.subset(plan.train_idx[f]));
            const TrainingData tr = detail::to_training(working, plan.train_idx[f], scaler, cens);
            const TrainingData val = detail::to_training(working, plan.val_idx[f], scaler, cens);
            TrainConfig fold_cfg = cfg;
            fold_cfg.seed = seeds[f];
            const TrainResult result = train(tr, val, fold_cfg);
            const TrainingData test = detail::to_training(ds, plan.test_idx[f], scaler, cens);
            std::vector<double> per_h;
            for (double h : opt.horizons)
                per_h.push_back(horizon_cindex(result.model, test.x, test.times, test.deltas, h).c_index);
            fold_scores.push_back(std::move(per_h));
        }
        for (std::size_t h = 0; h < opt.horizons.size(); ++h) {
            double avg = 0.0;
            for (std::size_t f = 0; f < fold_scores.size(); ++f) avg += fold_scores[f][h];
            avg /= static_cast<double>(fold_scores.size());
            rows.push_back({q, t_c, opt.horizons[h], avg});
        }
    }

    std::ofstream out = detail::open_report(opt.out_dir, "sensitivity.csv");
    out << "# command=sensitivity\n";
    out << effective_config_lines(cfg);
    out << "# data=" << opt.data_path << "\n";
    out << "quantile,t_c,t_sth,mean_c_index\n";
    for (const Row& r : rows)
        out << detail::real_str(r.quantile) << "," << detail::real_str(r.t_c) << ","
            << detail::real_str(r.t_sth) << "," << detail::real_str(r.c_index) << "\n";
    return 0;
}

}  // namespace weimix
