#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "weimix/weimix.hpp"

namespace {

// Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
// divergence, 5 acceptance-threshold failure, 1 anything else.
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> p;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "flat key=value config file");
    cmd->add_option("--seed", flags.seed, "random seed (overrides config)");
    cmd->add_option("--p", flags.p, "mixture size (overrides config)");
}

weimix::TrainConfig build_config(const CommonFlags& flags) {
    weimix::TrainConfig cfg;
    if (!flags.config_path.empty()) cfg = weimix::load_config_file(flags.config_path, cfg);
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.p) cfg.p = *flags.p;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Covariate-conditional Weibull mixture survival estimation"};
    app.require_subcommand(1);

    // synth-validate
    auto* sv = app.add_subcommand("synth-validate",
                                  "generate synthetic data, train, compare held-out loss to the truth");
    CommonFlags sv_flags;
    add_common(sv, sv_flags);
    std::optional<std::string> sv_function;
    std::optional<std::size_t> sv_p;
    std::size_t sv_n = 10000;
    double sv_censor = 0.5;
    std::string sv_out = ".";
    sv->add_option("--function", sv_function, "generator: linear, quadratic, or cubic (default: all)");
    sv->add_option("--n", sv_n, "observations to generate")->capture_default_str();
    sv->add_option("--censor-fraction", sv_censor, "fraction of observations to censor")
        ->capture_default_str();
    sv->add_option("--out-dir", sv_out, "report directory")->capture_default_str();

    // train
    auto* tr = app.add_subcommand("train", "k-fold cross-validated training on a CSV dataset");
    CommonFlags tr_flags;
    add_common(tr, tr_flags);
    std::string tr_data, tr_schema, tr_out = ".";
    tr->add_option("--data", tr_data, "dataset CSV")->required();
    tr->add_option("--schema", tr_schema, "dataset schema JSON (overrides config)");
    tr->add_option("--out-dir", tr_out, "report directory")->capture_default_str();

    // predict
    auto* pr = app.add_subcommand("predict", "mean lifetime and survival horizons for every record");
    std::string pr_model, pr_data, pr_schema, pr_out = ".";
    std::vector<double> pr_horizons;
    pr->add_option("--model", pr_model, "model file from train")->required();
    pr->add_option("--data", pr_data, "dataset CSV")->required();
    pr->add_option("--schema", pr_schema, "dataset schema JSON")->required();
    pr->add_option("--horizons", pr_horizons, "survival time horizons")->delimiter(',');
    pr->add_option("--out-dir", pr_out, "report directory")->capture_default_str();

    // sensitivity
    auto* se = app.add_subcommand("sensitivity",
                                  "average concordance per censoring threshold and horizon");
    CommonFlags se_flags;
    add_common(se, se_flags);
    std::string se_data, se_schema, se_out = ".";
    std::vector<double> se_quantiles, se_horizons;
    se->add_option("--data", se_data, "dataset CSV")->required();
    se->add_option("--schema", se_schema, "dataset schema JSON (overrides config)");
    se->add_option("--quantiles", se_quantiles, "censoring threshold quantiles")->delimiter(',');
    se->add_option("--horizons", se_horizons, "survival time horizon grid")->delimiter(',');
    se->add_option("--out-dir", se_out, "report directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (sv->parsed()) {
            weimix::SynthValidateOptions opt;
            opt.config = build_config(sv_flags);
            opt.cases = weimix::resolve_synth_cases(sv_function, sv_flags.p);
            opt.n = sv_n;
            opt.censor_fraction = sv_censor;
            opt.out_dir = sv_out;
            return weimix::cmd_synth_validate(opt);
        }
        if (tr->parsed()) {
            weimix::TrainOptions opt;
            opt.config = build_config(tr_flags);
            if (!tr_schema.empty()) opt.config.schema = tr_schema;
            opt.data_path = tr_data;
            opt.out_dir = tr_out;
            return weimix::cmd_train(opt);
        }
        if (pr->parsed()) {
            weimix::PredictOptions opt;
            opt.model_path = pr_model;
            opt.data_path = pr_data;
            opt.schema_path = pr_schema;
            opt.horizons = pr_horizons;
            opt.out_dir = pr_out;
            return weimix::cmd_predict(opt);
        }
        if (se->parsed()) {
            weimix::SensitivityOptions opt;
            opt.config = build_config(se_flags);
            if (!se_schema.empty()) opt.config.schema = se_schema;
            opt.data_path = se_data;
            if (!se_quantiles.empty()) opt.quantiles = se_quantiles;
            opt.horizons = se_horizons;
            opt.out_dir = se_out;
            return weimix::cmd_sensitivity(opt);
        }
        std::fprintf(stderr, "error: no subcommand selected\n");
        return kExitConfig;
    } catch (const weimix::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const weimix::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const weimix::TrainingDivergedError& e) {
        std::fprintf(stderr, "training diverged at epoch %zu (%s): %s\n", e.epoch, e.block.c_str(),
                     e.what());
        return kExitDiverged;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
