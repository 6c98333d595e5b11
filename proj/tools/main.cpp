// Command line front end: estimate | hdps | simulate | path.
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>

#include "ctlasso/commands.hpp"
#include "ctlasso/run_config.hpp"

#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using ctlasso::RunConfig;

std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// Flag holders; only flags the user actually passed override the config file.
struct Overrides {
    std::string config_path;
    std::string input, claims, out_dir, outcome_col, treatment_col, id_col, base_csv;
    std::string roster, q_columns;
    std::uint64_t seed = 0;
    int threads = 0, v_folds = 0, grid_size = 0, k1 = 0, k2 = 0;
    int n_rep = 0, n_per_rep = 0, q_subset_size = 0, base_n = 0, base_p = 0;
    double lambda_min_ratio = 0.0, ps_lo = 0.0, ps_hi = 0.0;
    bool no_ctmle_flag = false;
};

void add_common_flags(CLI::App* cmd, Overrides* ov) {
    cmd->add_option("--config", ov->config_path, "JSON configuration file");
    cmd->add_option("--out", ov->out_dir, "output directory");
    cmd->add_option("--seed", ov->seed, "master RNG seed");
    cmd->add_option("--threads", ov->threads, "worker threads (0 = all cores)");
}

void apply(const CLI::App* cmd, RunConfig* cfg, const Overrides& ov) {
    auto passed = [&](const std::string& name) { return cmd->count(name) > 0; };
    if (passed("--out")) cfg->out_dir = ov.out_dir;
    if (passed("--seed")) cfg->seed = ov.seed;
    if (passed("--threads")) cfg->threads = ov.threads;
    if (cmd->get_option_no_throw("--input") && passed("--input")) cfg->input = ov.input;
    if (cmd->get_option_no_throw("--claims") && passed("--claims")) cfg->claims = ov.claims;
    if (cmd->get_option_no_throw("--outcome-col") && passed("--outcome-col"))
        cfg->outcome_col = ov.outcome_col;
    if (cmd->get_option_no_throw("--treatment-col") && passed("--treatment-col"))
        cfg->treatment_col = ov.treatment_col;
    if (cmd->get_option_no_throw("--id-col") && passed("--id-col")) cfg->id_col = ov.id_col;
    if (cmd->get_option_no_throw("--roster") && passed("--roster"))
        cfg->roster = split_csv_list(ov.roster);
    if (cmd->get_option_no_throw("--q-columns") && passed("--q-columns"))
        cfg->q_columns = split_csv_list(ov.q_columns);
    if (cmd->get_option_no_throw("--folds") && passed("--folds")) cfg->v_folds = ov.v_folds;
    if (cmd->get_option_no_throw("--grid-size") && passed("--grid-size"))
        cfg->path.grid_size = ov.grid_size;
    if (cmd->get_option_no_throw("--lambda-min-ratio") && passed("--lambda-min-ratio"))
        cfg->path.lambda_min_ratio = ov.lambda_min_ratio;
    if (cmd->get_option_no_throw("--ps-lo") && passed("--ps-lo")) cfg->bounds.lo = ov.ps_lo;
    if (cmd->get_option_no_throw("--ps-hi") && passed("--ps-hi")) cfg->bounds.hi = ov.ps_hi;
    if (cmd->get_option_no_throw("--k1") && passed("--k1")) cfg->k1 = ov.k1;
    if (cmd->get_option_no_throw("--k2") && passed("--k2")) cfg->k2 = ov.k2;
    if (cmd->get_option_no_throw("--n-rep") && passed("--n-rep")) cfg->n_rep = ov.n_rep;
    if (cmd->get_option_no_throw("--n-per-rep") && passed("--n-per-rep"))
        cfg->n_per_rep = ov.n_per_rep;
    if (cmd->get_option_no_throw("--q-subset-size") && passed("--q-subset-size"))
        cfg->q_subset_size = ov.q_subset_size;
    if (cmd->get_option_no_throw("--base-csv") && passed("--base-csv"))
        cfg->base_csv = ov.base_csv;
    if (cmd->get_option_no_throw("--base-n") && passed("--base-n")) cfg->base_n = ov.base_n;
    if (cmd->get_option_no_throw("--base-p") && passed("--base-p")) cfg->base_p = ov.base_p;
    if (cmd->get_option_no_throw("--no-ctmle-flag") && passed("--no-ctmle-flag"))
        cfg->path_with_ctmle = false;
}

int dispatch(const std::string& command, const CLI::App* cmd, const Overrides& ov) {
    try {
        RunConfig cfg;
        if (!ov.config_path.empty()) cfg = ctlasso::load_config(ov.config_path);
        cfg.command = command;
        apply(cmd, &cfg, ov);
        ctlasso::run_command(cfg);
        return 0;
    } catch (const ctlasso::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const ctlasso::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const ctlasso::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "ctlasso: average treatment effect estimation with collaboratively "
        "tuned L1-penalized propensity scores"};
    app.require_subcommand(1);

    Overrides ov;

    CLI::App* est = app.add_subcommand("estimate", "estimate the ATE on a dataset CSV");
    add_common_flags(est, &ov);
    est->add_option("--input", ov.input, "dataset CSV");
    est->add_option("--outcome-col", ov.outcome_col, "outcome column name");
    est->add_option("--treatment-col", ov.treatment_col, "treatment column name");
    est->add_option("--roster", ov.roster, "comma separated estimator labels");
    est->add_option("--q-columns", ov.q_columns, "outcome-model covariates (comma separated)");
    est->add_option("--folds", ov.v_folds, "cross-validation folds");
    est->add_option("--grid-size", ov.grid_size, "penalty grid size");
    est->add_option("--lambda-min-ratio", ov.lambda_min_ratio, "smallest/largest penalty ratio");
    est->add_option("--ps-lo", ov.ps_lo, "lower propensity bound");
    est->add_option("--ps-hi", ov.ps_hi, "upper propensity bound");

    CLI::App* hd = app.add_subcommand("hdps", "screen and rank claims-code covariates");
    add_common_flags(hd, &ov);
    hd->add_option("--input", ov.input, "baseline cohort CSV");
    hd->add_option("--claims", ov.claims, "long-format claims CSV");
    hd->add_option("--outcome-col", ov.outcome_col, "outcome column name");
    hd->add_option("--treatment-col", ov.treatment_col, "treatment column name");
    hd->add_option("--id-col", ov.id_col, "patient id column name");
    hd->add_option("--k1", ov.k1, "codes kept per source");
    hd->add_option("--k2", ov.k2, "indicator covariates kept overall");

    CLI::App* sim = app.add_subcommand("simulate", "run the replication suite");
    add_common_flags(sim, &ov);
    sim->add_option("--roster", ov.roster, "comma separated estimator labels");
    sim->add_option("--folds", ov.v_folds, "cross-validation folds");
    sim->add_option("--n-rep", ov.n_rep, "number of replications");
    sim->add_option("--n-per-rep", ov.n_per_rep, "sample size per replication");
    sim->add_option("--q-subset-size", ov.q_subset_size, "confounders given to the outcome model");
    sim->add_option("--base-csv", ov.base_csv, "covariate/treatment base population CSV");
    sim->add_option("--base-n", ov.base_n, "synthetic base rows");
    sim->add_option("--base-p", ov.base_p, "synthetic base columns");
    sim->add_option("--grid-size", ov.grid_size, "penalty grid size");
    sim->add_option("--lambda-min-ratio", ov.lambda_min_ratio, "smallest/largest penalty ratio");

    CLI::App* path = app.add_subcommand("path", "dump the penalty path and CV curve");
    add_common_flags(path, &ov);
    path->add_option("--input", ov.input, "dataset CSV");
    path->add_option("--outcome-col", ov.outcome_col, "outcome column name");
    path->add_option("--treatment-col", ov.treatment_col, "treatment column name");
    path->add_option("--folds", ov.v_folds, "cross-validation folds");
    path->add_option("--grid-size", ov.grid_size, "penalty grid size");
    path->add_option("--lambda-min-ratio", ov.lambda_min_ratio, "smallest/largest penalty ratio");
    path->add_flag("--no-ctmle-flag", ov.no_ctmle_flag,
                   "skip the collaborative selector when marking the grid");

    CLI11_PARSE(app, argc, argv);

    if (est->parsed()) return dispatch("estimate", est, ov);
    if (hd->parsed()) return dispatch("hdps", hd, ov);
    if (sim->parsed()) return dispatch("simulate", sim, ov);
    return dispatch("path", path, ov);
}
