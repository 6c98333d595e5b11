#pragma once

#include "ctlasso/common.hpp"
#include "ctlasso/ctmle.hpp"
#include "ctlasso/dataset.hpp"
#include "ctlasso/estimators.hpp"
#include "ctlasso/lasso_path.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ctlasso {

// ---------- shared estimator driver ----------

// Estimator labels: the plain variants use the cross-validated penalty; the
// _star variants reuse the penalty exported by the collaborative selector.
extern const std::vector<std::string> kFullRoster;

struct RosterOptions {
    std::vector<std::string> roster = kFullRoster;
    std::vector<int> q_subset;  // outcome-model covariate columns; empty = all
    int v_folds = 10;
    std::uint64_t seed = 0;  // drives the fold assignment
    PathConfig path;
    PsBounds bounds;
};

struct RosterResult {
    std::vector<AteEstimate> estimates;  // roster order
    std::optional<CtmleTrace> trace;     // present when the collaborative selector ran
    double lambda_cv = 0.0;
    std::optional<double> lambda_ctmle;
    CvCurve curve;                       // empty when no penalized fit was needed
    std::vector<int> n_active;           // per grid point, aligned with curve
    std::vector<std::string> warnings;
};

RosterResult run_estimators(const Dataset& data, const RosterOptions& opts);

// ---------- quasi-experiment ----------

struct SimDesign {
    MatrixXd base_w;
    VectorXd base_a;
    std::vector<std::string> column_names;
    std::vector<int> confounders;  // ordered by |Pearson r with treatment|, descending
    VectorXd beta;                 // one per confounder, frozen at design time
    int q_subset_size = 10;
    int n_rep = 200;
    int n_per_rep = 1000;
    std::uint64_t seed = 0;
    double true_ate = 1.0;
    std::vector<std::string> warnings;
};

SimDesign build_design(const MatrixXd& base_w, const VectorXd& base_a, std::uint64_t seed,
                       const std::vector<std::string>& column_names = {});

Dataset draw_replication(const SimDesign& design, std::uint64_t rep_seed);

// Seed stream for replication r of a suite run.
std::uint64_t replication_seed(std::uint64_t suite_seed, int rep);

struct EstimatorMetrics {
    std::string label;
    double bias = 0.0;
    double se = 0.0;   // population sd of the estimates
    double mse = 0.0;
    std::optional<double> coverage;
    std::optional<double> avg_ci_length;
    int n_used = 0;
};

struct SimReport {
    std::vector<std::string> roster;
    std::vector<int> rep_ids;  // successful replications, ascending
    MatrixXd estimates;        // rep x estimator
    MatrixXd ci_lo;            // NaN where no interval exists
    MatrixXd ci_hi;
    std::vector<EstimatorMetrics> metrics;
    std::vector<std::pair<int, std::string>> failures;
    double true_ate = 1.0;
    std::uint64_t seed = 0;
};

struct SuiteConfig {
    std::vector<std::string> roster = kFullRoster;
    int v_folds = 10;
    PathConfig path;
    PsBounds bounds;
    int threads = 1;
};

// Runs every replication, aggregates bias / sd / MSE / coverage / CI length
// against the design's true effect. Replication failures are recorded and
// excluded; at 1% failures or more the whole run aborts.
SimReport run_suite(const SimDesign& design, const SuiteConfig& cfg);

struct PairwisePoint {
    int rep_id = 0;
    double psi_a = 0.0;
    double psi_b = 0.0;
    int cover_a = -1;  // -1 when the estimator has no interval
    int cover_b = -1;
};

struct PairwiseTable {
    std::string label_a;
    std::string label_b;
    std::vector<PairwisePoint> points;
};

PairwiseTable pairwise_report(const SimReport& report, const std::string& label_a,
                              const std::string& label_b);

// Synthetic stand-in for a claims-derived covariate base: sparse binary and
// small-count columns with a mildly nonlinear treatment mechanism.
struct SyntheticBase {
    MatrixXd w;
    VectorXd a;
    std::vector<std::string> column_names;
};

SyntheticBase synthetic_base(int n, int p, std::uint64_t seed);

}  // namespace ctlasso
