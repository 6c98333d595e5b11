#pragma once

#include "ctlasso/common.hpp"
#include "ctlasso/dataset.hpp"

#include <string>
#include <vector>

namespace ctlasso {

// Long-format claims data: how many times each patient received each coded
// procedure, grouped into source categories. Duplicate (patient, source,
// code) rows are aggregated by summation on load.
struct ClaimsTable {
    struct Rec {
        std::string patient;
        std::string source;
        std::string code;
        double count = 0.0;
    };
    std::vector<Rec> records;  // aggregated, deterministic order

    std::vector<std::string> sources() const;  // sorted unique
};

ClaimsTable parse_claims_csv(const std::string& text);
ClaimsTable load_claims(const std::string& path);

struct HdpsConfig {
    int k1 = 100;  // codes kept per source after the prevalence screen
    int k2 = 200;  // indicator covariates kept after confounding ranking
};

struct HdpsCovariate {
    std::string source;
    std::string code;
    std::string kind;  // nonzero | above_median | above_q75
    VectorXd values;   // binary, one per cohort row
    double bross_bias = 1.0;
    int rank = 0;  // 1-based after ranking
    bool flagged_duplicate = false;
    bool flagged_constant = false;
    bool flagged_rr_undefined = false;
};

// Step 2: per-source prevalence screen. Prevalence is the fraction of the
// cohort with a positive count; codes occurring for none or all are dropped,
// the rest rank by max(p, 1-p) descending (ties by code) and the top k1 per
// source survive. Returned in (source, rank) order.
std::vector<std::pair<std::string, std::string>> prevalence_screen(
    const ClaimsTable& claims, const std::vector<std::string>& cohort, int k1);

// Step 3: expand each selected code into three binary indicators (positive
// count, above the cohort median, above the cohort 75% quantile; quantiles by
// linear interpolation with absent rows counted as zero). Duplicate or
// constant columns are kept but flagged.
std::vector<HdpsCovariate> expand_indicators(
    const ClaimsTable& claims,
    const std::vector<std::pair<std::string, std::string>>& selected,
    const std::vector<std::string>& cohort);

// Step 4: rank candidates by the Bross confounding formula and keep the top
// k2. A continuous outcome is dichotomized at its median for the risk ratio
// (flagged via *outcome_dichotomized). Undefined risk ratios give bias 1.
std::vector<HdpsCovariate> bross_rank(std::vector<HdpsCovariate> candidates,
                                      const VectorXd& a, const VectorXd& y, int k2,
                                      bool* outcome_dichotomized = nullptr);

struct HdpsResult {
    Dataset augmented;
    std::vector<HdpsCovariate> selected;  // ranked, without the values vectors cleared
    int n_candidates = 0;
    bool outcome_dichotomized = false;
    std::vector<std::string> warnings;
};

// Full pipeline: screen, expand, rank, and append the selected indicators to
// the baseline covariates. baseline_ids aligns claims patients to baseline
// rows; claims patients absent from the baseline are an error.
HdpsResult hdps_pipeline(const ClaimsTable& claims, const Dataset& baseline,
                         const std::vector<std::string>& baseline_ids,
                         const HdpsConfig& cfg);

// Linear-interpolation quantile (the common spreadsheet/statistics default).
double interp_quantile(std::vector<double> values, double p);

}  // namespace ctlasso
