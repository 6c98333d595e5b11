#pragma once

#include "ctlasso/common.hpp"
#include "ctlasso/dataset.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ctlasso {

// Main-terms logistic outcome regression on [1, A, W_subset], fit to the
// unit-interval outcome by iteratively reweighted least squares. Predictions
// are stored for both treatment arms.
struct OutcomeFit {
    VectorXd q1;             // predicted outcome with treatment set to 1
    VectorXd q0;             // predicted outcome with treatment set to 0
    VectorXd qa;             // prediction at the observed arm
    VectorXd coef;           // [intercept, treatment, subset...]
    std::vector<int> subset; // covariate columns used
    std::vector<std::string> warnings;
};

OutcomeFit fit_outcome_mainterm(const VectorXd& y_scaled, const VectorXd& a,
                                const MatrixXd& w, const std::vector<int>& subset,
                                const VectorXd* weights = nullptr);

// Evaluate a fitted main-terms model on new data.
void predict_outcome(const OutcomeFit& fit, const MatrixXd& w, VectorXd* q1, VectorXd* q0);

struct AteEstimate {
    std::string estimator;
    double psi = 0.0;
    std::optional<double> se;
    std::optional<double> ci_lo;
    std::optional<double> ci_hi;
    std::optional<double> lambda_used;
};

// Difference in raw arm means with the two-sample (Welch) standard error.
AteEstimate unadjusted(const VectorXd& y, const VectorXd& a);

// Plug-in mean difference from the outcome regression; no standard error.
AteEstimate gcomp(const OutcomeFit& q, const OutcomeScale& scale);

// Horvitz-Thompson inverse-probability weighting; SE from the sample sd of
// the per-unit summand.
AteEstimate ipw(const VectorXd& y_scaled, const VectorXd& a, const VectorXd& g,
                const OutcomeScale& scale);

// Ratio (normalized-weight) estimator; SE from its influence curve.
AteEstimate hajek_ipw(const VectorXd& y_scaled, const VectorXd& a, const VectorXd& g,
                      const OutcomeScale& scale);

// Augmented IPW: weighted residual plus regression difference.
AteEstimate dr_ipw(const VectorXd& y_scaled, const VectorXd& a, const VectorXd& g,
                   const OutcomeFit& q, const OutcomeScale& scale);

// Regression estimate plus normalized-weight residual corrections per arm.
AteEstimate hbc(const VectorXd& y_scaled, const VectorXd& a, const VectorXd& g,
                const OutcomeFit& q, const OutcomeScale& scale);

// Refit the outcome regression with weights a/g + (1-a)/(1-g), then take the
// plug-in difference; SE from the augmented-IPW summand at the refit.
AteEstimate weighted_regression(const VectorXd& y_scaled, const VectorXd& a,
                                const MatrixXd& w, const std::vector<int>& subset,
                                const VectorXd& g, const OutcomeScale& scale);

constexpr double kCiZ = 1.96;

}  // namespace ctlasso
