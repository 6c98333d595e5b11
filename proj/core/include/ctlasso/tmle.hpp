#pragma once

#include "ctlasso/common.hpp"
#include "ctlasso/dataset.hpp"
#include "ctlasso/estimators.hpp"

#include <string>
#include <vector>

namespace ctlasso {

// Weighting covariate for the targeted update. h1/h0 are the values with
// treatment set to 1/0; h is the value at the observed arm.
struct CleverCovariate {
    VectorXd h;
    VectorXd h1;
    VectorXd h0;

    static CleverCovariate from_ps(const VectorXd& a, const VectorXd& g);
};

struct Fluctuation {
    VectorXd eps;      // one coefficient per covariate
    bool converged = false;
    int iterations = 0;
    double loss = 0.0;  // mean binomial NLL after the update
    std::vector<std::string> warnings;
};

struct FluctuationResult {
    Fluctuation fluct;
    VectorXd qa_star;
    VectorXd q1_star;
    VectorXd q0_star;
};

// Maximum-likelihood logistic fluctuation of the outcome predictions along
// the given covariates, with logit(q) as a fixed offset. Throws NumericError
// if the score equations cannot be driven to zero.
FluctuationResult fluctuate(const VectorXd& y_scaled, const VectorXd& qa,
                            const VectorXd& q1, const VectorXd& q0,
                            const std::vector<CleverCovariate>& covs);

// Influence-curve standard error: sample sd of the per-unit contributions
// over sqrt(n), mapped back to the raw outcome scale.
double eic_se(const std::vector<double>& eic, const OutcomeScale& scale);

struct TmleResult {
    AteEstimate estimate;
    Fluctuation fluct;
    VectorXd qa_star;
    VectorXd q1_star;
    VectorXd q0_star;
    std::vector<double> eic;  // per-unit contributions on the unit scale
};

TmleResult tmle(const VectorXd& y_scaled, const VectorXd& a, const VectorXd& g,
                const OutcomeFit& q, const OutcomeScale& scale,
                const std::string& label = "tmle");

// Targeted estimate from already-updated predictions (shared by the
// collaborative selectors which manage their own fluctuations).
TmleResult tmle_from_predictions(const VectorXd& y_scaled, const VectorXd& a,
                                 const VectorXd& g, const VectorXd& qa_star,
                                 const VectorXd& q1_star, const VectorXd& q0_star,
                                 const OutcomeScale& scale, const std::string& label);

}  // namespace ctlasso
