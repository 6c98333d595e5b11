#pragma once

#include "ctlasso/common.hpp"
#include "ctlasso/dataset.hpp"
#include "ctlasso/estimators.hpp"
#include "ctlasso/lasso_path.hpp"
#include "ctlasso/tmle.hpp"

#include <string>
#include <vector>

namespace ctlasso {

// Stage-by-stage record of the collaborative penalty selection.
struct CtmleTrace {
    std::vector<double> candidate_lambdas;  // decreasing, from lambda_cv down
    std::vector<double> candidate_losses;   // empirical loss at the locking stage
    std::vector<int> candidate_stage;       // 1-based stage in which each was locked
    std::vector<double> cv_losses;          // pooled held-out loss per candidate
    double lambda_selected = 0.0;           // cross-validated choice
    int n_stages = 0;
    double final_lambda = 0.0;              // after the final re-targeting pass
    double critical_residual = 0.0;         // derivative-score diagnostic at final_lambda
    std::vector<std::string> warnings;
};

struct Ctmle1Result {
    AteEstimate estimate;
    CtmleTrace trace;
    Fluctuation fluct;  // the final targeting step
    VectorXd qa_star;
    VectorXd q1_star;
    VectorXd q0_star;
    std::vector<double> eic;
};

// Collaborative penalty selection, stagewise variant. Candidates are the
// grid points at or below the cross-validated penalty; stages repeatedly
// target the current outcome fit with every remaining propensity fit,
// promote the empirical-loss winner, and lock candidates up to it. The
// winner among candidates is chosen by V-fold cross-validation (fold paths
// and fold outcome fits are refit on training rows; the stage schedule is
// the full-data one), then a final pass re-targets the winner's stage
// initial at every strictly smaller penalty.
Ctmle1Result ctmle1(const VectorXd& y_scaled, const VectorXd& a, const MatrixXd& w,
                    const PathCv& ps, const FoldAssignment& folds,
                    const OutcomeFit& q_init, const OutcomeScale& scale,
                    PsBounds bounds = {});

struct Ctmle0Result {
    AteEstimate estimate;
    Fluctuation fluct;
    bool second_covariate_dropped = false;
    double critical_residual = 0.0;
    VectorXd qa_star;
    VectorXd q1_star;
    VectorXd q0_star;
    std::vector<double> eic;
    std::vector<std::string> warnings;
};

// One-step variant: a single fluctuation with the usual weighting covariate
// plus its derivative in the penalty, approximated by the finite difference
// of the propensity fit at the adjacent larger grid penalty.
Ctmle0Result ctmle0(const VectorXd& y_scaled, const VectorXd& a,
                    const VectorXd& g_working, const VectorXd& g_neighbor,
                    const OutcomeFit& q_init, const OutcomeScale& scale);

// (1/n) sum of the derivative covariate times the outcome residual; the
// empirical derivative-in-penalty score. Zero (within tolerance) after the
// one-step variant by construction.
double critical_residual(const VectorXd& y_scaled, const VectorXd& a,
                         const VectorXd& qa_star, const VectorXd& g_working,
                         const VectorXd& g_neighbor);

// Grid neighbor used for the finite difference: the adjacent larger
// penalty, or the adjacent smaller one when already at the top (one-sided).
int neighbor_grid_index(const LassoPath& path, int index);

// Derivative covariate values for the finite difference Δg = g_nb − g.
CleverCovariate derivative_covariate(const VectorXd& a, const VectorXd& g_working,
                                     const VectorXd& g_neighbor);

}  // namespace ctlasso
