#pragma once

#include "ctlasso/common.hpp"
#include "ctlasso/dataset.hpp"

#include <string>
#include <vector>

namespace ctlasso {

struct PathConfig {
    int grid_size = 100;
    // 0 selects the default: 1e-3 when n > p, 5e-2 otherwise.
    double lambda_min_ratio = 0.0;
    // Convergence: largest coefficient move in one majorize/solve round.
    double tol = 1e-7;
    // Total coordinate sweeps allowed per grid point before giving up.
    long max_sweeps = 100000;

    bool operator==(const PathConfig&) const = default;
};

// L1-penalized logistic regression path for the treatment mechanism.
// Coefficients are stored on the original covariate scale; the penalty is
// applied on internally standardized columns (mean 0, variance 1) with an
// unpenalized intercept. lambdas[0] is the smallest penalty at which every
// slope is exactly zero.
struct LassoPath {
    VectorXd lambdas;         // strictly decreasing
    VectorXd intercepts;      // per grid point
    MatrixXd coefs;           // K x p, original scale
    std::vector<int> n_active;
    VectorXd train_deviance;  // mean twice-NLL on the fitting sample
    VectorXd col_mean;        // standardization used internally
    VectorXd col_sd;          // 0 marks a constant column (slope fixed at 0)
    std::vector<std::string> warnings;

    int k() const { return static_cast<int>(lambdas.size()); }
    // Snapping rule for off-grid penalties: the nearest grid point at or
    // above the requested value. Throws NumericError outside the grid range.
    int grid_index_at_or_above(double lambda) const;
};

LassoPath lasso_logistic_path(const MatrixXd& x, const VectorXd& a,
                              const PathConfig& cfg = {});

// Refit on a fixed, shared penalty grid (used by cross-validation so every
// fold is scored at identical penalties).
LassoPath lasso_logistic_path_fixed_grid(const MatrixXd& x, const VectorXd& a,
                                         const VectorXd& lambdas,
                                         const PathConfig& cfg = {});

struct PsBounds {
    double lo = 0.025;
    double hi = 0.975;

    bool operator==(const PsBounds&) const = default;
};

// Treatment probabilities at one penalty, truncated into [lo, hi].
struct PropensityFit {
    double lambda = 0.0;
    VectorXd g;
    PsBounds bounds;
};

PropensityFit predict_ps(const LassoPath& path, double lambda, const MatrixXd& x,
                         PsBounds bounds = {});

// Cross-validated binomial deviance (twice the negative log-likelihood of
// the held-out treatment indicator) along the shared penalty grid.
struct CvCurve {
    VectorXd lambdas;
    VectorXd deviance;  // mean over folds
    VectorXd se;        // sd over folds / sqrt(V)
    double lambda_cv = 0.0;
    int cv_index = 0;
};

// Full-sample path plus per-fold refits on the shared grid; callers that
// need both the curve and the fold fits (collaborative selection) fit once.
struct PathCv {
    LassoPath full;
    std::vector<LassoPath> fold_paths;
    CvCurve curve;
};

PathCv fit_path_cv(const MatrixXd& x, const VectorXd& a, const FoldAssignment& folds,
                   const PathConfig& cfg = {});

CvCurve cv_deviance(const PathConfig& cfg, const Dataset& data, const FoldAssignment& folds);

}  // namespace ctlasso
