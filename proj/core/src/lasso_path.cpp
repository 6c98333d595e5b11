#include "ctlasso/lasso_path.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ctlasso {

namespace {

double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

struct Standardized {
    MatrixXd xs;            // n x live
    std::vector<int> live;  // original column per xs column
    VectorXd mean;          // length p (original)
    VectorXd sd;            // length p, 0 for dropped constants
};

Standardized standardize(const MatrixXd& x, std::vector<std::string>* warnings) {
    const int n = static_cast<int>(x.rows());
    const int p = static_cast<int>(x.cols());
    Standardized out;
    out.mean = VectorXd::Zero(p);
    out.sd = VectorXd::Zero(p);
    std::vector<int> live;
    for (int j = 0; j < p; ++j) {
        const double m = x.col(j).mean();
        const double var = (x.col(j).array() - m).square().sum() / n;
        out.mean[j] = m;
        if (var <= 0.0) {
            if (warnings) {
                std::ostringstream os;
                os << "constant covariate column " << j << " excluded from penalized fit";
                warnings->push_back(os.str());
            }
            continue;
        }
        out.sd[j] = std::sqrt(var);
        live.push_back(j);
    }
    out.live = std::move(live);
    out.xs.resize(n, static_cast<int>(out.live.size()));
    for (std::size_t c = 0; c < out.live.size(); ++c) {
        const int j = out.live[c];
        out.xs.col(static_cast<int>(c)) = (x.col(j).array() - out.mean[j]) / out.sd[j];
    }
    return out;
}

// Penalized logistic fit by cyclic coordinate descent on a fixed-curvature
// quadratic majorization of the log-likelihood (curvature 1/4 bounds the
// Bernoulli variance). Warm starts carry coefficients down the grid.
class PathSolver {
public:
    PathSolver(const MatrixXd& xs, const VectorXd& a, const PathConfig& cfg)
        : xs_(xs),
          a_(a),
          cfg_(cfg),
          n_(static_cast<int>(xs.rows())),
          p_(static_cast<int>(xs.cols())),
          b_(VectorXd::Zero(xs.cols())),
          is_active_(xs.cols(), 0) {
        const double abar = a.mean();
        b0_ = logit(clamp_prob(abar, 1e-12));
        eta_ = VectorXd::Constant(n_, b0_);
    }

    // Gradient of the unpenalized loss at the current fit, by coordinate.
    VectorXd score() const {
        VectorXd r(n_);
        for (int i = 0; i < n_; ++i) r[i] = a_[i] - expit(eta_[i]);
        return xs_.transpose() * r / n_;
    }

    double lambda_max() const {
        const VectorXd s = score();
        return s.size() == 0 ? 0.0 : s.cwiseAbs().maxCoeff();
    }

    void solve(double lambda) {
        const double thr = 4.0 * lambda;
        long sweeps = 0;
        // Each sweep re-majorizes at the current linear predictor (the 1/4
        // curvature bound keeps every coordinate move a descent step on the
        // true loss), cycles the active set, and once the active set is
        // stable runs a full pass to admit new coordinates.
        while (true) {
            if (++sweeps > cfg_.max_sweeps) fail(lambda);
            VectorXd u = residual();
            double delta = step_intercept(u);
            for (int c : active_) delta = std::max(delta, step_coord(c, u, thr));
            if (delta >= cfg_.tol) continue;

            if (++sweeps > cfg_.max_sweeps) fail(lambda);
            u = residual();
            delta = step_intercept(u);
            bool admitted = false;
            for (int c = 0; c < p_; ++c) {
                const bool was_zero = !is_active_[c];
                delta = std::max(delta, step_coord(c, u, thr));
                if (was_zero && is_active_[c]) admitted = true;
            }
            if (admitted || delta >= cfg_.tol) continue;

            // Surrogate stationary; confirm against the true gradient so a
            // zero coordinate cannot hide a violated optimality condition.
            const VectorXd s = score();
            bool violation = false;
            for (int c = 0; c < p_; ++c) {
                if (!is_active_[c] && std::abs(s[c]) > lambda + 10.0 * cfg_.tol) {
                    violation = true;
                    break;
                }
            }
            if (!violation) break;
        }
        prune_active();
    }

    double b0() const { return b0_; }
    const VectorXd& b() const { return b_; }
    const VectorXd& eta() const { return eta_; }

    double train_deviance() const {
        double s = 0.0;
        for (int i = 0; i < n_; ++i) {
            const double g = clamp_prob(expit(eta_[i]), 1e-12);
            s += a_[i] > 0.5 ? -std::log(g) : -std::log(1.0 - g);
        }
        return 2.0 * s / n_;
    }

    int n_nonzero() const {
        int k = 0;
        for (int c = 0; c < p_; ++c)
            if (b_[c] != 0.0) ++k;
        return k;
    }

private:
    // Working residual of the quadratic surrogate majorized at eta_:
    // u = z - eta with z = eta + 4(a - g).
    VectorXd residual() const {
        VectorXd u(n_);
        for (int i = 0; i < n_; ++i) u[i] = 4.0 * (a_[i] - expit(eta_[i]));
        return u;
    }

    double step_intercept(VectorXd& u) {
        const double d = u.mean();
        b0_ += d;
        u.array() -= d;
        eta_.array() += d;
        return std::abs(d);
    }

    double step_coord(int c, VectorXd& u, double thr) {
        const double old = b_[c];
        const double cand = soft_threshold(old + xs_.col(c).dot(u) / n_, thr);
        const double d = cand - old;
        if (d != 0.0) {
            b_[c] = cand;
            u -= d * xs_.col(c);
            eta_ += d * xs_.col(c);
            if (cand != 0.0 && !is_active_[c]) {
                is_active_[c] = 1;
                active_.push_back(c);
            }
        }
        return std::abs(d);
    }

    void prune_active() {
        std::vector<int> keep;
        keep.reserve(active_.size());
        for (int c : active_) {
            if (b_[c] != 0.0) {
                keep.push_back(c);
            } else {
                is_active_[c] = 0;
            }
        }
        active_ = std::move(keep);
    }

    [[noreturn]] void fail(double lambda) const {
        std::ostringstream os;
        os << "penalized logistic fit did not converge within " << cfg_.max_sweeps
           << " sweeps at lambda=" << format_double(lambda);
        throw NumericError(os.str());
    }

    const MatrixXd& xs_;
    const VectorXd& a_;
    PathConfig cfg_;
    int n_ = 0;
    int p_ = 0;
    double b0_ = 0.0;
    VectorXd b_;
    VectorXd eta_;
    std::vector<int> active_;
    std::vector<char> is_active_;
};

void validate_inputs(const MatrixXd& x, const VectorXd& a, const PathConfig& cfg) {
    if (x.rows() != a.size()) throw DataError("covariate rows do not match treatment length");
    if (x.rows() < 2) throw DataError("need at least two observations for the treatment model");
    if (cfg.grid_size < 2) throw ConfigError("penalty grid needs at least two points");
    if (cfg.lambda_min_ratio < 0.0 || cfg.lambda_min_ratio >= 1.0)
        throw ConfigError("lambda_min_ratio must lie in [0, 1)");
    for (int i = 0; i < a.size(); ++i) {
        if (a[i] != 0.0 && a[i] != 1.0) throw DataError("treatment must be binary for the penalized fit");
    }
    if (a.mean() <= 0.0 || a.mean() >= 1.0) throw DataError("treatment has only one arm");
}

LassoPath run_path(const MatrixXd& x, const VectorXd& a, const VectorXd& lambdas,
                   const PathConfig& cfg, Standardized std_x) {
    const int n = static_cast<int>(x.rows());
    const int p = static_cast<int>(x.cols());
    const int k = static_cast<int>(lambdas.size());

    LassoPath path;
    path.lambdas = lambdas;
    path.intercepts = VectorXd::Zero(k);
    path.coefs = MatrixXd::Zero(k, p);
    path.n_active.assign(k, 0);
    path.train_deviance = VectorXd::Zero(k);
    path.col_mean = std_x.mean;
    path.col_sd = std_x.sd;

    PathSolver solver(std_x.xs, a, cfg);
    for (int gi = 0; gi < k; ++gi) {
        solver.solve(lambdas[gi]);
        const VectorXd& b = solver.b();
        double inter = solver.b0();
        for (std::size_t c = 0; c < std_x.live.size(); ++c) {
            const int j = std_x.live[c];
            const double slope = b[static_cast<int>(c)] / std_x.sd[j];
            path.coefs(gi, j) = slope;
            inter -= slope * std_x.mean[j];
        }
        path.intercepts[gi] = inter;
        path.n_active[gi] = solver.n_nonzero();
        path.train_deviance[gi] = solver.train_deviance();
    }
    return path;
}

}  // namespace

LassoPath lasso_logistic_path(const MatrixXd& x, const VectorXd& a, const PathConfig& cfg) {
    validate_inputs(x, a, cfg);
    std::vector<std::string> warnings;
    Standardized std_x = standardize(x, &warnings);
    if (std_x.live.empty()) throw DataError("every covariate column is constant");

    PathSolver probe(std_x.xs, a, cfg);
    const double lmax = probe.lambda_max();
    if (!(lmax > 0.0)) throw NumericError("null-model score is zero; penalty grid undefined");

    double ratio = cfg.lambda_min_ratio;
    if (ratio == 0.0) ratio = static_cast<int>(x.rows()) > static_cast<int>(std_x.live.size()) ? 1e-3 : 5e-2;

    const int k = cfg.grid_size;
    VectorXd lambdas(k);
    for (int gi = 0; gi < k; ++gi)
        lambdas[gi] = lmax * std::pow(ratio, static_cast<double>(gi) / (k - 1));

    LassoPath path = run_path(x, a, lambdas, cfg, std::move(std_x));
    path.warnings = std::move(warnings);
    return path;
}

LassoPath lasso_logistic_path_fixed_grid(const MatrixXd& x, const VectorXd& a,
                                         const VectorXd& lambdas, const PathConfig& cfg) {
    validate_inputs(x, a, cfg);
    if (lambdas.size() < 1) throw ConfigError("empty penalty grid");
    for (int gi = 0; gi + 1 < lambdas.size(); ++gi) {
        if (!(lambdas[gi] > lambdas[gi + 1])) throw ConfigError("penalty grid must be strictly decreasing");
    }
    if (!(lambdas[lambdas.size() - 1] > 0.0)) throw ConfigError("penalties must be positive");

    std::vector<std::string> warnings;
    Standardized std_x = standardize(x, &warnings);
    if (std_x.live.empty()) throw DataError("every covariate column is constant");
    LassoPath path = run_path(x, a, lambdas, cfg, std::move(std_x));
    path.warnings = std::move(warnings);
    return path;
}

int LassoPath::grid_index_at_or_above(double lambda) const {
    const int n = k();
    if (n == 0) throw NumericError("empty path");
    const double rel = 1e-9;
    if (lambda > lambdas[0] * (1.0 + rel))
        throw NumericError("requested penalty " + format_double(lambda) +
                           " above the top of the grid " + format_double(lambdas[0]));
    if (lambda < lambdas[n - 1] * (1.0 - rel))
        throw NumericError("requested penalty " + format_double(lambda) +
                           " below the bottom of the grid " + format_double(lambdas[n - 1]));
    int at = 0;
    for (int gi = 0; gi < n; ++gi) {
        if (lambdas[gi] >= lambda * (1.0 - rel)) at = gi;
        else break;
    }
    return at;
}

PropensityFit predict_ps(const LassoPath& path, double lambda, const MatrixXd& x, PsBounds bounds) {
    if (x.cols() != path.coefs.cols())
        throw DataError("covariate count does not match the fitted treatment model");
    if (!(bounds.lo > 0.0 && bounds.hi < 1.0 && bounds.lo < bounds.hi))
        throw ConfigError("propensity bounds must satisfy 0 < lo < hi < 1");
    const int gi = path.grid_index_at_or_above(lambda);
    PropensityFit fit;
    fit.lambda = path.lambdas[gi];
    fit.bounds = bounds;
    const VectorXd eta = (x * path.coefs.row(gi).transpose()).array() + path.intercepts[gi];
    fit.g.resize(eta.size());
    for (int i = 0; i < eta.size(); ++i)
        fit.g[i] = std::min(bounds.hi, std::max(bounds.lo, expit(eta[i])));
    return fit;
}

PathCv fit_path_cv(const MatrixXd& x, const VectorXd& a, const FoldAssignment& folds,
                   const PathConfig& cfg) {
    const int n = static_cast<int>(x.rows());
    if (static_cast<int>(folds.fold_id.size()) != n)
        throw DataError("fold assignment length does not match the sample");

    PathCv out;
    out.full = lasso_logistic_path(x, a, cfg);
    const int k = out.full.k();
    const int v = folds.v;

    MatrixXd fold_mean(v, k);
    out.fold_paths.reserve(v);
    for (int f = 0; f < v; ++f) {
        const std::vector<int> train = folds.train_rows(f);
        const std::vector<int> val = folds.validation_rows(f);
        if (train.empty() || val.empty()) throw DataError("empty cross-validation fold");
        MatrixXd xt(static_cast<int>(train.size()), x.cols());
        VectorXd at(static_cast<int>(train.size()));
        for (std::size_t r = 0; r < train.size(); ++r) {
            xt.row(static_cast<int>(r)) = x.row(train[r]);
            at[static_cast<int>(r)] = a[train[r]];
        }
        LassoPath fp = lasso_logistic_path_fixed_grid(xt, at, out.full.lambdas, cfg);

        // Held-out deviance per grid point: mean over validation units of
        // twice the negative Bernoulli log-likelihood, unbounded fit
        // probabilities clamped only for log safety.
        for (int gi = 0; gi < k; ++gi) {
            double s = 0.0;
            for (int r : val) {
                const double eta = fp.intercepts[gi] + x.row(r).dot(fp.coefs.row(gi));
                const double g = clamp_prob(expit(eta), 1e-12);
                s += a[r] > 0.5 ? -2.0 * std::log(g) : -2.0 * std::log(1.0 - g);
            }
            fold_mean(f, gi) = s / static_cast<double>(val.size());
        }
        out.fold_paths.push_back(std::move(fp));
    }

    out.curve.lambdas = out.full.lambdas;
    out.curve.deviance = VectorXd::Zero(k);
    out.curve.se = VectorXd::Zero(k);
    for (int gi = 0; gi < k; ++gi) {
        std::vector<double> vals(v);
        for (int f = 0; f < v; ++f) vals[f] = fold_mean(f, gi);
        out.curve.deviance[gi] = mean_of(vals);
        out.curve.se[gi] = v > 1 ? sd_of(vals) / std::sqrt(static_cast<double>(v)) : 0.0;
    }
    // Ties resolve toward the larger penalty (grid is decreasing, so the
    // first strict improvement wins).
    int best = 0;
    for (int gi = 1; gi < k; ++gi)
        if (out.curve.deviance[gi] < out.curve.deviance[best]) best = gi;
    out.curve.cv_index = best;
    out.curve.lambda_cv = out.curve.lambdas[best];
    return out;
}

CvCurve cv_deviance(const PathConfig& cfg, const Dataset& data, const FoldAssignment& folds) {
    return fit_path_cv(data.w, data.a, folds, cfg).curve;
}

}  // namespace ctlasso
