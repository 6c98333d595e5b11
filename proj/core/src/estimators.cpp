#include "ctlasso/estimators.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace ctlasso {

namespace {

void check_unit_scale(const VectorXd& y) {
    for (int i = 0; i < y.size(); ++i) {
        if (y[i] < -1e-9 || y[i] > 1.0 + 1e-9)
            throw DataError("outcome is not on the unit scale");
    }
}

void check_probs(const VectorXd& g) {
    for (int i = 0; i < g.size(); ++i) {
        if (!(g[i] > 0.0 && g[i] < 1.0))
            throw DataError("treatment probabilities must lie strictly inside (0, 1)");
    }
}

double weighted_mean_nll(const VectorXd& y, const VectorXd& eta, const VectorXd* wts) {
    double num = 0.0;
    double den = 0.0;
    for (int i = 0; i < y.size(); ++i) {
        const double p = clamp_prob(expit(eta[i]), 1e-12);
        const double w = wts ? (*wts)[i] : 1.0;
        num += w * (-(y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p)));
        den += w;
    }
    return num / den;
}

MatrixXd outcome_design(const VectorXd& a, const MatrixXd& w, const std::vector<int>& subset) {
    const int n = static_cast<int>(a.size());
    MatrixXd x(n, 2 + static_cast<int>(subset.size()));
    x.col(0).setOnes();
    x.col(1) = a;
    for (std::size_t c = 0; c < subset.size(); ++c) {
        const int j = subset[c];
        if (j < 0 || j >= w.cols()) throw ConfigError("outcome-model covariate index out of range");
        x.col(2 + static_cast<int>(c)) = w.col(j);
    }
    return x;
}

// One IRLS run; returns false when the solve went non-finite or the
// coefficients failed to settle within the iteration budget.
bool irls(const MatrixXd& x, const VectorXd& y, const VectorXd* wts, double ridge,
          VectorXd* beta_out) {
    const int n = static_cast<int>(x.rows());
    const int q = static_cast<int>(x.cols());
    VectorXd beta = VectorXd::Zero(q);
    VectorXd eta = VectorXd::Zero(n);
    double nll = weighted_mean_nll(y, eta, wts);

    for (int it = 0; it < 100; ++it) {
        VectorXd t(n);
        VectorXd z(n);
        for (int i = 0; i < n; ++i) {
            const double p = expit(eta[i]);
            const double var = std::max(p * (1.0 - p), 1e-10);
            const double w = (wts ? (*wts)[i] : 1.0) * var;
            t[i] = w;
            z[i] = eta[i] + (y[i] - p) / var;
        }
        MatrixXd xtx = x.transpose() * t.asDiagonal() * x;
        if (ridge > 0.0) xtx.diagonal().array() += ridge;
        const VectorXd xtz = x.transpose() * (t.asDiagonal() * z);
        const VectorXd solved = xtx.ldlt().solve(xtz);
        if (!solved.allFinite()) return false;
        // An inconsistent (singular) system leaves a residual the solver
        // cannot remove; treat that as failure so the caller stabilizes.
        const double resid = (xtx * solved - xtz).cwiseAbs().maxCoeff();
        const double scale = std::max(1.0, xtz.cwiseAbs().maxCoeff());
        if (resid > 1e-6 * scale) return false;

        VectorXd beta_new = solved;
        VectorXd eta_new = x * beta_new;
        double nll_new = weighted_mean_nll(y, eta_new, wts);
        double step = 1.0;
        int halvings = 0;
        while (nll_new > nll + 1e-12 && halvings < 20) {
            step *= 0.5;
            beta_new = beta + step * (solved - beta);
            eta_new = x * beta_new;
            nll_new = weighted_mean_nll(y, eta_new, wts);
            ++halvings;
        }
        const double moved = (beta_new - beta).cwiseAbs().maxCoeff();
        beta = beta_new;
        eta = eta_new;
        nll = nll_new;
        if (moved < 1e-10) {
            *beta_out = beta;
            return true;
        }
    }
    return false;
}

AteEstimate with_ci(std::string label, double psi, double se) {
    AteEstimate e;
    e.estimator = std::move(label);
    e.psi = psi;
    e.se = se;
    e.ci_lo = psi - kCiZ * se;
    e.ci_hi = psi + kCiZ * se;
    return e;
}

}  // namespace

OutcomeFit fit_outcome_mainterm(const VectorXd& y_scaled, const VectorXd& a,
                                const MatrixXd& w, const std::vector<int>& subset,
                                const VectorXd* weights) {
    if (y_scaled.size() != a.size() || w.rows() != a.size())
        throw DataError("outcome-model inputs have mismatched lengths");
    check_unit_scale(y_scaled);
    if (weights && weights->size() != a.size())
        throw DataError("outcome-model weights have the wrong length");
    if (weights) {
        for (int i = 0; i < weights->size(); ++i)
            if (!((*weights)[i] >= 0.0) || !std::isfinite((*weights)[i]))
                throw DataError("outcome-model weights must be finite and non-negative");
    }

    const MatrixXd x = outcome_design(a, w, subset);
    OutcomeFit fit;
    fit.subset = subset;

    VectorXd beta;
    if (!irls(x, y_scaled, weights, 0.0, &beta)) {
        fit.warnings.push_back(
            "outcome regression was singular or failed to converge; refit with ridge 1e-6");
        if (!irls(x, y_scaled, weights, 1e-6, &beta))
            throw NumericError("outcome regression failed even with ridge stabilization");
    }
    fit.coef = beta;
    predict_outcome(fit, w, &fit.q1, &fit.q0);
    fit.qa.resize(a.size());
    for (int i = 0; i < a.size(); ++i) fit.qa[i] = a[i] > 0.5 ? fit.q1[i] : fit.q0[i];
    return fit;
}

void predict_outcome(const OutcomeFit& fit, const MatrixXd& w, VectorXd* q1, VectorXd* q0) {
    const int n = static_cast<int>(w.rows());
    const int m = static_cast<int>(fit.subset.size());
    if (fit.coef.size() != 2 + m) throw NumericError("outcome model coefficient size mismatch");
    q1->resize(n);
    q0->resize(n);
    for (int i = 0; i < n; ++i) {
        double base = fit.coef[0];
        for (int c = 0; c < m; ++c) base += fit.coef[2 + c] * w(i, fit.subset[c]);
        (*q1)[i] = clamp_prob(expit(base + fit.coef[1]), kProbEps);
        (*q0)[i] = clamp_prob(expit(base), kProbEps);
    }
}

AteEstimate unadjusted(const VectorXd& y, const VectorXd& a) {
    std::vector<double> y1, y0;
    for (int i = 0; i < y.size(); ++i) (a[i] > 0.5 ? y1 : y0).push_back(y[i]);
    if (y1.empty() || y0.empty()) throw DataError("unadjusted contrast needs both arms");
    const double m1 = mean_of(y1);
    const double m0 = mean_of(y0);
    const double s1 = sd_of(y1);
    const double s0 = sd_of(y0);
    const double se = std::sqrt(s1 * s1 / y1.size() + s0 * s0 / y0.size());
    return with_ci("unadj", m1 - m0, se);
}

AteEstimate gcomp(const OutcomeFit& q, const OutcomeScale& scale) {
    AteEstimate e;
    e.estimator = "gcomp";
    e.psi = scale.unscale_effect((q.q1 - q.q0).mean());
    return e;
}

AteEstimate ipw(const VectorXd& y_scaled, const VectorXd& a, const VectorXd& g,
                const OutcomeScale& scale) {
    if (y_scaled.size() != a.size() || g.size() != a.size())
        throw DataError("estimator inputs have mismatched lengths");
    check_unit_scale(y_scaled);
    check_probs(g);
    const int n = static_cast<int>(a.size());
    std::vector<double> s(n);
    for (int i = 0; i < n; ++i)
        s[i] = a[i] > 0.5 ? y_scaled[i] / g[i] : -y_scaled[i] / (1.0 - g[i]);
    const double se = sd_of(s) / std::sqrt(static_cast<double>(n));
    return with_ci("ipw", scale.unscale_effect(mean_of(s)), scale.unscale_effect(se));
}

AteEstimate hajek_ipw(const VectorXd& y_scaled, const VectorXd& a, const VectorXd& g,
                      const OutcomeScale& scale) {
    if (y_scaled.size() != a.size() || g.size() != a.size())
        throw DataError("estimator inputs have mismatched lengths");
    check_unit_scale(y_scaled);
    check_probs(g);
    const int n = static_cast<int>(a.size());
    double w1 = 0.0, w0 = 0.0, num1 = 0.0, num0 = 0.0;
    for (int i = 0; i < n; ++i) {
        if (a[i] > 0.5) {
            const double w = 1.0 / g[i];
            w1 += w;
            num1 += w * y_scaled[i];
        } else {
            const double w = 1.0 / (1.0 - g[i]);
            w0 += w;
            num0 += w * y_scaled[i];
        }
    }
    if (w1 <= 0.0 || w0 <= 0.0) throw DataError("normalized weighting needs both arms");
    const double mu1 = num1 / w1;
    const double mu0 = num0 / w0;
    const double wbar1 = w1 / n;
    const double wbar0 = w0 / n;
    std::vector<double> d(n);
    for (int i = 0; i < n; ++i) {
        if (a[i] > 0.5)
            d[i] = (y_scaled[i] - mu1) / (g[i] * wbar1);
        else
            d[i] = -(y_scaled[i] - mu0) / ((1.0 - g[i]) * wbar0);
    }
    const double se = sd_of(d) / std::sqrt(static_cast<double>(n));
    return with_ci("hajek", scale.unscale_effect(mu1 - mu0), scale.unscale_effect(se));
}

AteEstimate dr_ipw(const VectorXd& y_scaled, const VectorXd& a, const VectorXd& g,
                   const OutcomeFit& q, const OutcomeScale& scale) {
    if (y_scaled.size() != a.size() || g.size() != a.size() || q.qa.size() != a.size())
        throw DataError("estimator inputs have mismatched lengths");
    check_unit_scale(y_scaled);
    check_probs(g);
    const int n = static_cast<int>(a.size());
    std::vector<double> s(n);
    for (int i = 0; i < n; ++i) {
        const double h = a[i] > 0.5 ? 1.0 / g[i] : -1.0 / (1.0 - g[i]);
        s[i] = h * (y_scaled[i] - q.qa[i]) + q.q1[i] - q.q0[i];
    }
    const double se = sd_of(s) / std::sqrt(static_cast<double>(n));
    return with_ci("dr_ipw", scale.unscale_effect(mean_of(s)), scale.unscale_effect(se));
}

AteEstimate hbc(const VectorXd& y_scaled, const VectorXd& a, const VectorXd& g,
                const OutcomeFit& q, const OutcomeScale& scale) {
    if (y_scaled.size() != a.size() || g.size() != a.size() || q.qa.size() != a.size())
        throw DataError("estimator inputs have mismatched lengths");
    check_unit_scale(y_scaled);
    check_probs(g);
    const int n = static_cast<int>(a.size());
    double w1 = 0.0, w0 = 0.0, r1 = 0.0, r0 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double resid = y_scaled[i] - q.qa[i];
        if (a[i] > 0.5) {
            const double w = 1.0 / g[i];
            w1 += w;
            r1 += w * resid;
        } else {
            const double w = 1.0 / (1.0 - g[i]);
            w0 += w;
            r0 += w * resid;
        }
    }
    if (w1 <= 0.0 || w0 <= 0.0) throw DataError("normalized weighting needs both arms");
    r1 /= w1;
    r0 /= w0;
    const double reg = (q.q1 - q.q0).mean();
    const double psi_s = reg + r1 - r0;
    const double wbar1 = w1 / n;
    const double wbar0 = w0 / n;
    std::vector<double> d(n);
    for (int i = 0; i < n; ++i) {
        const double resid = y_scaled[i] - q.qa[i];
        double corr;
        if (a[i] > 0.5)
            corr = (resid - r1) / (g[i] * wbar1);
        else
            corr = -(resid - r0) / ((1.0 - g[i]) * wbar0);
        d[i] = corr + (q.q1[i] - q.q0[i]) - reg;
    }
    const double se = sd_of(d) / std::sqrt(static_cast<double>(n));
    return with_ci("hbc", scale.unscale_effect(psi_s), scale.unscale_effect(se));
}

AteEstimate weighted_regression(const VectorXd& y_scaled, const VectorXd& a,
                                const MatrixXd& w, const std::vector<int>& subset,
                                const VectorXd& g, const OutcomeScale& scale) {
    if (y_scaled.size() != a.size() || g.size() != a.size() || w.rows() != a.size())
        throw DataError("estimator inputs have mismatched lengths");
    check_probs(g);
    VectorXd wts(a.size());
    for (int i = 0; i < a.size(); ++i)
        wts[i] = a[i] > 0.5 ? 1.0 / g[i] : 1.0 / (1.0 - g[i]);
    const OutcomeFit refit = fit_outcome_mainterm(y_scaled, a, w, subset, &wts);

    const int n = static_cast<int>(a.size());
    const double psi_s = (refit.q1 - refit.q0).mean();
    std::vector<double> s(n);
    for (int i = 0; i < n; ++i) {
        const double h = a[i] > 0.5 ? 1.0 / g[i] : -1.0 / (1.0 - g[i]);
        s[i] = h * (y_scaled[i] - refit.qa[i]) + refit.q1[i] - refit.q0[i];
    }
    const double se = sd_of(s) / std::sqrt(static_cast<double>(n));
    AteEstimate e = with_ci("wr", scale.unscale_effect(psi_s), scale.unscale_effect(se));
    return e;
}

}  // namespace ctlasso
