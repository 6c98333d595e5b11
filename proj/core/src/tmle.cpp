#include "ctlasso/tmle.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace ctlasso {

namespace {

constexpr double kScoreTol = 1e-10;
constexpr int kMaxNewton = 100;
constexpr int kMaxHalvings = 50;

double mean_nll(const VectorXd& y, const VectorXd& p) {
    double s = 0.0;
    for (int i = 0; i < y.size(); ++i) {
        const double q = clamp_prob(p[i], 1e-12);
        s += -(y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q));
    }
    return s / y.size();
}

}  // namespace

CleverCovariate CleverCovariate::from_ps(const VectorXd& a, const VectorXd& g) {
    if (a.size() != g.size()) throw DataError("treatment and propensity lengths differ");
    CleverCovariate c;
    const int n = static_cast<int>(a.size());
    c.h.resize(n);
    c.h1.resize(n);
    c.h0.resize(n);
    for (int i = 0; i < n; ++i) {
        if (!(g[i] > 0.0 && g[i] < 1.0))
            throw DataError("propensity values must lie strictly inside (0, 1)");
        c.h1[i] = 1.0 / g[i];
        c.h0[i] = -1.0 / (1.0 - g[i]);
        c.h[i] = a[i] > 0.5 ? c.h1[i] : c.h0[i];
    }
    return c;
}

FluctuationResult fluctuate(const VectorXd& y_scaled, const VectorXd& qa,
                            const VectorXd& q1, const VectorXd& q0,
                            const std::vector<CleverCovariate>& covs) {
    const int n = static_cast<int>(y_scaled.size());
    const int m = static_cast<int>(covs.size());
    if (m == 0) throw ConfigError("fluctuation needs at least one covariate");
    if (qa.size() != n || q1.size() != n || q0.size() != n)
        throw DataError("fluctuation inputs have mismatched lengths");
    for (const CleverCovariate& c : covs) {
        if (c.h.size() != n || c.h1.size() != n || c.h0.size() != n)
            throw DataError("fluctuation covariate has the wrong length");
    }

    VectorXd offset(n);
    for (int i = 0; i < n; ++i) offset[i] = logit(clamp_prob(qa[i], kProbEps));

    VectorXd eps = VectorXd::Zero(m);
    auto predict = [&](const VectorXd& e) {
        VectorXd p(n);
        for (int i = 0; i < n; ++i) {
            double eta = offset[i];
            for (int k = 0; k < m; ++k) eta += e[k] * covs[k].h[i];
            p[i] = expit(eta);
        }
        return p;
    };
    auto score_of = [&](const VectorXd& p) {
        VectorXd s = VectorXd::Zero(m);
        for (int k = 0; k < m; ++k) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += covs[k].h[i] * (y_scaled[i] - p[i]);
            s[k] = acc;
        }
        return s;
    };

    VectorXd p = predict(eps);
    const double loss0 = mean_nll(y_scaled, p);
    double loss = loss0;

    FluctuationResult out;
    out.fluct.eps = eps;
    bool converged = false;
    int it = 0;
    for (; it < kMaxNewton; ++it) {
        const VectorXd score = score_of(p);
        if (score.cwiseAbs().maxCoeff() <= kScoreTol) {
            converged = true;
            break;
        }
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(m, m);
        for (int i = 0; i < n; ++i) {
            const double v = p[i] * (1.0 - p[i]);
            for (int k = 0; k < m; ++k)
                for (int l = k; l < m; ++l) hess(k, l) += covs[k].h[i] * covs[l].h[i] * v;
        }
        for (int k = 0; k < m; ++k)
            for (int l = 0; l < k; ++l) hess(k, l) = hess(l, k);
        // Damp a (near-)singular curvature matrix; convergence is still
        // judged on the untouched score, so damping only shortens steps.
        const double tr = hess.trace();
        const double damp = std::max(tr, 1.0) * 1e-12;
        Eigen::MatrixXd hess_d = hess;
        hess_d.diagonal().array() += damp;
        VectorXd step = hess_d.ldlt().solve(score);
        if (!step.allFinite()) {
            hess_d.diagonal().array() += std::max(tr, 1.0) * 1e-6;
            step = hess_d.ldlt().solve(score);
            if (!step.allFinite()) throw NumericError("fluctuation failed: singular curvature");
        }

        double stepsize = 1.0;
        VectorXd eps_new = eps + step;
        VectorXd p_new = predict(eps_new);
        double loss_new = mean_nll(y_scaled, p_new);
        int halvings = 0;
        while (loss_new > loss + 1e-14 && halvings < kMaxHalvings) {
            stepsize *= 0.5;
            eps_new = eps + stepsize * step;
            p_new = predict(eps_new);
            loss_new = mean_nll(y_scaled, p_new);
            ++halvings;
        }
        if (loss_new > loss + 1e-14)
            throw NumericError("fluctuation failed: no descent direction");
        eps = eps_new;
        p = p_new;
        loss = loss_new;
    }
    if (!converged) {
        const VectorXd score = score_of(p);
        if (score.cwiseAbs().maxCoeff() <= kScoreTol) {
            converged = true;
        } else {
            throw NumericError("fluctuation failed: score did not vanish");
        }
    }
    if (loss > loss0 + 1e-12) throw NumericError("fluctuation increased the empirical loss");

    out.fluct.eps = eps;
    out.fluct.converged = true;
    out.fluct.iterations = it;
    out.fluct.loss = loss;
    out.qa_star = p;
    out.q1_star.resize(n);
    out.q0_star.resize(n);
    for (int i = 0; i < n; ++i) {
        double eta1 = logit(clamp_prob(q1[i], kProbEps));
        double eta0 = logit(clamp_prob(q0[i], kProbEps));
        for (int k = 0; k < m; ++k) {
            eta1 += eps[k] * covs[k].h1[i];
            eta0 += eps[k] * covs[k].h0[i];
        }
        out.q1_star[i] = clamp_prob(expit(eta1), kProbEps);
        out.q0_star[i] = clamp_prob(expit(eta0), kProbEps);
    }
    // Keep the observed-arm predictions consistent with the per-arm ones.
    for (int i = 0; i < n; ++i) out.qa_star[i] = clamp_prob(out.qa_star[i], kProbEps);
    return out;
}

double eic_se(const std::vector<double>& eic, const OutcomeScale& scale) {
    const double n = static_cast<double>(eic.size());
    return scale.unscale_effect(sd_of(eic) / std::sqrt(n));
}

TmleResult tmle_from_predictions(const VectorXd& y_scaled, const VectorXd& a,
                                 const VectorXd& g, const VectorXd& qa_star,
                                 const VectorXd& q1_star, const VectorXd& q0_star,
                                 const OutcomeScale& scale, const std::string& label) {
    const int n = static_cast<int>(y_scaled.size());
    const double psi_s = (q1_star - q0_star).mean();
    std::vector<double> eic(n);
    for (int i = 0; i < n; ++i) {
        const double h = a[i] > 0.5 ? 1.0 / g[i] : -1.0 / (1.0 - g[i]);
        eic[i] = h * (y_scaled[i] - qa_star[i]) + q1_star[i] - q0_star[i] - psi_s;
    }
    TmleResult r;
    r.estimate.estimator = label;
    r.estimate.psi = scale.unscale_effect(psi_s);
    const double se = eic_se(eic, scale);
    r.estimate.se = se;
    r.estimate.ci_lo = r.estimate.psi - kCiZ * se;
    r.estimate.ci_hi = r.estimate.psi + kCiZ * se;
    r.qa_star = qa_star;
    r.q1_star = q1_star;
    r.q0_star = q0_star;
    r.eic = std::move(eic);
    return r;
}

TmleResult tmle(const VectorXd& y_scaled, const VectorXd& a, const VectorXd& g,
                const OutcomeFit& q, const OutcomeScale& scale, const std::string& label) {
    if (y_scaled.size() != a.size() || g.size() != a.size() || q.qa.size() != a.size())
        throw DataError("targeted estimator inputs have mismatched lengths");
    const CleverCovariate cov = CleverCovariate::from_ps(a, g);
    FluctuationResult fr = fluctuate(y_scaled, q.qa, q.q1, q.q0, {cov});
    TmleResult r = tmle_from_predictions(y_scaled, a, g, fr.qa_star, fr.q1_star, fr.q0_star,
                                         scale, label);
    r.fluct = fr.fluct;
    return r;
}

}  // namespace ctlasso
