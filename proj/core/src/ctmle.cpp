#include "ctlasso/ctmle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

namespace ctlasso {

namespace {

VectorXd ps_at_index(const LassoPath& path, int gi, const MatrixXd& x, const PsBounds& b) {
    VectorXd eta = (x * path.coefs.row(gi).transpose()).array() + path.intercepts[gi];
    VectorXd g(eta.size());
    for (int i = 0; i < eta.size(); ++i)
        g[i] = std::min(b.hi, std::max(b.lo, expit(eta[i])));
    return g;
}

MatrixXd take_rows(const MatrixXd& x, const std::vector<int>& rows) {
    MatrixXd out(static_cast<int>(rows.size()), x.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<int>(r)) = x.row(rows[r]);
    return out;
}

VectorXd take(const VectorXd& v, const std::vector<int>& rows) {
    VectorXd out(static_cast<int>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<int>(r)] = v[rows[r]];
    return out;
}

// Apply an already-fit fluctuation to held-out predictions.
void apply_eps(double eps, const CleverCovariate& cov, VectorXd* qa, VectorXd* q1, VectorXd* q0) {
    for (int i = 0; i < qa->size(); ++i) {
        (*qa)[i] = clamp_prob(expit(logit(clamp_prob((*qa)[i], kProbEps)) + eps * cov.h[i]), kProbEps);
        (*q1)[i] = clamp_prob(expit(logit(clamp_prob((*q1)[i], kProbEps)) + eps * cov.h1[i]), kProbEps);
        (*q0)[i] = clamp_prob(expit(logit(clamp_prob((*q0)[i], kProbEps)) + eps * cov.h0[i]), kProbEps);
    }
}

double heldout_nll_sum(const VectorXd& y, const VectorXd& offset_logit, double eps,
                       const VectorXd& h) {
    double s = 0.0;
    for (int i = 0; i < y.size(); ++i) {
        const double p = clamp_prob(expit(offset_logit[i] + eps * h[i]), 1e-12);
        s += -(y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p));
    }
    return s;
}

}  // namespace

int neighbor_grid_index(const LassoPath& path, int index) {
    if (index < 0 || index >= path.k()) throw ConfigError("grid index out of range");
    if (path.k() < 2) throw ConfigError("finite difference needs at least two grid points");
    return index == 0 ? 1 : index - 1;
}

CleverCovariate derivative_covariate(const VectorXd& a, const VectorXd& g_working,
                                     const VectorXd& g_neighbor) {
    if (a.size() != g_working.size() || a.size() != g_neighbor.size())
        throw DataError("derivative covariate inputs have mismatched lengths");
    const int n = static_cast<int>(a.size());
    CleverCovariate c;
    c.h.resize(n);
    c.h1.resize(n);
    c.h0.resize(n);
    for (int i = 0; i < n; ++i) {
        const double g = g_working[i];
        if (!(g > 0.0 && g < 1.0))
            throw DataError("propensity values must lie strictly inside (0, 1)");
        const double dg = g_neighbor[i] - g;
        c.h1[i] = -dg / (g * g);
        c.h0[i] = -dg / ((1.0 - g) * (1.0 - g));
        c.h[i] = a[i] > 0.5 ? c.h1[i] : c.h0[i];
    }
    return c;
}

double critical_residual(const VectorXd& y_scaled, const VectorXd& a,
                         const VectorXd& qa_star, const VectorXd& g_working,
                         const VectorXd& g_neighbor) {
    const CleverCovariate c = derivative_covariate(a, g_working, g_neighbor);
    double s = 0.0;
    for (int i = 0; i < y_scaled.size(); ++i) s += c.h[i] * (y_scaled[i] - qa_star[i]);
    return s / static_cast<double>(y_scaled.size());
}

Ctmle0Result ctmle0(const VectorXd& y_scaled, const VectorXd& a,
                    const VectorXd& g_working, const VectorXd& g_neighbor,
                    const OutcomeFit& q_init, const OutcomeScale& scale) {
    if (y_scaled.size() != a.size() || g_working.size() != a.size() ||
        g_neighbor.size() != a.size() || q_init.qa.size() != a.size())
        throw DataError("one-step selector inputs have mismatched lengths");

    Ctmle0Result out;
    const CleverCovariate main_cov = CleverCovariate::from_ps(a, g_working);
    const CleverCovariate deriv_cov = derivative_covariate(a, g_working, g_neighbor);

    double max_dg = 0.0;
    for (int i = 0; i < a.size(); ++i)
        max_dg = std::max(max_dg, std::abs(g_neighbor[i] - g_working[i]));

    FluctuationResult fr;
    if (max_dg < 1e-15) {
        out.second_covariate_dropped = true;
        out.warnings.push_back(
            "propensity path is flat at the working penalty; derivative covariate dropped");
        fr = fluctuate(y_scaled, q_init.qa, q_init.q1, q_init.q0, {main_cov});
    } else {
        fr = fluctuate(y_scaled, q_init.qa, q_init.q1, q_init.q0, {main_cov, deriv_cov});
    }

    TmleResult t = tmle_from_predictions(y_scaled, a, g_working, fr.qa_star, fr.q1_star,
                                         fr.q0_star, scale, "ctmle0");
    out.estimate = t.estimate;
    out.fluct = fr.fluct;
    out.qa_star = std::move(t.qa_star);
    out.q1_star = std::move(t.q1_star);
    out.q0_star = std::move(t.q0_star);
    out.eic = std::move(t.eic);
    out.critical_residual = critical_residual(y_scaled, a, out.qa_star, g_working, g_neighbor);
    return out;
}

Ctmle1Result ctmle1(const VectorXd& y_scaled, const VectorXd& a, const MatrixXd& w,
                    const PathCv& ps, const FoldAssignment& folds,
                    const OutcomeFit& q_init, const OutcomeScale& scale,
                    PsBounds bounds) {
    const int n = static_cast<int>(y_scaled.size());
    if (a.size() != n || w.rows() != n || q_init.qa.size() != n)
        throw DataError("collaborative selector inputs have mismatched lengths");
    if (static_cast<int>(folds.fold_id.size()) != n)
        throw DataError("fold assignment length does not match the sample");
    if (static_cast<int>(ps.fold_paths.size()) != folds.v)
        throw DataError("fold path count does not match the fold assignment");

    const LassoPath& full = ps.full;
    const int big_k = full.k();
    const int cvi = ps.curve.cv_index;
    if (cvi < 0 || cvi >= big_k) throw ConfigError("cross-validated index outside the grid");
    const int m = big_k - cvi;  // candidate count: grid points at or below lambda_cv

    Ctmle1Result out;
    CtmleTrace& trace = out.trace;
    if (m == 1)
        trace.warnings.push_back(
            "no grid points below the cross-validated penalty; degenerate single-candidate run");

    // Full-data propensity fits and weighting covariates per candidate.
    std::vector<VectorXd> g_full(m);
    std::vector<CleverCovariate> covs(m);
    for (int c = 0; c < m; ++c) {
        g_full[c] = ps_at_index(full, cvi + c, w, bounds);
        covs[c] = CleverCovariate::from_ps(a, g_full[c]);
    }
    trace.candidate_lambdas.resize(m);
    for (int c = 0; c < m; ++c) trace.candidate_lambdas[c] = full.lambdas[cvi + c];

    // Stage loop on the full sample.
    struct Cand {
        double loss = 0.0;
        int stage = 0;
        FluctuationResult fr;
    };
    std::vector<Cand> cands(m);
    std::vector<int> stage_boundary;             // local index promoted per stage
    std::vector<std::array<VectorXd, 3>> stage_init;  // qa, q1, q0 entering each stage

    VectorXd qa = q_init.qa, q1 = q_init.q1, q0 = q_init.q0;
    int boundary = -1;
    int stage = 0;
    while (boundary < m - 1) {
        ++stage;
        stage_init.push_back({qa, q1, q0});
        std::vector<FluctuationResult> fits(m);
        int best = -1;
        double best_loss = std::numeric_limits<double>::infinity();
        for (int c = boundary + 1; c < m; ++c) {
            fits[c] = fluctuate(y_scaled, qa, q1, q0, {covs[c]});
            if (fits[c].fluct.loss < best_loss) {
                best_loss = fits[c].fluct.loss;
                best = c;
            }
        }
        qa = fits[best].qa_star;
        q1 = fits[best].q1_star;
        q0 = fits[best].q0_star;
        for (int c = boundary + 1; c <= best; ++c) {
            cands[c].loss = fits[c].fluct.loss;
            cands[c].stage = stage;
            cands[c].fr = std::move(fits[c]);
        }
        stage_boundary.push_back(best);
        boundary = best;
    }
    trace.n_stages = stage;
    trace.candidate_losses.resize(m);
    trace.candidate_stage.resize(m);
    for (int c = 0; c < m; ++c) {
        trace.candidate_losses[c] = cands[c].loss;
        trace.candidate_stage[c] = cands[c].stage;
    }

    // Cross-validated choice among candidates: refit the fold paths' fits and
    // the outcome regression on training rows, replay the full-data stage
    // schedule, and pool per-unit held-out loss.
    std::vector<double> cv_raw(m, 0.0);
    for (int f = 0; f < folds.v; ++f) {
        const std::vector<int> train = folds.train_rows(f);
        const std::vector<int> val = folds.validation_rows(f);
        const MatrixXd wt = take_rows(w, train);
        const MatrixXd wv = take_rows(w, val);
        const VectorXd yt = take(y_scaled, train);
        const VectorXd yv = take(y_scaled, val);
        const VectorXd at = take(a, train);
        const VectorXd av = take(a, val);

        OutcomeFit qf = fit_outcome_mainterm(yt, at, wt, q_init.subset);
        for (const std::string& msg : qf.warnings) {
            std::ostringstream os;
            os << "fold " << f << ": " << msg;
            trace.warnings.push_back(os.str());
        }
        VectorXd q1v, q0v;
        predict_outcome(qf, wv, &q1v, &q0v);
        VectorXd qav(static_cast<int>(val.size()));
        for (int i = 0; i < qav.size(); ++i) qav[i] = av[i] > 0.5 ? q1v[i] : q0v[i];

        const LassoPath& fp = ps.fold_paths[f];
        std::vector<CleverCovariate> covs_t(m), covs_v(m);
        for (int c = 0; c < m; ++c) {
            covs_t[c] = CleverCovariate::from_ps(at, ps_at_index(fp, cvi + c, wt, bounds));
            covs_v[c] = CleverCovariate::from_ps(av, ps_at_index(fp, cvi + c, wv, bounds));
        }

        VectorXd qa_t = qf.qa, q1_t = qf.q1, q0_t = qf.q0;
        VectorXd qa_v = qav, q1_v = q1v, q0_v = q0v;
        int lo = 0;
        for (int s = 0; s < trace.n_stages; ++s) {
            const int hi = stage_boundary[s];
            FluctuationResult promote_fit;
            for (int c = lo; c <= hi; ++c) {
                FluctuationResult fr = fluctuate(yt, qa_t, q1_t, q0_t, {covs_t[c]});
                VectorXd off(qa_v.size());
                for (int i = 0; i < qa_v.size(); ++i)
                    off[i] = logit(clamp_prob(qa_v[i], kProbEps));
                cv_raw[c] += heldout_nll_sum(yv, off, fr.fluct.eps[0], covs_v[c].h);
                if (c == hi) promote_fit = std::move(fr);
            }
            qa_t = promote_fit.qa_star;
            q1_t = promote_fit.q1_star;
            q0_t = promote_fit.q0_star;
            apply_eps(promote_fit.fluct.eps[0], covs_v[hi], &qa_v, &q1_v, &q0_v);
            lo = hi + 1;
        }
    }
    trace.cv_losses.resize(m);
    for (int c = 0; c < m; ++c) trace.cv_losses[c] = cv_raw[c] / n;

    int selected = 0;
    for (int c = 1; c < m; ++c)
        if (trace.cv_losses[c] < trace.cv_losses[selected]) selected = c;
    trace.lambda_selected = trace.candidate_lambdas[selected];

    // Final pass: re-target the selected candidate's stage initial with every
    // strictly smaller penalty; keep the empirical-loss minimizer. With no
    // smaller penalty available the recorded candidate stands.
    const std::array<VectorXd, 3>& init = stage_init[cands[selected].stage - 1];
    int final_c = selected;
    FluctuationResult final_fr;
    if (selected + 1 < m) {
        double best_loss = std::numeric_limits<double>::infinity();
        int best = -1;
        std::vector<FluctuationResult> refits(m);
        for (int c = selected + 1; c < m; ++c) {
            refits[c] = fluctuate(y_scaled, init[0], init[1], init[2], {covs[c]});
            if (refits[c].fluct.loss < best_loss) {
                best_loss = refits[c].fluct.loss;
                best = c;
            }
        }
        final_c = best;
        final_fr = std::move(refits[best]);
    } else {
        final_fr = cands[selected].fr;
    }
    trace.final_lambda = trace.candidate_lambdas[final_c];

    TmleResult t = tmle_from_predictions(y_scaled, a, g_full[final_c], final_fr.qa_star,
                                         final_fr.q1_star, final_fr.q0_star, scale, "ctmle1");
    out.estimate = t.estimate;
    out.estimate.lambda_used = trace.final_lambda;
    out.fluct = final_fr.fluct;
    out.qa_star = std::move(t.qa_star);
    out.q1_star = std::move(t.q1_star);
    out.q0_star = std::move(t.q0_star);
    out.eic = std::move(t.eic);

    if (full.k() >= 2) {
        const int gi_final = cvi + final_c;
        const int gi_nb = neighbor_grid_index(full, gi_final);
        const VectorXd g_nb = ps_at_index(full, gi_nb, w, bounds);
        trace.critical_residual =
            critical_residual(y_scaled, a, out.qa_star, g_full[final_c], g_nb);
    } else {
        trace.critical_residual = 0.0;
        trace.warnings.push_back("single-point grid; derivative diagnostic unavailable");
    }
    return out;
}

}  // namespace ctlasso
