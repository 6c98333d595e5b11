#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ctlasso/common.hpp"
#include "ctlasso/ctmle.hpp"
#include "ctlasso/dataset.hpp"
#include "ctlasso/estimators.hpp"
#include "ctlasso/lasso_path.hpp"
#include "ctlasso/tmle.hpp"

#include "test_support.hpp"

#include <cmath>
#include <string>
#include <vector>

using namespace ctlasso;

namespace {

VectorXd vec(std::initializer_list<double> xs) {
    VectorXd v(static_cast<int>(xs.size()));
    int i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

const OutcomeScale kUnit{0.0, 1.0};

struct Draw {
    MatrixXd w;
    VectorXd a;
    VectorXd y;  // raw outcome
};

// Six standard-normal covariates; treatment logistic in the first three;
// outcome linear in treatment plus the same three confounders.
Draw confounded_draw(int n, std::uint64_t seed, double conf = 0.8) {
    Rng rng(seed);
    Draw d;
    d.w.resize(n, 6);
    d.a.resize(n);
    d.y.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 6; ++j) d.w(i, j) = rng.normal();
        const double gt = expit(0.4 * d.w(i, 0) - 0.5 * d.w(i, 1) + 0.3 * d.w(i, 2));
        d.a[i] = rng.uniform01() < gt ? 1.0 : 0.0;
        d.y[i] = d.a[i] + conf * (d.w(i, 0) + d.w(i, 1) + d.w(i, 2)) + 0.5 * rng.normal();
    }
    return d;
}

bool has_warning(const std::vector<std::string>& warnings, const std::string& token) {
    for (const std::string& w : warnings)
        if (w.find(token) != std::string::npos) return true;
    return false;
}

}  // namespace

TEST_CASE("derivative covariate worked example") {
    const VectorXd a = vec({1.0, 0.0});
    const VectorXd gw = vec({0.5, 0.5});
    const VectorXd gn = vec({0.6, 0.45});
    CleverCovariate c = derivative_covariate(a, gw, gn);
    // h1 = -dg/g^2, h0 = -dg/(1-g)^2 with dg = 0.1 and -0.05.
    CHECK(c.h1[0] == doctest::Approx(-0.4).epsilon(1e-12));
    CHECK(c.h0[0] == doctest::Approx(-0.4).epsilon(1e-12));
    CHECK(c.h1[1] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(c.h[0] == c.h1[0]);
    CHECK(c.h[1] == c.h0[1]);

    CHECK_THROWS_AS(derivative_covariate(a, vec({0.5}), gn), DataError);
    CHECK_THROWS_AS(derivative_covariate(a, vec({0.0, 0.5}), gn), DataError);
}

TEST_CASE("finite-difference residual worked example") {
    const VectorXd a = vec({1.0, 0.0});
    const VectorXd gw = vec({0.5, 0.5});
    const VectorXd gn = vec({0.6, 0.45});
    const VectorXd y = vec({0.8, 0.3});
    const VectorXd qas = vec({0.6, 0.5});
    // Summands: (-0.4)(0.2) and (0.2)(-0.2); mean -0.06.
    CHECK(critical_residual(y, a, qas, gw, gn) == doctest::Approx(-0.06).epsilon(1e-12));
}

TEST_CASE("grid neighbor is the adjacent larger penalty") {
    LassoPath path;
    path.lambdas = vec({0.4, 0.2, 0.1});
    CHECK(neighbor_grid_index(path, 2) == 1);
    CHECK(neighbor_grid_index(path, 1) == 0);
    // One-sided at the top of the grid.
    CHECK(neighbor_grid_index(path, 0) == 1);
    CHECK_THROWS_AS(neighbor_grid_index(path, 3), ConfigError);
    CHECK_THROWS_AS(neighbor_grid_index(path, -1), ConfigError);

    LassoPath single;
    single.lambdas = vec({0.4});
    CHECK_THROWS_AS(neighbor_grid_index(single, 0), ConfigError);
}

TEST_CASE("one-step selector zeroes both score equations") {
    for (int s = 0; s < 10; ++s) {
        Draw d = confounded_draw(100 + 20 * s, 5100 + s);
        auto [ys, scale] = scale_outcome(d.y);
        OutcomeFit q = fit_outcome_mainterm(ys, d.a, d.w, {3, 4});
        VectorXd gw(d.a.size()), gn(d.a.size());
        for (int i = 0; i < d.a.size(); ++i) {
            gw[i] = clamp_prob(expit(0.4 * d.w(i, 0) - 0.5 * d.w(i, 1)), 0.05);
            gn[i] = clamp_prob(expit(0.3 * d.w(i, 0) - 0.4 * d.w(i, 1)), 0.05);
        }
        Ctmle0Result r = ctmle0(ys, d.a, gw, gn, q, scale);
        CAPTURE(s);
        CHECK(r.estimate.estimator == "ctmle0");
        CHECK_FALSE(r.second_covariate_dropped);
        REQUIRE(r.fluct.eps.size() == 2);

        const CleverCovariate main_cov = CleverCovariate::from_ps(d.a, gw);
        const CleverCovariate deriv_cov = derivative_covariate(d.a, gw, gn);
        double s_main = 0.0, s_deriv = 0.0;
        for (int i = 0; i < d.a.size(); ++i) {
            s_main += main_cov.h[i] * (ys[i] - r.qa_star[i]);
            s_deriv += deriv_cov.h[i] * (ys[i] - r.qa_star[i]);
        }
        CHECK(std::abs(s_main) <= 1e-8);
        CHECK(std::abs(s_deriv) <= 1e-8);
        // The reported diagnostic is the second score over n.
        CHECK(std::abs(r.critical_residual) <= 1e-10);
        // Post-targeting, the influence summands average to zero.
        double m = 0.0;
        for (double e : r.eic) m += e;
        CHECK(std::abs(m / r.eic.size()) <= 1e-10);
    }
}

TEST_CASE("flat propensity difference reduces the one-step selector to the plain update") {
    Draw d = confounded_draw(150, 5200);
    auto [ys, scale] = scale_outcome(d.y);
    OutcomeFit q = fit_outcome_mainterm(ys, d.a, d.w, {3, 4});
    VectorXd g(d.a.size());
    for (int i = 0; i < d.a.size(); ++i)
        g[i] = clamp_prob(expit(0.4 * d.w(i, 0) - 0.5 * d.w(i, 1)), 0.05);

    Ctmle0Result r = ctmle0(ys, d.a, g, g, q, scale);
    CHECK(r.second_covariate_dropped);
    CHECK(has_warning(r.warnings, "derivative covariate dropped"));
    REQUIRE(r.fluct.eps.size() == 1);
    CHECK(r.critical_residual == 0.0);

    TmleResult t = tmle(ys, d.a, g, q, scale);
    CHECK(r.estimate.psi == t.estimate.psi);
    CHECK(*r.estimate.se == *t.estimate.se);
    CHECK(*r.estimate.ci_lo == *t.estimate.ci_lo);
}

TEST_CASE("single-candidate run reduces the stagewise selector to the plain update") {
    Draw d = confounded_draw(80, 5300);
    auto [ys, scale] = scale_outcome(d.y);
    OutcomeFit q = fit_outcome_mainterm(ys, d.a, d.w, {0});

    // Hand-built three-point path whose cross-validated index is the bottom
    // of the grid, leaving a single candidate penalty.
    LassoPath full;
    full.lambdas = vec({0.4, 0.2, 0.1});
    full.intercepts = vec({0.0, 0.1, -0.2});
    full.coefs = MatrixXd::Zero(3, 6);
    full.coefs(1, 0) = 0.2;
    full.coefs(2, 0) = 0.5;
    full.coefs(2, 1) = -0.4;
    full.n_active = {0, 1, 2};
    full.train_deviance = VectorXd::Zero(3);
    full.col_mean = VectorXd::Zero(6);
    full.col_sd = VectorXd::Ones(6);

    FoldAssignment folds = make_folds(80, 4, 31, d.a);
    PathCv ps;
    ps.full = full;
    ps.fold_paths.assign(4, full);
    ps.curve.lambdas = full.lambdas;
    ps.curve.deviance = VectorXd::Zero(3);
    ps.curve.se = VectorXd::Zero(3);
    ps.curve.cv_index = 2;
    ps.curve.lambda_cv = full.lambdas[2];

    Ctmle1Result r = ctmle1(ys, d.a, d.w, ps, folds, q, scale);
    CHECK(has_warning(r.trace.warnings, "degenerate single-candidate"));
    CHECK(r.trace.candidate_lambdas.size() == 1);
    CHECK(r.trace.n_stages == 1);
    CHECK(r.trace.lambda_selected == full.lambdas[2]);
    CHECK(r.trace.final_lambda == full.lambdas[2]);

    const VectorXd g = predict_ps(full, full.lambdas[2], d.w).g;
    TmleResult t = tmle(ys, d.a, g, q, scale);
    CHECK(r.estimate.psi == t.estimate.psi);
    CHECK(*r.estimate.se == *t.estimate.se);
    CHECK(r.estimate.estimator == "ctmle1");
    CHECK(*r.estimate.lambda_used == full.lambdas[2]);
}

TEST_CASE("a perfect initial fit makes every selection a tie broken toward larger penalties") {
    Rng rng(5400);
    const int n = 60;
    MatrixXd w(n, 4);
    VectorXd a(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 4; ++j) w(i, j) = rng.normal();
        a[i] = rng.uniform01() < 0.5 ? 1.0 : 0.0;
    }
    // Constant one-half outcome: the quasi-binomial fit is exactly flat, so
    // every fluctuation has an exactly zero score at eps = 0 and all losses
    // tie bitwise.
    const VectorXd ys = VectorXd::Constant(n, 0.5);
    OutcomeFit q = fit_outcome_mainterm(ys, a, w, {});
    for (int i = 0; i < n; ++i) REQUIRE(q.qa[i] == 0.5);

    FoldAssignment folds = make_folds(n, 4, 11, a);
    PathConfig cfg;
    cfg.grid_size = 8;
    cfg.lambda_min_ratio = 0.1;
    PathCv ps = fit_path_cv(w, a, folds, cfg);
    const int m = ps.full.k() - ps.curve.cv_index;
    REQUIRE(m >= 2);

    Ctmle1Result r = ctmle1(ys, a, w, ps, folds, q, kUnit);
    // Ties resolve to the largest candidate penalty, which is lambda_cv.
    CHECK(r.trace.lambda_selected == ps.curve.lambda_cv);
    CHECK(r.estimate.psi == 0.0);
    CHECK(gcomp(q, kUnit).psi == 0.0);
    CHECK(r.fluct.eps[0] == 0.0);
    CHECK(r.trace.critical_residual == 0.0);

    // With every loss tied each stage promotes exactly one candidate, and
    // the final pass hands the tie to the next smaller penalty.
    REQUIRE(static_cast<int>(r.trace.candidate_stage.size()) == m);
    for (int c = 0; c < m; ++c) CHECK(r.trace.candidate_stage[c] == c + 1);
    CHECK(r.trace.n_stages == m);
    CHECK(r.trace.final_lambda == r.trace.candidate_lambdas[1]);
    for (int c = 1; c < m; ++c) {
        CHECK(r.trace.cv_losses[c] == r.trace.cv_losses[0]);
        CHECK(r.trace.candidate_losses[c] == r.trace.candidate_losses[0]);
    }
}

TEST_CASE("stagewise selector trace invariants on confounded data") {
    Draw d = confounded_draw(200, 5500);
    auto [ys, scale] = scale_outcome(d.y);
    OutcomeFit q = fit_outcome_mainterm(ys, d.a, d.w, {3, 4});
    FoldAssignment folds = make_folds(200, 5, 17, d.a);
    PathConfig cfg;
    cfg.grid_size = 12;
    cfg.lambda_min_ratio = 0.05;
    PathCv ps = fit_path_cv(d.w, d.a, folds, cfg);

    Ctmle1Result r = ctmle1(ys, d.a, d.w, ps, folds, q, scale);
    const CtmleTrace& tr = r.trace;
    const int m = static_cast<int>(tr.candidate_lambdas.size());
    REQUIRE(m == ps.full.k() - ps.curve.cv_index);
    REQUIRE(m >= 2);

    CHECK(tr.candidate_lambdas[0] == ps.curve.lambda_cv);
    for (int c = 0; c + 1 < m; ++c) CHECK(tr.candidate_lambdas[c] > tr.candidate_lambdas[c + 1]);

    // Stages label a partition of the candidates in order.
    CHECK(tr.n_stages >= 1);
    CHECK(tr.n_stages <= m);
    CHECK(tr.candidate_stage.front() == 1);
    CHECK(tr.candidate_stage.back() == tr.n_stages);
    for (int c = 0; c + 1 < m; ++c) {
        CHECK(tr.candidate_stage[c + 1] >= tr.candidate_stage[c]);
        CHECK(tr.candidate_stage[c + 1] <= tr.candidate_stage[c] + 1);
    }

    // Each stage's promoted candidate (the last of its block) minimizes the
    // empirical loss within the block, and the promoted losses decrease.
    for (int s = 1; s <= tr.n_stages; ++s) {
        int last = -1;
        for (int c = 0; c < m; ++c)
            if (tr.candidate_stage[c] == s) last = c;
        REQUIRE(last >= 0);
        for (int c = 0; c < m; ++c)
            if (tr.candidate_stage[c] == s)
                CHECK(tr.candidate_losses[last] <= tr.candidate_losses[c] + 1e-12);
        if (s > 1) {
            int prev_last = -1;
            for (int c = 0; c < m; ++c)
                if (tr.candidate_stage[c] == s - 1) prev_last = c;
            CHECK(tr.candidate_losses[last] <= tr.candidate_losses[prev_last] + 1e-12);
        }
    }

    // The cross-validated winner and the re-targeted final penalty.
    REQUIRE(static_cast<int>(tr.cv_losses.size()) == m);
    int sel = 0;
    for (int c = 1; c < m; ++c)
        if (tr.cv_losses[c] < tr.cv_losses[sel]) sel = c;
    CHECK(tr.lambda_selected == tr.candidate_lambdas[sel]);
    CHECK(tr.final_lambda <= tr.lambda_selected);
    CHECK(*r.estimate.lambda_used == tr.final_lambda);

    // Post-targeting score equation at the final fit.
    double mean_eic = 0.0;
    for (double e : r.eic) mean_eic += e;
    mean_eic /= static_cast<double>(r.eic.size());
    CHECK(std::abs(mean_eic) <= 1e-10);

    // Reruns are bitwise identical.
    Ctmle1Result r2 = ctmle1(ys, d.a, d.w, ps, folds, q, scale);
    CHECK(r2.estimate.psi == r.estimate.psi);
    CHECK(*r2.estimate.se == *r.estimate.se);
    CHECK(r2.trace.lambda_selected == tr.lambda_selected);
    CHECK(r2.trace.final_lambda == tr.final_lambda);
    for (int c = 0; c < m; ++c) CHECK(r2.trace.cv_losses[c] == tr.cv_losses[c]);
}

TEST_CASE("diagnostic residual is nonzero for the untargeted penalty choice") {
    Draw d = confounded_draw(200, 5600);
    auto [ys, scale] = scale_outcome(d.y);
    OutcomeFit q = fit_outcome_mainterm(ys, d.a, d.w, {3, 4});
    FoldAssignment folds = make_folds(200, 5, 19, d.a);
    PathConfig cfg;
    cfg.grid_size = 12;
    cfg.lambda_min_ratio = 0.05;
    PathCv ps = fit_path_cv(d.w, d.a, folds, cfg);

    const PropensityFit gcv = predict_ps(ps.full, ps.curve.lambda_cv, d.w);
    TmleResult t = tmle(ys, d.a, gcv.g, q, scale);
    const int nb = neighbor_grid_index(ps.full, ps.curve.cv_index);
    const PropensityFit gnb = predict_ps(ps.full, ps.full.lambdas[nb], d.w);

    // The plain update only solves the main score equation; the
    // derivative-in-penalty equation is left unsolved.
    const double cr = critical_residual(ys, d.a, t.qa_star, gcv.g, gnb.g);
    CHECK(std::abs(cr) > 1e-9);

    // The one-step selector solves it by construction on the same inputs.
    Ctmle0Result c0 = ctmle0(ys, d.a, gcv.g, gnb.g, q, scale);
    CHECK(std::abs(c0.critical_residual) <= 1e-10);
}

TEST_CASE("both selectors reduce the bias of the plain update under a misspecified regression") {
    const int n_seeds = 200;
    const int n = 300;
    std::vector<double> b_tmle, b_c1, b_c0;
    b_tmle.reserve(n_seeds);
    b_c1.reserve(n_seeds);
    b_c0.reserve(n_seeds);
    for (int s = 0; s < n_seeds; ++s) {
        Draw d = confounded_draw(n, 42000 + s);
        auto [ys, scale] = scale_outcome(d.y);
        FoldAssignment folds = make_folds(n, 5, 9000 + s, d.a);
        PathConfig cfg;
        cfg.grid_size = 15;
        cfg.lambda_min_ratio = 0.05;
        PathCv ps = fit_path_cv(d.w, d.a, folds, cfg);
        // The outcome regression only sees noise covariates, so the
        // selectors must make the weighting covariate do the confounding
        // control.
        OutcomeFit q = fit_outcome_mainterm(ys, d.a, d.w, {3, 4});

        const PropensityFit gcv = predict_ps(ps.full, ps.curve.lambda_cv, d.w);
        b_tmle.push_back(tmle(ys, d.a, gcv.g, q, scale).estimate.psi - 1.0);
        b_c1.push_back(ctmle1(ys, d.a, d.w, ps, folds, q, scale).estimate.psi - 1.0);
        const int nb = neighbor_grid_index(ps.full, ps.curve.cv_index);
        const PropensityFit gnb = predict_ps(ps.full, ps.full.lambdas[nb], d.w);
        b_c0.push_back(ctmle0(ys, d.a, gcv.g, gnb.g, q, scale).estimate.psi - 1.0);
    }
    const double bt = mean_of(b_tmle);
    const double b1 = mean_of(b_c1);
    const double b0 = mean_of(b_c0);
    const double mcse = sd_of(b_tmle) / std::sqrt(static_cast<double>(n_seeds));
    // The comparison only means something when the plain update is biased.
    CHECK(std::abs(bt) > 3.0 * mcse);
    CHECK(std::abs(b1) < std::abs(bt));
    CHECK(std::abs(b0) < std::abs(bt));
}

TEST_CASE("selector input validation") {
    Draw d = confounded_draw(60, 5700);
    auto [ys, scale] = scale_outcome(d.y);
    OutcomeFit q = fit_outcome_mainterm(ys, d.a, d.w, {});
    VectorXd g = VectorXd::Constant(60, 0.5);

    CHECK_THROWS_AS(ctmle0(ys, d.a, g, VectorXd::Constant(59, 0.5), q, scale), DataError);
    CHECK_THROWS_AS(ctmle0(ys.head(59), d.a, g, g, q, scale), DataError);

    FoldAssignment folds = make_folds(60, 3, 7, d.a);
    PathConfig cfg;
    cfg.grid_size = 6;
    PathCv ps = fit_path_cv(d.w, d.a, folds, cfg);

    PathCv missing = ps;
    missing.fold_paths.pop_back();
    CHECK_THROWS_AS(ctmle1(ys, d.a, d.w, missing, folds, q, scale), DataError);

    PathCv bad_index = ps;
    bad_index.curve.cv_index = 99;
    CHECK_THROWS_AS(ctmle1(ys, d.a, d.w, bad_index, folds, q, scale), ConfigError);
}
