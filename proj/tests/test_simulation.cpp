#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ctlasso/common.hpp"
#include "ctlasso/simulation.hpp"

#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

using namespace ctlasso;

namespace {

bool same_entries(const MatrixXd& a, const MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           (a.size() == 0 || (a - b).cwiseAbs().maxCoeff() == 0.0);
}

// Bitwise equality that treats NaN cells (no confidence interval) as equal.
bool same_with_nan(const MatrixXd& a, const MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) {
            const bool na = std::isnan(a(i, j));
            const bool nb = std::isnan(b(i, j));
            if (na != nb) return false;
            if (!na && a(i, j) != b(i, j)) return false;
        }
    return true;
}

bool has_warning(const std::vector<std::string>& warnings, const std::string& needle) {
    for (const std::string& w : warnings)
        if (w.find(needle) != std::string::npos) return true;
    return false;
}

const EstimatorMetrics& metric(const SimReport& rep, const std::string& label) {
    for (const EstimatorMetrics& m : rep.metrics)
        if (m.label == label) return m;
    throw std::runtime_error("label missing from report: " + label);
}

}  // namespace

TEST_CASE("confounder selection ranks columns by correlation with treatment") {
    Rng rng(501);
    const int n = 80;
    MatrixXd w(n, 3);
    VectorXd a(n);
    for (int i = 0; i < n; ++i) {
        a[i] = rng.uniform01() < 0.5 ? 1.0 : 0.0;
        w(i, 0) = rng.normal();
        w(i, 1) = a[i];  // perfectly correlated column
        w(i, 2) = rng.normal();
    }
    SimDesign d = build_design(w, a, 42);
    REQUIRE(d.confounders.size() == 3);
    CHECK(d.confounders[0] == 1);
    CHECK(has_warning(d.warnings, "using all as confounders"));
    CHECK(d.column_names == std::vector<std::string>{"w1", "w2", "w3"});
    CHECK(d.true_ate == 1.0);

    // Same seed, same coefficients; a different seed changes them.
    SimDesign d2 = build_design(w, a, 42);
    CHECK(same_entries(d.beta, d2.beta));
    SimDesign d3 = build_design(w, a, 43);
    CHECK_FALSE(same_entries(d.beta, d3.beta));

    CHECK_THROWS_AS(build_design(w, a.head(10), 1), DataError);
    VectorXd bad = a;
    bad[0] = 0.5;
    CHECK_THROWS_AS(build_design(w, bad, 1), DataError);
    CHECK_THROWS_AS(build_design(w, a, 1, {"only", "two"}), DataError);
}

TEST_CASE("top confounders equal a brute-force correlation sort") {
    SyntheticBase base = synthetic_base(250, 60, 31);
    SimDesign d = build_design(base.w, base.a, 5, base.column_names);
    REQUIRE(d.confounders.size() == 40);
    CHECK(d.warnings.empty());

    const int n = static_cast<int>(base.w.rows());
    const int p = static_cast<int>(base.w.cols());
    const double am = base.a.mean();
    const double asd = std::sqrt((base.a.array() - am).square().sum() / n);
    std::vector<std::pair<double, int>> scored(p);
    for (int j = 0; j < p; ++j) {
        const double m = base.w.col(j).mean();
        const double sd = std::sqrt((base.w.col(j).array() - m).square().sum() / n);
        double r = 0.0;
        if (sd > 0.0 && asd > 0.0) {
            const double cov =
                ((base.w.col(j).array() - m) * (base.a.array() - am)).sum() / n;
            r = cov / (sd * asd);
        }
        scored[j] = {std::abs(r), j};
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first > y.first;
        return x.second < y.second;
    });
    for (int k = 0; k < 40; ++k) {
        CAPTURE(k);
        CHECK(d.confounders[k] == scored[k].second);
    }
}

TEST_CASE("replications resample base rows jointly and follow the outcome formula") {
    SyntheticBase base = synthetic_base(120, 8, 5);
    SimDesign design = build_design(base.w, base.a, 3, base.column_names);
    design.n_per_rep = 60;
    const std::uint64_t rs = replication_seed(9, 0);
    Dataset d = draw_replication(design, rs);
    REQUIRE(d.n() == 60);
    REQUIRE(d.p() == 8);
    CHECK(d.column_names == base.column_names);

    // Replay the generator stream: row indices first, then one noise draw per
    // row. Rows must be copied jointly (covariates and treatment together).
    Rng replay(rs);
    std::vector<int> rows(60);
    for (int i = 0; i < 60; ++i)
        rows[i] = static_cast<int>(replay.below(static_cast<std::uint64_t>(120)));
    for (int i = 0; i < 60; ++i) {
        CHECK(d.a[i] == base.a[rows[i]]);
        CHECK((d.w.row(i) - base.w.row(rows[i])).cwiseAbs().maxCoeff() == 0.0);
    }
    for (int i = 0; i < 60; ++i) {
        const double eps = replay.normal();
        double lin = 2.0 + d.a[i];
        for (std::size_t k = 0; k < design.confounders.size(); ++k)
            lin += design.beta[static_cast<int>(k)] * d.w(i, design.confounders[k]);
        CHECK(d.y[i] - eps == doctest::Approx(lin).epsilon(1e-9));
    }

    // Identical seed reproduces the draw; a different seed changes the row
    // multiset, not just the noise.
    Dataset d_again = draw_replication(design, rs);
    CHECK(same_entries(d.y, d_again.y));
    CHECK(same_entries(d.w, d_again.w));
    Dataset d_other = draw_replication(design, replication_seed(9, 1));
    std::vector<double> key_a(60), key_b(60);
    for (int i = 0; i < 60; ++i) {
        key_a[i] = d.w.row(i).sum() + 1000.0 * d.a[i];
        key_b[i] = d_other.w.row(i).sum() + 1000.0 * d_other.a[i];
    }
    std::sort(key_a.begin(), key_a.end());
    std::sort(key_b.begin(), key_b.end());
    CHECK(key_a != key_b);

    SimDesign tiny = design;
    tiny.n_per_rep = 1;
    CHECK_THROWS_AS(draw_replication(tiny, rs), ConfigError);
}

TEST_CASE("replication outcome means match the design moments") {
    SyntheticBase base = synthetic_base(120, 8, 5);
    SimDesign design = build_design(base.w, base.a, 3, base.column_names);
    design.n_per_rep = 200;

    double conf_mean = 0.0;
    for (std::size_t k = 0; k < design.confounders.size(); ++k)
        conf_mean += design.beta[static_cast<int>(k)] *
                     base.w.col(design.confounders[k]).mean();
    const double theory = 2.0 + conf_mean + base.a.mean();

    const int n_rep = 30;
    std::vector<double> rep_means(n_rep);
    for (int r = 0; r < n_rep; ++r)
        rep_means[r] = draw_replication(design, replication_seed(777, r)).y.mean();
    const double grand = mean_of(rep_means);
    const double sdm = sd_of(rep_means);
    CHECK(std::abs(grand - theory) <= 3.0 * sdm / std::sqrt(static_cast<double>(n_rep)));
}

TEST_CASE("replication seeds are distinct and reproducible") {
    std::set<std::uint64_t> seen;
    for (int r = 0; r < 50; ++r) seen.insert(replication_seed(7, r));
    CHECK(seen.size() == 50);
    CHECK(replication_seed(7, 13) == replication_seed(7, 13));
    CHECK(replication_seed(7, 13) != replication_seed(8, 13));
}

TEST_CASE("estimator driver runs the full roster consistently") {
    SyntheticBase base = synthetic_base(300, 12, 21);
    SimDesign design = build_design(base.w, base.a, 33, base.column_names);
    design.n_per_rep = 250;
    Dataset d = draw_replication(design, replication_seed(1, 0));

    RosterOptions opts;
    opts.v_folds = 5;
    opts.seed = 404;
    opts.path.grid_size = 12;
    opts.path.lambda_min_ratio = 0.05;
    RosterResult r = run_estimators(d, opts);

    REQUIRE(r.estimates.size() == kFullRoster.size());
    for (std::size_t i = 0; i < kFullRoster.size(); ++i) {
        CAPTURE(kFullRoster[i]);
        CHECK(r.estimates[i].estimator == kFullRoster[i]);
        CHECK(std::isfinite(r.estimates[i].psi));
    }
    CHECK(r.lambda_cv > 0.0);
    REQUIRE(r.lambda_ctmle.has_value());
    CHECK(*r.lambda_ctmle <= r.lambda_cv);
    REQUIRE(r.trace.has_value());
    CHECK(*r.lambda_ctmle == r.trace->final_lambda);
    CHECK(r.curve.lambdas.size() == 12);
    CHECK(static_cast<int>(r.n_active.size()) == r.curve.lambdas.size());

    // Penalty bookkeeping: plain variants carry the cross-validated penalty,
    // starred variants the collaboratively selected one.
    auto at = [&](const std::string& label) -> const AteEstimate& {
        for (const AteEstimate& e : r.estimates)
            if (e.estimator == label) return e;
        throw std::runtime_error("missing " + label);
    };
    CHECK(at("tmle").lambda_used == r.lambda_cv);
    CHECK(at("ipw").lambda_used == r.lambda_cv);
    CHECK(at("tmle_star").lambda_used == *r.lambda_ctmle);
    CHECK(at("ipw_star").lambda_used == *r.lambda_ctmle);
    CHECK(at("ctmle1").lambda_used == *r.lambda_ctmle);

    // A one-estimator roster reproduces the same value bit for bit: the fold
    // assignment and path depend on the options, not on the roster mix.
    RosterOptions solo = opts;
    solo.roster = {"tmle"};
    RosterResult rs = run_estimators(d, solo);
    REQUIRE(rs.estimates.size() == 1);
    CHECK(rs.estimates[0].psi == at("tmle").psi);
    CHECK(rs.estimates[0].se == at("tmle").se);

    // Starred variants alone still require the collaborative selector.
    RosterOptions star_only = opts;
    star_only.roster = {"ipw_star"};
    RosterResult rstar = run_estimators(d, star_only);
    CHECK(rstar.trace.has_value());
    CHECK(rstar.estimates[0].psi == at("ipw_star").psi);

    // The unadjusted contrast needs no penalized fit at all.
    RosterOptions unadj_only = opts;
    unadj_only.roster = {"unadj"};
    RosterResult ru = run_estimators(d, unadj_only);
    CHECK(ru.curve.lambdas.size() == 0);
    CHECK(ru.lambda_cv == 0.0);
    CHECK_FALSE(ru.trace.has_value());
    CHECK_FALSE(ru.lambda_ctmle.has_value());

    RosterOptions bad = opts;
    bad.roster = {"tmle", "mystery"};
    CHECK_THROWS_AS(run_estimators(d, bad), ConfigError);
    bad.roster = {};
    CHECK_THROWS_AS(run_estimators(d, bad), ConfigError);
    bad.roster = {"tmle"};
    bad.v_folds = 1;
    CHECK_THROWS_AS(run_estimators(d, bad), ConfigError);
}

TEST_CASE("suite metrics summarize replications over a confounded base") {
    SyntheticBase base = synthetic_base(500, 50, 7);
    SimDesign design = build_design(base.w, base.a, 11, base.column_names);
    design.n_rep = 40;
    design.n_per_rep = 300;
    design.q_subset_size = 40;  // outcome model sees every confounder
    // Temper the coefficients so the scaled outcome stays in the range where
    // the logistic outcome model is effectively linear.
    design.beta *= 0.15;

    SuiteConfig cfg;
    cfg.roster = {"unadj", "gcomp", "tmle", "ctmle1"};
    cfg.v_folds = 5;
    cfg.path.grid_size = 12;
    cfg.path.lambda_min_ratio = 0.05;
    cfg.threads = 1;
    SimReport rep = run_suite(design, cfg);

    CHECK(rep.failures.empty());
    REQUIRE(rep.rep_ids.size() == 40);
    for (int r = 0; r < 40; ++r) CHECK(rep.rep_ids[r] == r);
    CHECK(rep.true_ate == 1.0);
    CHECK(rep.estimates.rows() == 40);
    CHECK(rep.estimates.cols() == 4);
    REQUIRE(rep.metrics.size() == 4);

    for (const EstimatorMetrics& m : rep.metrics) {
        CAPTURE(m.label);
        CHECK(m.n_used == 40);
        CHECK(std::abs(m.mse - (m.bias * m.bias + m.se * m.se)) <= 1e-10);
    }

    // With every confounder in the outcome model the adjusted estimators are
    // unbiased to Monte Carlo precision; the raw contrast is not.
    const double root_reps = std::sqrt(40.0);
    for (const std::string& label : {"gcomp", "tmle", "ctmle1"}) {
        const EstimatorMetrics& m = metric(rep, label);
        CAPTURE(label);
        CHECK(std::abs(m.bias) < 3.0 * m.se / root_reps);
    }
    const EstimatorMetrics& raw = metric(rep, "unadj");
    CHECK(raw.bias < 0.0);
    CHECK(std::abs(raw.bias) > 3.0 * raw.se / root_reps);
    CHECK(std::abs(raw.bias) > 3.0 * std::abs(metric(rep, "gcomp").bias));

    // Intervals exist for the influence-curve and two-sample estimators but
    // not for the plain regression plug-in.
    CHECK(metric(rep, "unadj").coverage.has_value());
    CHECK(metric(rep, "tmle").coverage.has_value());
    CHECK(metric(rep, "ctmle1").coverage.has_value());
    CHECK_FALSE(metric(rep, "gcomp").coverage.has_value());
    for (int s = 0; s < rep.estimates.rows(); ++s) {
        CHECK(std::isnan(rep.ci_lo(s, 1)));
        CHECK(std::isfinite(rep.ci_lo(s, 2)));
    }

    // Coverage and average length equal what the interval matrix implies.
    const EstimatorMetrics& mt = metric(rep, "tmle");
    int covered = 0;
    double len = 0.0;
    for (int s = 0; s < rep.estimates.rows(); ++s) {
        if (rep.ci_lo(s, 2) <= 1.0 && 1.0 <= rep.ci_hi(s, 2)) ++covered;
        len += rep.ci_hi(s, 2) - rep.ci_lo(s, 2);
    }
    CHECK(*mt.coverage == doctest::Approx(covered / 40.0).epsilon(1e-15));
    CHECK(*mt.avg_ci_length == doctest::Approx(len / 40.0).epsilon(1e-12));
}

TEST_CASE("suite reruns and thread counts leave the report unchanged") {
    SyntheticBase base = synthetic_base(200, 20, 13);
    SimDesign design = build_design(base.w, base.a, 17, base.column_names);
    design.n_rep = 6;
    design.n_per_rep = 120;

    SuiteConfig cfg;
    cfg.roster = {"gcomp", "tmle", "ctmle1"};
    cfg.v_folds = 5;
    cfg.path.grid_size = 10;
    cfg.path.lambda_min_ratio = 0.05;
    cfg.threads = 1;

    SimReport r1 = run_suite(design, cfg);
    SimReport r2 = run_suite(design, cfg);
    SuiteConfig four = cfg;
    four.threads = 4;
    SimReport r4 = run_suite(design, four);

    CHECK(same_entries(r1.estimates, r2.estimates));
    CHECK(same_entries(r1.estimates, r4.estimates));
    CHECK(same_with_nan(r1.ci_lo, r4.ci_lo));
    CHECK(same_with_nan(r1.ci_hi, r4.ci_hi));
    REQUIRE(r1.metrics.size() == r4.metrics.size());
    for (std::size_t e = 0; e < r1.metrics.size(); ++e) {
        CHECK(r1.metrics[e].bias == r4.metrics[e].bias);
        CHECK(r1.metrics[e].mse == r4.metrics[e].mse);
    }
}

TEST_CASE("suite aborts when replications fail") {
    SyntheticBase base = synthetic_base(150, 20, 19);
    SimDesign design = build_design(base.w, base.a, 23, base.column_names);
    design.n_rep = 4;
    design.n_per_rep = 80;

    SuiteConfig cfg;
    cfg.roster = {"tmle"};
    cfg.v_folds = 5;
    cfg.path.grid_size = 8;
    cfg.path.lambda_min_ratio = 0.05;
    cfg.path.max_sweeps = 1;  // forces every replication's path fit to fail
    CHECK_THROWS_WITH_AS(run_suite(design, cfg), doctest::Contains("replications failed"),
                         NumericError);

    SimDesign none = design;
    none.n_rep = 0;
    SuiteConfig ok;
    ok.roster = {"unadj"};
    CHECK_THROWS_AS(run_suite(none, ok), ConfigError);
}

TEST_CASE("pairwise tables pair up replication estimates") {
    SyntheticBase base = synthetic_base(200, 20, 13);
    SimDesign design = build_design(base.w, base.a, 17, base.column_names);
    design.n_rep = 6;
    design.n_per_rep = 120;
    SuiteConfig cfg;
    cfg.roster = {"gcomp", "tmle", "ctmle1"};
    cfg.v_folds = 5;
    cfg.path.grid_size = 10;
    cfg.path.lambda_min_ratio = 0.05;
    SimReport rep = run_suite(design, cfg);

    PairwiseTable same = pairwise_report(rep, "tmle", "tmle");
    REQUIRE(same.points.size() == rep.rep_ids.size());
    for (const PairwisePoint& pt : same.points) {
        CHECK(pt.psi_a == pt.psi_b);
        CHECK(pt.cover_a == pt.cover_b);
    }

    PairwiseTable mixed = pairwise_report(rep, "gcomp", "tmle");
    CHECK(mixed.label_a == "gcomp");
    for (std::size_t s = 0; s < mixed.points.size(); ++s) {
        const PairwisePoint& pt = mixed.points[s];
        CHECK(pt.rep_id == rep.rep_ids[s]);
        CHECK(pt.cover_a == -1);  // no interval for the regression plug-in
        const int want = (rep.ci_lo(static_cast<int>(s), 1) <= rep.true_ate &&
                          rep.true_ate <= rep.ci_hi(static_cast<int>(s), 1))
                             ? 1
                             : 0;
        CHECK(pt.cover_b == want);
        CHECK(pt.psi_a == rep.estimates(static_cast<int>(s), 0));
        CHECK(pt.psi_b == rep.estimates(static_cast<int>(s), 1));
    }

    CHECK_THROWS_AS(pairwise_report(rep, "tmle", "mystery"), ConfigError);
}

TEST_CASE("synthetic covariate base is reproducible with the documented shape") {
    SyntheticBase b = synthetic_base(150, 11, 99);
    CHECK(b.w.rows() == 150);
    CHECK(b.w.cols() == 11);
    REQUIRE(b.column_names.size() == 11);
    CHECK(b.column_names[0] == "w1");
    CHECK(b.column_names[10] == "w11");

    bool any_treated = false, any_control = false;
    for (int i = 0; i < 150; ++i) {
        REQUIRE((b.a[i] == 0.0 || b.a[i] == 1.0));
        (b.a[i] == 1.0 ? any_treated : any_control) = true;
    }
    CHECK(any_treated);
    CHECK(any_control);

    for (int j = 0; j < 11; ++j) {
        for (int i = 0; i < 150; ++i) {
            const double v = b.w(i, j);
            if (j % 2 == 0) {
                REQUIRE((v == 0.0 || v == 1.0));
            } else {
                REQUIRE(v == std::floor(v));
                REQUIRE(v >= 0.0);
                REQUIRE(v <= 8.0);
            }
        }
    }

    SyntheticBase again = synthetic_base(150, 11, 99);
    CHECK(same_entries(b.w, again.w));
    CHECK(same_entries(b.a, again.a));
    SyntheticBase other = synthetic_base(150, 11, 100);
    CHECK_FALSE(same_entries(b.w, other.w));

    CHECK_THROWS_AS(synthetic_base(5, 11, 1), ConfigError);
    CHECK_THROWS_AS(synthetic_base(150, 3, 1), ConfigError);
}
