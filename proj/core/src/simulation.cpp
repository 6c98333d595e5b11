#include "ctlasso/simulation.hpp"

#include "ctlasso/tmle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace ctlasso {

const std::vector<std::string> kFullRoster = {
    "unadj",  "gcomp",      "ipw",  "ipw_star",  "hajek", "hajek_star",
    "wr",     "wr_star",    "dr_ipw", "dr_ipw_star", "hbc",   "hbc_star",
    "tmle",   "tmle_star",  "ctmle1", "ctmle0",   "ctmle0_star"};

namespace {

constexpr std::uint64_t kFoldStream = 0x666f6c6473ULL;   // fold assignment
constexpr std::uint64_t kBetaStream = 0x62657461ULL;     // outcome coefficients
constexpr std::uint64_t kRepStream = 0x7265706cULL;      // replication base
constexpr std::uint64_t kColStream = 0x636f6c73ULL;      // column parameters
constexpr std::uint64_t kFillStream = 0x66696c6cULL;     // covariate values
constexpr std::uint64_t kCoefStream = 0x636f6566ULL;     // treatment coefficients
constexpr std::uint64_t kTreatStream = 0x74726561ULL;    // treatment draws

bool wants(const std::vector<std::string>& roster, const std::string& label) {
    return std::find(roster.begin(), roster.end(), label) != roster.end();
}

bool is_star(const std::string& label) {
    return label.size() > 5 && label.compare(label.size() - 5, 5, "_star") == 0;
}

VectorXd bounded_ps_at(const LassoPath& path, int gi, const MatrixXd& x, PsBounds b) {
    VectorXd eta = (x * path.coefs.row(gi).transpose()).array() + path.intercepts[gi];
    VectorXd g(eta.size());
    for (int i = 0; i < eta.size(); ++i)
        g[i] = std::min(b.hi, std::max(b.lo, expit(eta[i])));
    return g;
}

}  // namespace

RosterResult run_estimators(const Dataset& data, const RosterOptions& opts) {
    data.validate();
    const std::set<std::string> known(kFullRoster.begin(), kFullRoster.end());
    if (opts.roster.empty()) throw ConfigError("empty estimator roster");
    for (const std::string& label : opts.roster) {
        if (!known.count(label)) throw ConfigError("unknown estimator '" + label + "'");
    }
    if (opts.v_folds < 2) throw ConfigError("cross-validation needs at least 2 folds");

    RosterResult out;
    auto scaled = scale_outcome(data.y);
    const VectorXd& y_s = scaled.first;
    const OutcomeScale& scale = scaled.second;

    std::vector<int> q_subset = opts.q_subset;
    if (q_subset.empty()) {
        q_subset.resize(data.p());
        for (int j = 0; j < data.p(); ++j) q_subset[j] = j;
    }

    bool need_star = false;
    for (const std::string& label : opts.roster) need_star |= is_star(label);
    const bool need_ctmle1 = need_star || wants(opts.roster, "ctmle1");
    bool need_path = need_ctmle1;
    for (const std::string& label : opts.roster)
        need_path |= (label != "unadj" && label != "gcomp");
    bool need_q = need_ctmle1;
    for (const std::string& label : opts.roster)
        need_q |= (label != "unadj" && label != "ipw" && label != "ipw_star" &&
                   label != "hajek" && label != "hajek_star");

    OutcomeFit q_init;
    if (need_q) {
        q_init = fit_outcome_mainterm(y_s, data.a, data.w, q_subset);
        for (const std::string& msg : q_init.warnings) out.warnings.push_back(msg);
    }

    FoldAssignment folds;
    PathCv ps;
    int cvi = 0;
    VectorXd g_cv;
    if (need_path) {
        folds = make_folds(data.n(), opts.v_folds, Rng::derive_seed(opts.seed, kFoldStream),
                           data.a);
        ps = fit_path_cv(data.w, data.a, folds, opts.path);
        for (const std::string& msg : ps.full.warnings) out.warnings.push_back(msg);
        out.curve = ps.curve;
        out.n_active = ps.full.n_active;
        out.lambda_cv = ps.curve.lambda_cv;
        cvi = ps.curve.cv_index;
        g_cv = bounded_ps_at(ps.full, cvi, data.w, opts.bounds);
    }

    VectorXd g_star;
    int star_i = -1;
    AteEstimate ctmle1_estimate;
    if (need_ctmle1) {
        Ctmle1Result c1 = ctmle1(y_s, data.a, data.w, ps, folds, q_init, scale, opts.bounds);
        out.lambda_ctmle = c1.trace.final_lambda;
        star_i = ps.full.grid_index_at_or_above(c1.trace.final_lambda);
        g_star = bounded_ps_at(ps.full, star_i, data.w, opts.bounds);
        ctmle1_estimate = c1.estimate;
        out.trace = std::move(c1.trace);
    }

    for (const std::string& label : opts.roster) {
        AteEstimate e;
        if (label == "unadj") {
            e = unadjusted(data.y, data.a);
        } else if (label == "gcomp") {
            e = gcomp(q_init, scale);
        } else if (label == "ipw" || label == "ipw_star") {
            e = ipw(y_s, data.a, label == "ipw" ? g_cv : g_star, scale);
        } else if (label == "hajek" || label == "hajek_star") {
            e = hajek_ipw(y_s, data.a, label == "hajek" ? g_cv : g_star, scale);
        } else if (label == "wr" || label == "wr_star") {
            e = weighted_regression(y_s, data.a, data.w, q_subset,
                                    label == "wr" ? g_cv : g_star, scale);
        } else if (label == "dr_ipw" || label == "dr_ipw_star") {
            e = dr_ipw(y_s, data.a, label == "dr_ipw" ? g_cv : g_star, q_init, scale);
        } else if (label == "hbc" || label == "hbc_star") {
            e = hbc(y_s, data.a, label == "hbc" ? g_cv : g_star, q_init, scale);
        } else if (label == "tmle" || label == "tmle_star") {
            TmleResult t = tmle(y_s, data.a, label == "tmle" ? g_cv : g_star, q_init, scale,
                                label);
            e = t.estimate;
        } else if (label == "ctmle1") {
            e = ctmle1_estimate;
        } else if (label == "ctmle0" || label == "ctmle0_star") {
            const int base_i = label == "ctmle0" ? cvi : star_i;
            const int nb_i = neighbor_grid_index(ps.full, base_i);
            const VectorXd g_base = label == "ctmle0" ? g_cv : g_star;
            const VectorXd g_nb = bounded_ps_at(ps.full, nb_i, data.w, opts.bounds);
            Ctmle0Result r0 = ctmle0(y_s, data.a, g_base, g_nb, q_init, scale);
            for (const std::string& msg : r0.warnings) out.warnings.push_back(msg);
            e = r0.estimate;
        }
        if (label != "unadj" && label != "gcomp" && label != "ctmle1") {
            e.estimator = label;
            e.lambda_used = is_star(label) ? ps.full.lambdas[star_i] : out.lambda_cv;
        }
        out.estimates.push_back(std::move(e));
    }
    return out;
}

SimDesign build_design(const MatrixXd& base_w, const VectorXd& base_a, std::uint64_t seed,
                       const std::vector<std::string>& column_names) {
    const int n = static_cast<int>(base_w.rows());
    const int p = static_cast<int>(base_w.cols());
    if (base_a.size() != n) throw DataError("base treatment length does not match covariates");
    if (n < 2 || p < 1) throw DataError("base population too small");
    for (int i = 0; i < n; ++i)
        if (base_a[i] != 0.0 && base_a[i] != 1.0)
            throw DataError("base treatment must be binary");

    SimDesign d;
    d.base_w = base_w;
    d.base_a = base_a;
    d.seed = seed;
    if (!column_names.empty()) {
        if (static_cast<int>(column_names.size()) != p)
            throw DataError("column name count does not match covariates");
        d.column_names = column_names;
    } else {
        d.column_names.reserve(p);
        for (int j = 0; j < p; ++j) d.column_names.push_back("w" + std::to_string(j + 1));
    }

    const double a_mean = base_a.mean();
    const double a_sd = std::sqrt((base_a.array() - a_mean).square().sum() / n);
    std::vector<std::pair<double, int>> scored(p);
    for (int j = 0; j < p; ++j) {
        const double m = base_w.col(j).mean();
        const double sd = std::sqrt((base_w.col(j).array() - m).square().sum() / n);
        double r = 0.0;
        if (sd > 0.0 && a_sd > 0.0) {
            const double cov = ((base_w.col(j).array() - m) * (base_a.array() - a_mean)).sum() / n;
            r = cov / (sd * a_sd);
        }
        scored[j] = {std::abs(r), j};
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first > y.first;
        return x.second < y.second;
    });

    int n_conf = std::min(40, p);
    if (p < 40) {
        std::ostringstream os;
        os << "base has only " << p << " covariates; using all as confounders";
        d.warnings.push_back(os.str());
    }
    d.confounders.resize(n_conf);
    for (int k = 0; k < n_conf; ++k) d.confounders[k] = scored[k].second;

    Rng rng(Rng::derive_seed(seed, kBetaStream));
    d.beta.resize(n_conf);
    for (int k = 0; k < n_conf; ++k) d.beta[k] = rng.normal();
    return d;
}

std::uint64_t replication_seed(std::uint64_t suite_seed, int rep) {
    return Rng::derive_seed(suite_seed, kRepStream + static_cast<std::uint64_t>(rep));
}

Dataset draw_replication(const SimDesign& design, std::uint64_t rep_seed) {
    const int base_n = static_cast<int>(design.base_w.rows());
    const int p = static_cast<int>(design.base_w.cols());
    const int n = design.n_per_rep;
    if (n < 2) throw ConfigError("replication size must be at least 2");

    Rng rng(rep_seed);
    Dataset d;
    d.w.resize(n, p);
    d.a.resize(n);
    d.y.resize(n);
    d.column_names = design.column_names;
    for (int i = 0; i < n; ++i) {
        const int idx = static_cast<int>(rng.below(static_cast<std::uint64_t>(base_n)));
        d.w.row(i) = design.base_w.row(idx);
        d.a[i] = design.base_a[idx];
    }
    for (int i = 0; i < n; ++i) {
        double lin = 2.0 + d.a[i];
        for (std::size_t k = 0; k < design.confounders.size(); ++k)
            lin += design.beta[static_cast<int>(k)] * d.w(i, design.confounders[k]);
        d.y[i] = lin + rng.normal();
    }
    return d;
}

SimReport run_suite(const SimDesign& design, const SuiteConfig& cfg) {
    const int n_rep = design.n_rep;
    if (n_rep < 1) throw ConfigError("need at least one replication");
    const int n_est = static_cast<int>(cfg.roster.size());

    RosterOptions base_opts;
    base_opts.roster = cfg.roster;
    base_opts.v_folds = cfg.v_folds;
    base_opts.path = cfg.path;
    base_opts.bounds = cfg.bounds;
    base_opts.q_subset.assign(
        design.confounders.begin(),
        design.confounders.begin() +
            std::min<std::size_t>(design.confounders.size(),
                                  static_cast<std::size_t>(design.q_subset_size)));

    struct Slot {
        bool ok = false;
        std::string error;
        std::vector<AteEstimate> est;
    };
    std::vector<Slot> slots(n_rep);
    parallel_for(n_rep, cfg.threads, [&](int r) {
        Slot& slot = slots[r];
        try {
            const std::uint64_t rs = replication_seed(design.seed, r);
            Dataset d = draw_replication(design, rs);
            RosterOptions o = base_opts;
            o.seed = rs;
            RosterResult rr = run_estimators(d, o);
            slot.est = std::move(rr.estimates);
            slot.ok = true;
        } catch (const std::exception& e) {
            slot.ok = false;
            slot.error = e.what();
        }
    });

    SimReport rep;
    rep.roster = cfg.roster;
    rep.true_ate = design.true_ate;
    rep.seed = design.seed;
    for (int r = 0; r < n_rep; ++r) {
        if (slots[r].ok)
            rep.rep_ids.push_back(r);
        else
            rep.failures.emplace_back(r, slots[r].error);
    }
    const int n_fail = static_cast<int>(rep.failures.size());
    if (n_fail > 0 && n_fail * 100 >= n_rep) {
        std::ostringstream os;
        os << n_fail << " of " << n_rep
           << " replications failed (>= 1%); first failure: replication "
           << rep.failures.front().first << ": " << rep.failures.front().second;
        throw NumericError(os.str());
    }

    const int n_ok = static_cast<int>(rep.rep_ids.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rep.estimates.resize(n_ok, n_est);
    rep.ci_lo = MatrixXd::Constant(n_ok, n_est, nan);
    rep.ci_hi = MatrixXd::Constant(n_ok, n_est, nan);
    for (int s = 0; s < n_ok; ++s) {
        const Slot& slot = slots[rep.rep_ids[s]];
        for (int e = 0; e < n_est; ++e) {
            rep.estimates(s, e) = slot.est[e].psi;
            if (slot.est[e].ci_lo && slot.est[e].ci_hi) {
                rep.ci_lo(s, e) = *slot.est[e].ci_lo;
                rep.ci_hi(s, e) = *slot.est[e].ci_hi;
            }
        }
    }

    rep.metrics.resize(n_est);
    for (int e = 0; e < n_est; ++e) {
        EstimatorMetrics& m = rep.metrics[e];
        m.label = cfg.roster[e];
        m.n_used = n_ok;
        std::vector<double> psi(n_ok);
        for (int s = 0; s < n_ok; ++s) psi[s] = rep.estimates(s, e);
        const double mean = mean_of(psi);
        m.bias = mean - design.true_ate;
        m.se = sd_pop(psi);
        double mse = 0.0;
        for (double v : psi) mse += (v - design.true_ate) * (v - design.true_ate);
        m.mse = n_ok > 0 ? mse / n_ok : 0.0;
        bool has_ci = n_ok > 0 && std::isfinite(rep.ci_lo(0, e));
        if (has_ci) {
            int covered = 0;
            double len = 0.0;
            for (int s = 0; s < n_ok; ++s) {
                if (rep.ci_lo(s, e) <= design.true_ate && design.true_ate <= rep.ci_hi(s, e))
                    ++covered;
                len += rep.ci_hi(s, e) - rep.ci_lo(s, e);
            }
            m.coverage = static_cast<double>(covered) / n_ok;
            m.avg_ci_length = len / n_ok;
        }
    }
    return rep;
}

PairwiseTable pairwise_report(const SimReport& report, const std::string& label_a,
                              const std::string& label_b) {
    auto index_of = [&](const std::string& label) {
        for (std::size_t i = 0; i < report.roster.size(); ++i)
            if (report.roster[i] == label) return static_cast<int>(i);
        throw ConfigError("unknown estimator '" + label + "' in pairwise report");
    };
    const int ia = index_of(label_a);
    const int ib = index_of(label_b);
    PairwiseTable t;
    t.label_a = label_a;
    t.label_b = label_b;
    const int n_ok = static_cast<int>(report.rep_ids.size());
    t.points.reserve(n_ok);
    for (int s = 0; s < n_ok; ++s) {
        PairwisePoint pt;
        pt.rep_id = report.rep_ids[s];
        pt.psi_a = report.estimates(s, ia);
        pt.psi_b = report.estimates(s, ib);
        auto flag = [&](int e) {
            if (!std::isfinite(report.ci_lo(s, e))) return -1;
            return (report.ci_lo(s, e) <= report.true_ate &&
                    report.true_ate <= report.ci_hi(s, e))
                       ? 1
                       : 0;
        };
        pt.cover_a = flag(ia);
        pt.cover_b = flag(ib);
        t.points.push_back(pt);
    }
    return t;
}

SyntheticBase synthetic_base(int n, int p, std::uint64_t seed) {
    if (n < 10) throw ConfigError("synthetic base needs at least 10 rows");
    if (p < 5) throw ConfigError("synthetic base needs at least 5 columns");

    SyntheticBase base;
    base.w.resize(n, p);
    base.column_names.reserve(p);
    for (int j = 0; j < p; ++j) base.column_names.push_back("w" + std::to_string(j + 1));

    // Column parameters: even columns sparse binary, odd columns small counts.
    Rng col_rng(Rng::derive_seed(seed, kColStream));
    std::vector<double> par(p);
    for (int j = 0; j < p; ++j) {
        if (j % 2 == 0)
            par[j] = 0.05 + 0.45 * col_rng.uniform01();  // Bernoulli probability
        else
            par[j] = 0.45 + 0.35 * col_rng.uniform01();  // geometric success probability
    }

    Rng fill_rng(Rng::derive_seed(seed, kFillStream));
    for (int j = 0; j < p; ++j) {
        for (int i = 0; i < n; ++i) {
            if (j % 2 == 0) {
                base.w(i, j) = fill_rng.uniform01() < par[j] ? 1.0 : 0.0;
            } else {
                const double u = 1.0 - fill_rng.uniform01();  // in (0, 1]
                const double k = std::floor(std::log(u) / std::log(1.0 - par[j]));
                base.w(i, j) = std::min(8.0, k);
            }
        }
    }

    // Standardize internally for the treatment mechanism.
    MatrixXd z(n, p);
    for (int j = 0; j < p; ++j) {
        const double m = base.w.col(j).mean();
        double sd = std::sqrt((base.w.col(j).array() - m).square().sum() / n);
        if (sd <= 0.0) sd = 1.0;
        z.col(j) = (base.w.col(j).array() - m) / sd;
    }

    // Geometrically decaying signed coefficients over the leading columns,
    // plus two interactions and one squared term for mild nonlinearity.
    Rng coef_rng(Rng::derive_seed(seed, kCoefStream));
    const int n_sig = std::min(60, p);
    VectorXd eta = VectorXd::Zero(n);
    for (int k = 0; k < n_sig; ++k) {
        const double sign = coef_rng.uniform01() < 0.5 ? -1.0 : 1.0;
        const double mag = 0.9 * std::pow(0.92, k);
        eta += sign * mag * z.col(k);
    }
    eta += 0.35 * (z.col(0).array() * z.col(2).array()).matrix();
    eta += 0.35 * (z.col(1).array() * z.col(4).array()).matrix();
    eta += 0.25 * (z.col(3).array().square() - 1.0).matrix();

    const double eta_mean = eta.mean();
    double eta_sd = std::sqrt((eta.array() - eta_mean).square().sum() / n);
    if (eta_sd <= 0.0) eta_sd = 1.0;
    const double target_sd = 1.6;
    const double alpha0 = logit(0.35);
    Rng treat_rng(Rng::derive_seed(seed, kTreatStream));
    base.a.resize(n);
    for (int i = 0; i < n; ++i) {
        const double lp = alpha0 + (eta[i] - eta_mean) * (target_sd / eta_sd);
        base.a[i] = treat_rng.uniform01() < expit(lp) ? 1.0 : 0.0;
    }
    return base;
}

}  // namespace ctlasso
