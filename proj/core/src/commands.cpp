#include "ctlasso/commands.hpp"

#include "ctlasso/csv.hpp"
#include "ctlasso/hdps.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <thread>

namespace ctlasso {

namespace {

using nlohmann::json;

// Rethrow with a stage prefix so CLI error messages name what failed.
template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError(name + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError(name + ": " + e.what());
    } catch (const NumericError& e) {
        throw NumericError(name + ": " + e.what());
    }
}

std::filesystem::path prepare_out_dir(const RunConfig& cfg) {
    std::filesystem::path dir(cfg.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory '" + cfg.out_dir + "'");
    return dir;
}

std::string hash_header(const std::string& hash) { return "# config_hash: " + hash + "\n"; }

json estimate_to_json(const AteEstimate& e) {
    json j;
    j["estimator"] = e.estimator;
    j["psi"] = e.psi;
    if (e.se) j["se"] = *e.se;
    if (e.ci_lo) j["ci_lo"] = *e.ci_lo;
    if (e.ci_hi) j["ci_hi"] = *e.ci_hi;
    if (e.lambda_used) j["lambda"] = *e.lambda_used;
    return j;
}

// Fixed-width summary for reading at the terminal; estimates.json carries
// the full-precision values.
std::string human_table(const std::vector<AteEstimate>& estimates) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "estimator" << std::right << std::setw(12) << "psi"
       << std::setw(12) << "se" << std::setw(12) << "ci_lo" << std::setw(12) << "ci_hi"
       << std::setw(14) << "lambda" << "\n";
    auto cell = [](const std::optional<double>& v) {
        if (!v) return std::string("-");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6g", *v);
        return std::string(buf);
    };
    for (const AteEstimate& e : estimates) {
        os << std::left << std::setw(14) << e.estimator << std::right << std::setw(12)
           << cell(e.psi) << std::setw(12) << cell(e.se) << std::setw(12) << cell(e.ci_lo)
           << std::setw(12) << cell(e.ci_hi) << std::setw(14) << cell(e.lambda_used) << "\n";
    }
    return os.str();
}

// Dataset loader that tolerates (and returns) a string id column.
struct BaselineWithIds {
    Dataset data;
    std::vector<std::string> ids;
};

BaselineWithIds load_baseline_with_ids(const RunConfig& cfg) {
    const CsvTable table = read_csv(cfg.input);
    const int id_idx = table.column(cfg.id_col);
    if (id_idx < 0)
        throw DataError("baseline file lacks id column '" + cfg.id_col + "'");
    BaselineWithIds out;
    out.ids.reserve(table.rows.size());
    for (const auto& row : table.rows) out.ids.push_back(row[id_idx]);

    // Rebuild a CSV without the id column and parse it as a dataset.
    std::ostringstream os;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (static_cast<int>(c) == id_idx) continue;
        if (os.tellp() > 0) os << ',';
        os << csv_escape(table.header[c]);
    }
    os << '\n';
    for (const auto& row : table.rows) {
        bool first = true;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (static_cast<int>(c) == id_idx) continue;
            if (!first) os << ',';
            os << csv_escape(row[c]);
            first = false;
        }
        os << '\n';
    }
    out.data = parse_dataset(os.str(), cfg.outcome_col, cfg.treatment_col);
    return out;
}

std::vector<int> resolve_q_columns(const RunConfig& cfg, const Dataset& data) {
    std::vector<int> subset;
    for (const std::string& name : cfg.q_columns) {
        int found = -1;
        for (int j = 0; j < data.p(); ++j) {
            if (data.column_names[j] == name) {
                found = j;
                break;
            }
        }
        if (found < 0)
            throw ConfigError("q_columns entry '" + name + "' is not a covariate column");
        subset.push_back(found);
    }
    return subset;
}

RosterOptions roster_options(const RunConfig& cfg, const Dataset& data) {
    RosterOptions opts;
    opts.roster = cfg.roster;
    opts.q_subset = resolve_q_columns(cfg, data);
    opts.v_folds = cfg.v_folds;
    opts.seed = cfg.seed;
    opts.path = cfg.path;
    opts.bounds = cfg.bounds;
    return opts;
}

}  // namespace

std::string trace_to_json(const CtmleTrace& trace, const std::string& hash) {
    json j;
    j["config_hash"] = hash;
    j["candidate_lambdas"] = trace.candidate_lambdas;
    j["candidate_losses"] = trace.candidate_losses;
    j["candidate_stage"] = trace.candidate_stage;
    j["cv_losses"] = trace.cv_losses;
    j["lambda_selected"] = trace.lambda_selected;
    j["n_stages"] = trace.n_stages;
    j["final_lambda"] = trace.final_lambda;
    j["critical_residual"] = trace.critical_residual;
    j["warnings"] = trace.warnings;
    return j.dump(2) + "\n";
}

void cmd_estimate(const RunConfig& cfg) {
    const std::string hash = config_hash(cfg);
    const auto dir = prepare_out_dir(cfg);
    const Dataset data = stage("loading dataset", [&] {
        return load_dataset(cfg.input, cfg.outcome_col, cfg.treatment_col);
    });
    const RosterResult rr =
        stage("estimation", [&] { return run_estimators(data, roster_options(cfg, data)); });

    json j;
    j["config_hash"] = hash;
    if (rr.curve.lambdas.size() > 0) j["lambda_cv"] = rr.lambda_cv;
    if (rr.lambda_ctmle) j["lambda_ctmle"] = *rr.lambda_ctmle;
    j["estimates"] = json::array();
    for (const AteEstimate& e : rr.estimates) j["estimates"].push_back(estimate_to_json(e));
    j["warnings"] = rr.warnings;
    stage("writing outputs", [&] {
        write_text_file((dir / "estimates.json").string(), j.dump(2) + "\n");
        if (rr.trace)
            write_text_file((dir / "trace.json").string(), trace_to_json(*rr.trace, hash));
        write_text_file((dir / "table.txt").string(),
                        hash_header(hash) + human_table(rr.estimates));
        return 0;
    });
}

void cmd_path(const RunConfig& cfg) {
    const std::string hash = config_hash(cfg);
    const auto dir = prepare_out_dir(cfg);
    const Dataset data = stage("loading dataset", [&] {
        return load_dataset(cfg.input, cfg.outcome_col, cfg.treatment_col);
    });

    RosterOptions opts = roster_options(cfg, data);
    if (cfg.path_with_ctmle) {
        opts.roster = {"ctmle1"};
    } else {
        opts.roster = {"ipw"};  // cheapest penalized-path consumer
    }
    const RosterResult rr =
        stage("fitting the penalized path", [&] { return run_estimators(data, opts); });

    std::ostringstream os;
    os << hash_header(hash);
    os << "lambda,n_active,cv_deviance,is_lambda_cv,is_lambda_ctmle\n";
    const int k = static_cast<int>(rr.curve.lambdas.size());
    int star_idx = -1;
    if (rr.lambda_ctmle) {
        for (int gi = 0; gi < k; ++gi)
            if (rr.curve.lambdas[gi] == *rr.lambda_ctmle) star_idx = gi;
    }
    for (int gi = 0; gi < k; ++gi) {
        os << format_double(rr.curve.lambdas[gi]) << ',' << rr.n_active[gi] << ','
           << format_double(rr.curve.deviance[gi]) << ','
           << (rr.curve.lambdas[gi] == rr.lambda_cv ? 1 : 0) << ','
           << (gi == star_idx ? 1 : 0) << "\n";
    }
    stage("writing outputs",
          [&] { return write_text_file((dir / "path.csv").string(), os.str()), 0; });
}

void cmd_hdps(const RunConfig& cfg) {
    const std::string hash = config_hash(cfg);
    const auto dir = prepare_out_dir(cfg);
    const BaselineWithIds baseline =
        stage("loading baseline", [&] { return load_baseline_with_ids(cfg); });
    const ClaimsTable claims = stage("loading claims", [&] { return load_claims(cfg.claims); });

    HdpsConfig hcfg;
    hcfg.k1 = cfg.k1;
    hcfg.k2 = cfg.k2;
    const HdpsResult res = stage("claims covariate pipeline", [&] {
        return hdps_pipeline(claims, baseline.data, baseline.ids, hcfg);
    });

    stage("writing outputs", [&] {
        std::ostringstream csv;
        csv << hash_header(hash);
        csv << dataset_to_csv(res.augmented, cfg.outcome_col, cfg.treatment_col);
        write_text_file((dir / "augmented.csv").string(), csv.str());

        json j;
        j["config_hash"] = hash;
        j["n_candidates"] = res.n_candidates;
        j["outcome_dichotomized"] = res.outcome_dichotomized;
        j["warnings"] = res.warnings;
        j["ranking"] = json::array();
        for (const HdpsCovariate& c : res.selected) {
            json jc;
            jc["rank"] = c.rank;
            jc["source"] = c.source;
            jc["code"] = c.code;
            jc["kind"] = c.kind;
            jc["bross_bias"] = c.bross_bias;
            jc["duplicate"] = c.flagged_duplicate;
            jc["constant"] = c.flagged_constant;
            jc["rr_undefined"] = c.flagged_rr_undefined;
            j["ranking"].push_back(jc);
        }
        write_text_file((dir / "ranking.json").string(), j.dump(2) + "\n");
        return 0;
    });
}

void cmd_simulate(const RunConfig& cfg) {
    const std::string hash = config_hash(cfg);
    const auto dir = prepare_out_dir(cfg);

    MatrixXd base_w;
    VectorXd base_a;
    std::vector<std::string> names;
    if (cfg.base_csv.empty()) {
        const SyntheticBase base = stage("generating the synthetic base", [&] {
            return synthetic_base(cfg.base_n, cfg.base_p, Rng::derive_seed(cfg.seed, 0xba5e));
        });
        base_w = base.w;
        base_a = base.a;
        names = base.column_names;
    } else {
        stage("loading base population", [&] {
            const CsvTable table = read_csv(cfg.base_csv);
            const int a_idx = table.column(cfg.treatment_col);
            if (a_idx < 0)
                throw DataError("base file lacks treatment column '" + cfg.treatment_col + "'");
            const int y_idx = table.column(cfg.outcome_col);  // ignored if present
            const int n = static_cast<int>(table.rows.size());
            if (n < 2) throw DataError("base population too small");
            std::vector<int> cov_cols;
            for (std::size_t c = 0; c < table.header.size(); ++c) {
                if (static_cast<int>(c) == a_idx || static_cast<int>(c) == y_idx) continue;
                cov_cols.push_back(static_cast<int>(c));
                names.push_back(table.header[c]);
            }
            base_w.resize(n, static_cast<int>(cov_cols.size()));
            base_a.resize(n);
            for (int i = 0; i < n; ++i) {
                for (std::size_t c = 0; c < cov_cols.size(); ++c) {
                    char* end = nullptr;
                    const std::string& raw = table.rows[i][cov_cols[c]];
                    const double v = std::strtod(raw.c_str(), &end);
                    if (raw.empty() || end != raw.c_str() + raw.size())
                        throw DataError("base row " + std::to_string(i) + ", column '" +
                                        names[c] + "': '" + raw + "' is not a number");
                    base_w(i, static_cast<int>(c)) = v;
                }
                char* end = nullptr;
                const std::string& raw = table.rows[i][a_idx];
                base_a[i] = std::strtod(raw.c_str(), &end);
                if (raw.empty() || end != raw.c_str() + raw.size())
                    throw DataError("base row " + std::to_string(i) +
                                    ": treatment '" + raw + "' is not a number");
            }
            return 0;
        });
    }

    SimDesign design = stage("building the simulation design",
                             [&] { return build_design(base_w, base_a, cfg.seed, names); });
    design.q_subset_size = cfg.q_subset_size;
    design.n_rep = cfg.n_rep;
    design.n_per_rep = cfg.n_per_rep;

    SuiteConfig scfg;
    scfg.roster = cfg.roster;
    scfg.v_folds = cfg.v_folds;
    scfg.path = cfg.path;
    scfg.bounds = cfg.bounds;
    scfg.threads = cfg.threads > 0
                       ? cfg.threads
                       : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const SimReport report =
        stage("running replications", [&] { return run_suite(design, scfg); });

    stage("writing outputs", [&] {
        std::ostringstream t2;
        t2 << hash_header(hash);
        t2 << "# values on the 1e-2 scale (multiply by 1e-2 to recover raw units)\n";
        t2 << "estimator,bias_x1e2,se_x1e2,mse_x1e2\n";
        for (const EstimatorMetrics& m : report.metrics) {
            t2 << m.label << ',' << format_double(m.bias * 100.0) << ','
               << format_double(m.se * 100.0) << ',' << format_double(m.mse * 100.0) << "\n";
        }
        write_text_file((dir / "table2.csv").string(), t2.str());

        std::ostringstream t3;
        t3 << hash_header(hash);
        t3 << "# average CI length on the 1e-2 scale; coverage in [0,1]\n";
        t3 << "estimator,coverage,avg_ci_length_x1e2\n";
        for (const EstimatorMetrics& m : report.metrics) {
            t3 << m.label << ',';
            if (m.coverage) t3 << format_double(*m.coverage);
            t3 << ',';
            if (m.avg_ci_length) t3 << format_double(*m.avg_ci_length * 100.0);
            t3 << "\n";
        }
        write_text_file((dir / "table3.csv").string(), t3.str());

        json j;
        j["config_hash"] = hash;
        j["true_ate"] = report.true_ate;
        j["n_rep"] = design.n_rep;
        j["n_per_rep"] = design.n_per_rep;
        j["n_failures"] = report.failures.size();
        j["failures"] = json::array();
        for (const auto& f : report.failures)
            j["failures"].push_back({{"replication", f.first}, {"error", f.second}});
        j["metrics"] = json::array();
        for (const EstimatorMetrics& m : report.metrics) {
            json jm;
            jm["estimator"] = m.label;
            jm["bias"] = m.bias;
            jm["se"] = m.se;
            jm["mse"] = m.mse;
            if (m.coverage) jm["coverage"] = *m.coverage;
            if (m.avg_ci_length) jm["avg_ci_length"] = *m.avg_ci_length;
            jm["n_used"] = m.n_used;
            j["metrics"].push_back(jm);
        }
        write_text_file((dir / "report.json").string(), j.dump(2) + "\n");

        std::vector<std::pair<std::string, std::string>> pairs = cfg.pairs;
        if (pairs.empty()) {
            const std::vector<std::pair<std::string, std::string>> defaults = {
                {"tmle", "ctmle1"}, {"tmle_star", "ctmle1"}, {"ctmle0", "ctmle1"}};
            for (const auto& pr : defaults) {
                const bool have_a =
                    std::find(cfg.roster.begin(), cfg.roster.end(), pr.first) != cfg.roster.end();
                const bool have_b =
                    std::find(cfg.roster.begin(), cfg.roster.end(), pr.second) != cfg.roster.end();
                if (have_a && have_b) pairs.push_back(pr);
            }
        }
        if (!pairs.empty()) {
            const auto pair_dir = dir / "pairwise";
            std::error_code ec;
            std::filesystem::create_directories(pair_dir, ec);
            if (ec) throw DataError("cannot create output directory 'pairwise'");
            for (const auto& pr : pairs) {
                const PairwiseTable t = pairwise_report(report, pr.first, pr.second);
                std::ostringstream os;
                os << hash_header(hash);
                os << "rep_id,psi_" << t.label_a << ",psi_" << t.label_b << ",cover_"
                   << t.label_a << ",cover_" << t.label_b << "\n";
                for (const PairwisePoint& pt : t.points) {
                    os << pt.rep_id << ',' << format_double(pt.psi_a) << ','
                       << format_double(pt.psi_b) << ',';
                    if (pt.cover_a >= 0) os << pt.cover_a;
                    os << ',';
                    if (pt.cover_b >= 0) os << pt.cover_b;
                    os << "\n";
                }
                write_text_file((pair_dir / (pr.first + "__" + pr.second + ".csv")).string(),
                                os.str());
            }
        }
        return 0;
    });
}

void run_command(const RunConfig& cfg) {
    stage("validating configuration", [&] { return validate_config(cfg), 0; });
    if (cfg.command == "estimate") {
        cmd_estimate(cfg);
    } else if (cfg.command == "hdps") {
        cmd_hdps(cfg);
    } else if (cfg.command == "simulate") {
        cmd_simulate(cfg);
    } else if (cfg.command == "path") {
        cmd_path(cfg);
    } else {
        throw ConfigError("unknown command '" + cfg.command + "'");
    }
}

}  // namespace ctlasso
