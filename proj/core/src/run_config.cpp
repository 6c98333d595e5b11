#include "ctlasso/run_config.hpp"

#include "ctlasso/csv.hpp"

#include <json.hpp>

#include <set>

namespace ctlasso {

namespace {

using nlohmann::json;

const std::set<std::string> kCommands = {"estimate", "hdps", "simulate", "path"};

template <typename T>
void take(const json& j, const char* key, T* out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        *out = it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

}  // namespace

RunConfig parse_config_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");

    static const std::set<std::string> kKnown = {
        "command",    "input",      "claims",        "out_dir",      "outcome_col",
        "treatment_col", "id_col",  "roster",        "q_columns",    "v_folds",
        "seed",       "threads",    "grid_size",     "lambda_min_ratio", "path_tol",
        "max_sweeps", "ps_lo",      "ps_hi",         "path_with_ctmle",  "k1",
        "k2",         "n_rep",      "n_per_rep",     "q_subset_size",    "base_n",
        "base_p",     "base_csv",   "pairs"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!kKnown.count(it.key()))
            throw ConfigError("unknown config key '" + it.key() + "'");
    }

    RunConfig c;
    take(j, "command", &c.command);
    take(j, "input", &c.input);
    take(j, "claims", &c.claims);
    take(j, "out_dir", &c.out_dir);
    take(j, "outcome_col", &c.outcome_col);
    take(j, "treatment_col", &c.treatment_col);
    take(j, "id_col", &c.id_col);
    take(j, "roster", &c.roster);
    take(j, "q_columns", &c.q_columns);
    take(j, "v_folds", &c.v_folds);
    take(j, "seed", &c.seed);
    take(j, "threads", &c.threads);
    take(j, "grid_size", &c.path.grid_size);
    take(j, "lambda_min_ratio", &c.path.lambda_min_ratio);
    take(j, "path_tol", &c.path.tol);
    take(j, "max_sweeps", &c.path.max_sweeps);
    take(j, "ps_lo", &c.bounds.lo);
    take(j, "ps_hi", &c.bounds.hi);
    take(j, "path_with_ctmle", &c.path_with_ctmle);
    take(j, "k1", &c.k1);
    take(j, "k2", &c.k2);
    take(j, "n_rep", &c.n_rep);
    take(j, "n_per_rep", &c.n_per_rep);
    take(j, "q_subset_size", &c.q_subset_size);
    take(j, "base_n", &c.base_n);
    take(j, "base_p", &c.base_p);
    take(j, "base_csv", &c.base_csv);
    if (j.contains("pairs")) {
        const json& jp = j["pairs"];
        if (!jp.is_array()) throw ConfigError("config key 'pairs' must be an array of pairs");
        c.pairs.clear();
        for (const json& item : jp) {
            if (!item.is_array() || item.size() != 2 || !item[0].is_string() ||
                !item[1].is_string())
                throw ConfigError("each entry of 'pairs' must be [label, label]");
            c.pairs.emplace_back(item[0].get<std::string>(), item[1].get<std::string>());
        }
    }
    return c;
}

std::string config_to_json(const RunConfig& c) {
    json j;
    j["command"] = c.command;
    j["input"] = c.input;
    j["claims"] = c.claims;
    j["out_dir"] = c.out_dir;
    j["outcome_col"] = c.outcome_col;
    j["treatment_col"] = c.treatment_col;
    j["id_col"] = c.id_col;
    j["roster"] = c.roster;
    j["q_columns"] = c.q_columns;
    j["v_folds"] = c.v_folds;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["grid_size"] = c.path.grid_size;
    j["lambda_min_ratio"] = c.path.lambda_min_ratio;
    j["path_tol"] = c.path.tol;
    j["max_sweeps"] = c.path.max_sweeps;
    j["ps_lo"] = c.bounds.lo;
    j["ps_hi"] = c.bounds.hi;
    j["path_with_ctmle"] = c.path_with_ctmle;
    j["k1"] = c.k1;
    j["k2"] = c.k2;
    j["n_rep"] = c.n_rep;
    j["n_per_rep"] = c.n_per_rep;
    j["q_subset_size"] = c.q_subset_size;
    j["base_n"] = c.base_n;
    j["base_p"] = c.base_p;
    j["base_csv"] = c.base_csv;
    json jp = json::array();
    for (const auto& pr : c.pairs) jp.push_back({pr.first, pr.second});
    j["pairs"] = jp;
    return j.dump(2);
}

RunConfig load_config(const std::string& path) {
    return parse_config_json(read_text_file(path));
}

std::string config_hash(const RunConfig& cfg) {
    // The worker-thread count cannot change any result (outputs are
    // deterministic regardless of parallelism), so it is not part of the
    // provenance hash.
    RunConfig keyed = cfg;
    keyed.threads = 0;
    return to_hex(fnv1a(config_to_json(keyed)));
}

void validate_config(const RunConfig& c) {
    if (!kCommands.count(c.command))
        throw ConfigError("unknown command '" + c.command +
                          "' (expected estimate, hdps, simulate, or path)");
    if (c.v_folds < 2) throw ConfigError("v_folds must be at least 2");
    if (c.threads < 0) throw ConfigError("threads must be non-negative (0 = all cores)");
    if (c.path.grid_size < 2) throw ConfigError("grid_size must be at least 2");
    if (c.path.lambda_min_ratio < 0.0 || c.path.lambda_min_ratio >= 1.0)
        throw ConfigError("lambda_min_ratio must lie in [0, 1)");
    if (!(c.bounds.lo > 0.0 && c.bounds.hi < 1.0 && c.bounds.lo < c.bounds.hi))
        throw ConfigError("propensity bounds must satisfy 0 < ps_lo < ps_hi < 1");
    if (c.k1 < 1) throw ConfigError("k1 must be at least 1");
    if (c.k2 < 0) throw ConfigError("k2 must be non-negative");
    if (c.command == "estimate" || c.command == "path") {
        if (c.input.empty()) throw ConfigError("missing 'input' dataset path");
    }
    if (c.command == "hdps") {
        if (c.input.empty()) throw ConfigError("missing 'input' baseline path");
        if (c.claims.empty()) throw ConfigError("missing 'claims' path");
    }
    if (c.command == "simulate") {
        if (c.n_rep < 1) throw ConfigError("n_rep must be at least 1");
        if (c.n_per_rep < 2) throw ConfigError("n_per_rep must be at least 2");
        if (c.q_subset_size < 0) throw ConfigError("q_subset_size must be non-negative");
        if (c.base_csv.empty()) {
            if (c.base_n < 10) throw ConfigError("base_n must be at least 10");
            if (c.base_p < 5) throw ConfigError("base_p must be at least 5");
        }
    }
    const std::set<std::string> known(kFullRoster.begin(), kFullRoster.end());
    for (const std::string& label : c.roster)
        if (!known.count(label)) throw ConfigError("unknown estimator '" + label + "'");
    for (const auto& pr : c.pairs) {
        if (!known.count(pr.first)) throw ConfigError("unknown estimator '" + pr.first + "'");
        if (!known.count(pr.second)) throw ConfigError("unknown estimator '" + pr.second + "'");
    }
}

}  // namespace ctlasso
