#pragma once

#include "ctlasso/lasso_path.hpp"
#include "ctlasso/simulation.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ctlasso {

// Everything a command needs, loadable from a JSON file and overridable by
// CLI flags. Parsing is strict: unknown keys are configuration errors.
struct RunConfig {
    std::string command;  // estimate | hdps | simulate | path

    // Inputs and outputs.
    std::string input;          // dataset CSV (estimate/path), baseline CSV (hdps)
    std::string claims;         // claims CSV (hdps)
    std::string out_dir = "out";

    // Column naming.
    std::string outcome_col = "y";
    std::string treatment_col = "a";
    std::string id_col = "patient_id";

    // Estimation settings.
    std::vector<std::string> roster = kFullRoster;
    std::vector<std::string> q_columns;  // outcome-model covariates; empty = all
    int v_folds = 10;
    std::uint64_t seed = 1;
    int threads = 0;  // 0 = all available cores
    PathConfig path;
    PsBounds bounds;
    bool path_with_ctmle = true;  // path command: also mark the collaborative choice

    // hdPS settings.
    int k1 = 100;
    int k2 = 200;

    // Simulation settings.
    int n_rep = 200;
    int n_per_rep = 1000;
    int q_subset_size = 10;
    int base_n = 5000;
    int base_p = 200;
    std::string base_csv;  // optional covariate/treatment base; synthetic when empty
    std::vector<std::pair<std::string, std::string>> pairs;  // pairwise reports

    bool operator==(const RunConfig&) const = default;
};

RunConfig parse_config_json(const std::string& json_text);
std::string config_to_json(const RunConfig& cfg);  // canonical (sorted keys)
RunConfig load_config(const std::string& path);

// FNV-1a hash of the canonical JSON form; stamped on every output file.
std::string config_hash(const RunConfig& cfg);

void validate_config(const RunConfig& cfg);

}  // namespace ctlasso
