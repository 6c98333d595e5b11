#pragma once

#include "ctlasso/ctmle.hpp"
#include "ctlasso/run_config.hpp"
#include "ctlasso/simulation.hpp"

#include <string>

namespace ctlasso {

// Dispatch on cfg.command; writes all outputs under cfg.out_dir. Throws
// ConfigError/DataError/NumericError with stage-prefixed messages; the CLI
// maps those to exit codes 2/3/4.
void run_command(const RunConfig& cfg);

void cmd_estimate(const RunConfig& cfg);
void cmd_hdps(const RunConfig& cfg);
void cmd_simulate(const RunConfig& cfg);
void cmd_path(const RunConfig& cfg);

// JSON form of the selection trace (also used by the estimate command).
std::string trace_to_json(const CtmleTrace& trace, const std::string& hash);

}  // namespace ctlasso
