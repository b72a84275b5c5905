#pragma once

#include <string>

#include "couplab/config.hpp"

namespace couplab::cli {

// Dispatches one subcommand: density, simulate, moments, couple, rates,
// checks, or report. Artifacts and a manifest land in cfg.out; every
// failure writes <out>/error.json with a machine-readable reason and the
// return value is the process exit status (0 ok, 1 runtime failure,
// 2 config-level failure).
int run_command(const std::string& command, const config::RunConfig& cfg);

}  // namespace couplab::cli
