#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "couplab/config.hpp"

namespace couplab::manifest {

inline constexpr const char* kVersion = "0.1.0";

// Provenance record written next to every artifact. Holds no wall-clock
// data: a manifest, like the artifacts it describes, is a pure function of
// (config, seed, version).
struct RunManifest {
  std::string command;
  std::string version = kVersion;
  std::string config_hash;
  std::map<std::string, std::string> config;  // canonical key -> value
  std::uint64_t seed = 0;
  bool seed_defaulted = false;
  std::uint64_t capped_events = 0;
  std::uint64_t degenerate_blocks = 0;
  std::uint64_t warnings = 0;
  std::map<std::string, double> values;        // computed scalars (M, sigma2, ...)
  std::map<std::string, std::string> verdicts; // named pass/fail/marginal calls
  std::vector<std::string> artifacts;          // basenames written by the run
};

// Fills command/config/hash/seed fields from the config.
RunManifest make_manifest(const std::string& command,
                          const config::RunConfig& cfg);

// Serializes to pretty JSON via temp file + atomic rename.
void write_manifest(const RunManifest& m, const std::string& path);

// JSON text of the manifest (what write_manifest puts on disk).
std::string manifest_json(const RunManifest& m);

}  // namespace couplab::manifest
