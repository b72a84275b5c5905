#include "couplab/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace couplab::manifest {

RunManifest make_manifest(const std::string& command,
                          const config::RunConfig& cfg) {
  RunManifest m;
  m.command = command;
  m.config_hash = config::config_hash(cfg);
  m.seed = cfg.seed;
  m.seed_defaulted = cfg.seed_defaulted;
  std::istringstream canon(config::canonical_text(cfg));
  std::string line;
  while (std::getline(canon, line)) {
    std::size_t eq = line.find('=');
    if (eq != std::string::npos)
      m.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

std::string manifest_json(const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["version"] = m.version;
  j["config_hash"] = m.config_hash;
  j["config"] = m.config;
  j["seed"] = m.seed;
  j["seed_defaulted"] = m.seed_defaulted;
  j["counters"] = {{"capped_events", m.capped_events},
                   {"degenerate_blocks", m.degenerate_blocks},
                   {"warnings", m.warnings}};
  j["values"] = m.values;
  j["verdicts"] = m.verdicts;
  j["artifacts"] = m.artifacts;
  return j.dump(2) + "\n";
}

void write_manifest(const RunManifest& m, const std::string& path) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_manifest: cannot open " + tmp);
    out << manifest_json(m);
    if (!out)
      throw std::runtime_error("write_manifest: write failed on " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace couplab::manifest
