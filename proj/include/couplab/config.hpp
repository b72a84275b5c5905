#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "couplab/coupling.hpp"
#include "couplab/observables.hpp"
#include "couplab/quantmix.hpp"

namespace couplab::config {

// Used when the config file carries no seed; the manifest records that the
// default was taken.
inline constexpr std::uint64_t kDefaultSeed = 1729;

// One validated run configuration. Parsed from key = value text; every key
// is optional and falls back to the defaults below.
struct RunConfig {
  double gamma = 0.25;
  std::string observable = "identity";  // original text, kept for hashing
  observables::Observable f;            // parsed form of the above
  double p = 2.5;
  coupling::Variant variant = coupling::Variant::rate_a;
  double epsilon = 0.0;  // rate_b only
  int L_max = 10;
  long M_cond = 1000;
  long reps = 10;
  std::uint64_t seed = kDefaultSeed;
  bool seed_defaulted = true;
  int bins = 1024;
  double tol = 1e-8;           // density solver target residual
  std::string out = "out";     // artifact directory
  std::string profile = "intermittent";  // mixing profile for calculus runs
  std::string tail = "observable";       // tail envelope source
};

struct Violation {
  int line = 0;  // 0 when the violation is not tied to a single line
  std::string message;
};

// Parse or range failure; carries every violation found, not just the first.
struct ConfigError : std::runtime_error {
  std::vector<Violation> violations;
  explicit ConfigError(std::vector<Violation> v);
};

// Reads key = value lines ('#' comments, blank lines allowed) and validates:
//   gamma in (0, 1/2); p in [2, 3] with p <= 1/gamma (the closed endpoint
//   p = 2 is accepted so pure quantile-calculus runs can query it; schedule
//   commands re-check p > 2); epsilon > 0 under rate_b; L_max in [0, 24];
//   M_cond >= 1000; reps >= 1; bins a power of two >= 256; tol in (0, 1e-2].
// Throws ConfigError listing all violations with line numbers.
RunConfig parse_config(const std::string& path);

// Same validation applied to already-loaded text, for tests and tooling.
RunConfig parse_config_text(const std::string& text);

// The observable mini-grammar used by the `observable` key:
//   identity | power <a> | affine <slope> <intercept> | indicator <lo> <hi>
// pieces live on (0,1). Throws std::invalid_argument on bad syntax.
observables::Observable parse_observable(const std::string& text);

// The `profile` key: intermittent | analytic <c> <rho> | geometric <a>.
// "intermittent" resolves through the config's gamma.
quantmix::MixingProfile parse_profile(const std::string& text, double gamma);

// The closed-form arms of the `tail` key: power <c> <b> | indicator <m>.
// The "observable" form needs a map model and is resolved by the commands.
observables::TailFunction parse_tail_spec(const std::string& text);

// Fixed-order canonical rendering of every field; two configs with the same
// canonical text behave identically.
std::string canonical_text(const RunConfig& cfg);

// FNV-1a over the canonical text, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace couplab::config
