#include "couplab/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "couplab/coupling.hpp"
#include "couplab/csvio.hpp"
#include "couplab/diagnostics.hpp"
#include "couplab/dynamics.hpp"
#include "couplab/manifest.hpp"
#include "couplab/observables.hpp"
#include "couplab/quantmix.hpp"
#include "couplab/rng.hpp"
#include "json.hpp"

namespace couplab::cli {

namespace {

namespace fs = std::filesystem;
using config::RunConfig;
using manifest::RunManifest;

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out) / name).string();
}

void atomic_write_text(const std::string& path, const std::string& text) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp);
    out << text;
    if (!out) throw std::runtime_error("write failed on " + tmp);
  }
  fs::rename(tmp, path);
}

const char* verdict_name(observables::Verdict v) {
  switch (v) {
    case observables::Verdict::holds: return "holds";
    case observables::Verdict::fails: return "fails";
    default: return "marginal";
  }
}

dynamics::MapModel make_model(const RunConfig& cfg) {
  dynamics::MapModel m(cfg.gamma);
  m.set_density(dynamics::build_density(cfg.gamma, cfg.bins, cfg.tol));
  return m;
}

// Long-run variance by both estimators, plus the degenerate-rate decision:
// sigma is treated as zero only when both estimates sit within two standard
// errors of zero, in which case the n^{1/p} normalization applies.
struct SigmaEstimate {
  double series = 0.0, batch = 0.0;
  double se_series = 0.0, se_batch = 0.0;
  double agreement = 0.0;
  bool zero = false;
  double sigma = 0.0;
};

SigmaEstimate estimate_sigma(const dynamics::MapModel& m,
                             const observables::Observable& f, double center,
                             std::uint64_t seed) {
  SigmaEstimate s;
  const long reps_batch = 300;
  s.series = diagnostics::sigma2_series(m, f, center, 64, 1500,
                                        derive_key(seed, "cli-s2-series"),
                                        diagnostics::SeriesForm::chain,
                                        &s.se_series);
  s.batch = diagnostics::sigma2_batch(m, f, center, 4096, reps_batch,
                                      derive_key(seed, "cli-s2-batch"));
  s.se_batch = s.batch * std::sqrt(2.0 / (reps_batch - 1));
  double scale = std::max(s.series, s.batch);
  s.agreement = scale > 0.0 ? std::abs(s.series - s.batch) / scale : 0.0;
  s.zero = s.series <= 2.0 * s.se_series && s.batch <= 2.0 * s.se_batch;
  s.sigma = s.zero ? 0.0 : std::sqrt(s.batch);
  return s;
}

void record_sigma(RunManifest& m, const SigmaEstimate& s) {
  m.values["sigma2_series"] = s.series;
  m.values["sigma2_batch"] = s.batch;
  m.values["sigma2_agreement"] = s.agreement;
  m.values["sigma"] = s.sigma;
  m.verdicts["sigma_zero"] = s.zero ? "triggered" : "no";
}

void cmd_density(const RunConfig& cfg) {
  dynamics::DensityGrid grid =
      dynamics::build_density(cfg.gamma, cfg.bins, cfg.tol);
  csvio::CsvTable t;
  t.schema = "density.v1";
  t.columns = {"bin", "x_lo", "x_hi", "value"};
  double w = 1.0 / grid.bins;
  double mass = 0.0;
  for (int i = 0; i < grid.bins; ++i) {
    t.rows.push_back({static_cast<double>(i), i * w, (i + 1) * w,
                      grid.values[static_cast<std::size_t>(i)]});
    mass += grid.values[static_cast<std::size_t>(i)] * w;
  }
  csvio::write_csv(t, out_path(cfg, "density.csv"));

  RunManifest man = manifest::make_manifest("density", cfg);
  man.values["residual"] = grid.residual;
  man.values["iterations"] = static_cast<double>(grid.iterations);
  man.values["mass_error"] = std::abs(mass - 1.0);
  man.verdicts["normalized"] =
      std::abs(mass - 1.0) <= 1e-9 ? "holds" : "fails";
  man.artifacts = {"density.csv"};
  manifest::write_manifest(man, out_path(cfg, "density_manifest.json"));
}

void cmd_simulate(const RunConfig& cfg) {
  const long n = 1L << cfg.L_max;
  if (cfg.reps * n > 4000000)
    throw std::invalid_argument("simulate: reps * 2^L_max exceeds 4e6 rows");
  dynamics::MapModel m = make_model(cfg);
  std::uint64_t capped = 0;
  csvio::CsvTable t;
  t.schema = "trajectory.v1";
  t.columns = {"rep", "t", "y", "f"};
  for (long r = 0; r < cfg.reps; ++r) {
    RngStream rng(derive_key(cfg.seed, "sim", static_cast<std::uint64_t>(r)));
    dynamics::Trajectory traj = dynamics::simulate_chain(m, n, {}, rng);
    for (std::size_t i = 0; i < traj.values.size(); ++i) {
      double y = traj.values[i];
      t.rows.push_back({static_cast<double>(r), static_cast<double>(i), y,
                        observables::eval_observable(cfg.f, y, &capped)});
    }
  }
  csvio::write_csv(t, out_path(cfg, "trajectories.csv"));

  RunManifest man = manifest::make_manifest("simulate", cfg);
  man.capped_events = capped;
  man.values["n"] = static_cast<double>(n);
  man.artifacts = {"trajectories.csv"};
  manifest::write_manifest(man, out_path(cfg, "simulate_manifest.json"));
}

void cmd_moments(const RunConfig& cfg) {
  quantmix::MixingProfile prof = config::parse_profile(cfg.profile, cfg.gamma);
  observables::TailFunction tail;
  if (cfg.tail == "observable") {
    dynamics::MapModel m = make_model(cfg);
    RngStream rng(derive_key(cfg.seed, "tail"));
    tail = observables::tail_of_observable(cfg.f, m, 200000, 257, rng);
  } else {
    tail = config::parse_tail_spec(cfg.tail);
  }
  quantmix::QuantileFn q = quantmix::quantile_of_tail(tail, 257);

  quantmix::MomentResult mres = quantmix::moment_M(prof, q, cfg.p);
  quantmix::SupResult lres = quantmix::lambda_sup(prof, q, cfg.p);

  std::printf("M=%.6f\n", mres.value);
  std::printf("Lambda=%.6f\n", lres.value);

  RunManifest man = manifest::make_manifest("moments", cfg);
  man.values["M"] = mres.value;
  man.values["Lambda"] = lres.value;
  man.values["M_divergent"] = mres.divergent ? 1.0 : 0.0;
  man.values["M_converged"] = mres.converged ? 1.0 : 0.0;
  man.values["Lambda_finite"] = lres.finite ? 1.0 : 0.0;
  man.warnings = (mres.divergent ? 1 : 0) + (mres.converged ? 0 : 1) +
                 (mres.extrapolated ? 1 : 0) + (lres.extrapolated ? 1 : 0);
  if (cfg.p > 2.0) {
    // the admissibility conditions are stated for p strictly above 2
    man.verdicts["moment_condition"] = verdict_name(
        observables::check_moment_condition(tail, cfg.gamma, cfg.p));
    man.verdicts["lambda_condition"] = verdict_name(
        observables::check_lambda_condition(tail, cfg.gamma, cfg.p));
  } else {
    man.verdicts["moment_condition"] = "not-applicable";
    man.verdicts["lambda_condition"] = "not-applicable";
  }
  manifest::write_manifest(man, out_path(cfg, "moments_manifest.json"));
}

struct CoupleBatch {
  std::vector<coupling::DiscrepancySeries> series;
  csvio::CsvTable table;
  std::uint64_t capped = 0, degenerate = 0;
  long assembly_failures = 0;
  SigmaEstimate sig;
};

CoupleBatch run_couple_batch(const RunConfig& cfg) {
  if (!(cfg.p > 2.0))
    throw std::invalid_argument("coupling schedules require p > 2");
  dynamics::MapModel m = make_model(cfg);
  double center = observables::center_on_grid(cfg.f, m.density());

  CoupleBatch batch;
  batch.sig = estimate_sigma(m, cfg.f, center, cfg.seed);

  coupling::ChainSource src(m, cfg.f);
  coupling::CouplingRun run;
  run.gamma = cfg.gamma;
  run.p = cfg.p;
  run.variant = cfg.variant;
  run.epsilon = cfg.epsilon;
  run.sigma = batch.sig.sigma;
  run.n_total = 1L << cfg.L_max;
  run.M_cond = cfg.M_cond;

  batch.table.schema = "coupling-series.v1";
  batch.table.columns = {"rep", "n", "sup", "normalized"};
  for (long r = 0; r < cfg.reps; ++r) {
    run.seed = derive_key(cfg.seed, "run", static_cast<std::uint64_t>(r));
    coupling::CouplingResult res = coupling::build_coupling(run, src);
    batch.capped += res.capped_events;
    batch.degenerate += res.degenerate_blocks;
    if (!res.assembly_ok) ++batch.assembly_failures;
    for (std::size_t j = 0; j < res.series.n_grid.size(); ++j)
      batch.table.rows.push_back(
          {static_cast<double>(r), static_cast<double>(res.series.n_grid[j]),
           res.series.sup_disc[j], res.series.normalized[j]});
    batch.series.push_back(std::move(res.series));
  }
  return batch;
}

void cmd_couple(const RunConfig& cfg) {
  CoupleBatch batch = run_couple_batch(cfg);
  csvio::write_csv(batch.table, out_path(cfg, "couple_series.csv"));

  RunManifest man = manifest::make_manifest("couple", cfg);
  record_sigma(man, batch.sig);
  man.capped_events = batch.capped;
  man.degenerate_blocks = batch.degenerate;
  man.values["assembly_failures"] =
      static_cast<double>(batch.assembly_failures);
  man.verdicts["assembly"] = batch.assembly_failures == 0 ? "holds" : "fails";
  man.artifacts = {"couple_series.csv"};
  manifest::write_manifest(man, out_path(cfg, "couple_manifest.json"));
}

void cmd_rates(const RunConfig& cfg) {
  if (cfg.reps < 10)
    throw std::invalid_argument("rates: insufficient runs, need reps >= 10");
  CoupleBatch batch = run_couple_batch(cfg);
  coupling::DiscrepancySummary sum =
      coupling::discrepancy_stats(batch.series, cfg.p);

  csvio::CsvTable t;
  t.schema = "rates.v1";
  t.columns = {"n", "median", "lo_quartile", "hi_quartile"};
  for (std::size_t j = 0; j < sum.n_grid.size(); ++j)
    t.rows.push_back({static_cast<double>(sum.n_grid[j]), sum.med[j],
                      sum.lo_quartile[j], sum.hi_quartile[j]});
  csvio::write_csv(t, out_path(cfg, "rates.csv"));

  RunManifest man = manifest::make_manifest("rates", cfg);
  record_sigma(man, batch.sig);
  man.capped_events = batch.capped;
  man.degenerate_blocks = batch.degenerate;
  man.values["slope"] = sum.slope;
  man.values["rise"] = sum.rise;
  man.values["slope_budget"] = 1.0 / cfg.p + 0.08;
  man.verdicts["rate_consistent"] = sum.consistent ? "holds" : "fails";
  man.verdicts["assembly"] = batch.assembly_failures == 0 ? "holds" : "fails";
  man.artifacts = {"rates.csv"};
  manifest::write_manifest(man, out_path(cfg, "rates_manifest.json"));
}

void cmd_checks(const RunConfig& cfg) {
  dynamics::MapModel m = make_model(cfg);
  double center = observables::center_on_grid(cfg.f, m.density());
  SigmaEstimate sig = estimate_sigma(m, cfg.f, center, cfg.seed);

  RunManifest man = manifest::make_manifest("checks", cfg);
  record_sigma(man, sig);
  man.verdicts["sigma2_agreement"] = sig.agreement <= 0.10 ? "holds" : "fails";

  if (sig.zero) {
    // no variance scale: the transport and tail checks are vacuous
    manifest::write_manifest(man, out_path(cfg, "checks_manifest.json"));
    return;
  }

  observables::TailFunction tail;
  if (cfg.tail == "observable") {
    RngStream rng(derive_key(cfg.seed, "tail"));
    tail = observables::tail_of_observable(cfg.f, m, 200000, 257, rng);
  } else {
    tail = config::parse_tail_spec(cfg.tail);
  }
  quantmix::QuantileFn q = quantmix::quantile_of_tail(tail, 257);
  quantmix::MixingProfile prof = quantmix::intermittent_profile(cfg.gamma);
  coupling::ChainSource src(m, cfg.f);
  const double s2 = sig.batch;

  std::vector<long> n_grid;
  for (int l = 6; l <= std::min(std::max(cfg.L_max, 6), 12); ++l)
    n_grid.push_back(1L << l);
  diagnostics::W2Table w2 = diagnostics::w2_bound_check(
      src, s2, &prof, &q, n_grid, cfg.M_cond, cfg.reps,
      derive_key(cfg.seed, "w2"));
  csvio::CsvTable tw;
  tw.schema = "w2-check.v1";
  tw.columns = {"n", "w2_avg", "denom", "ratio"};
  for (const auto& r : w2.rows)
    tw.rows.push_back({static_cast<double>(r.n), r.w2_avg, r.denom, r.ratio});
  csvio::write_csv(tw, out_path(cfg, "w2.csv"));
  man.values["w2_max_over_min"] = w2.max_over_min;
  man.values["w2_tau"] = w2.tau;
  man.verdicts["w2_bounded"] = w2.bounded ? "holds" : "fails";

  const long n_tail = 1L << std::min(cfg.L_max, 10);
  const double sd = std::sqrt(s2 * static_cast<double>(n_tail));
  std::vector<double> lambda_grid;
  for (double r : {0.1, 0.15, 0.2, 0.3, 0.45, 0.65}) lambda_grid.push_back(r * sd);
  diagnostics::TailTable tt = diagnostics::maximal_tail(
      src, s2, &prof, &q, n_tail, lambda_grid, std::max(10000L, cfg.reps),
      derive_key(cfg.seed, "tail-check"));
  csvio::CsvTable tb;
  tb.schema = "maximal-tail.v1";
  tb.columns = {"lambda", "p_hat", "gauss", "poly"};
  for (const auto& r : tt.rows)
    tb.rows.push_back({r.lambda, r.p_hat, r.gauss, r.poly});
  csvio::write_csv(tb, out_path(cfg, "tail.csv"));
  man.values["tail_c_fit"] = tt.c_fit;
  man.verdicts["tail_dominated"] = tt.shape_consistent ? "holds" : "fails";

  quantmix::MixingProfile ah = quantmix::estimate_alpha(
      m, 32, 400000, 8, 9, derive_key(cfg.seed, "alpha"));
  std::vector<long> lags;
  for (long i = 0; i <= 32; ++i) lags.push_back(i);
  diagnostics::CovTable ct = diagnostics::covariance_bound_check(
      m, cfg.f, center, ah, q, lags, 16, std::max(10000L, cfg.reps),
      derive_key(cfg.seed, "cov"));
  csvio::CsvTable tc;
  tc.schema = "covariance-bound.v1";
  tc.columns = {"i", "lhs", "rhs", "band", "holds"};
  bool all_hold = true;
  for (const auto& r : ct.rows) {
    tc.rows.push_back({static_cast<double>(r.i), r.lhs, r.rhs, r.band,
                       r.holds ? 1.0 : 0.0});
    all_hold = all_hold && r.holds;
  }
  csvio::write_csv(tc, out_path(cfg, "cov.csv"));
  man.values["cov_margin_tau"] = ct.margin_tau;
  man.verdicts["cov_bound"] = all_hold ? "holds" : "fails";

  man.artifacts = {"cov.csv", "tail.csv", "w2.csv"};
  manifest::write_manifest(man, out_path(cfg, "checks_manifest.json"));
}

void cmd_report(const RunConfig& cfg) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(cfg.out)) {
    std::string name = entry.path().filename().string();
    if (name.size() > 14 &&
        name.substr(name.size() - 14) == "_manifest.json" &&
        name != "report_manifest.json")
      names.push_back(name);
  }
  std::sort(names.begin(), names.end());
  if (names.empty())
    throw std::runtime_error("report: no manifests in " + cfg.out);

  nlohmann::json agg;
  std::string csv = "# couplab-csv v1 report.v1\ncommand,key,value\n";
  char buf[64];
  for (const auto& name : names) {
    std::ifstream in(out_path(cfg, name));
    nlohmann::json j = nlohmann::json::parse(in);
    std::string command = j.value("command", name);
    agg[command] = j;
    if (j.contains("values"))
      for (const auto& [key, val] : j["values"].items()) {
        std::snprintf(buf, sizeof buf, "%.17g", val.get<double>());
        csv += command + "," + key + "," + buf + "\n";
      }
  }
  atomic_write_text(out_path(cfg, "report.json"), agg.dump(2) + "\n");
  atomic_write_text(out_path(cfg, "report.csv"), csv);

  RunManifest man = manifest::make_manifest("report", cfg);
  man.values["manifests_aggregated"] = static_cast<double>(names.size());
  man.artifacts = {"report.csv", "report.json"};
  manifest::write_manifest(man, out_path(cfg, "report_manifest.json"));
}

void write_error(const RunConfig& cfg, const std::string& command,
                 const std::string& message) {
  nlohmann::json j;
  j["command"] = command;
  j["error"] = message;
  std::string text = j.dump(2) + "\n";
  std::fprintf(stderr, "%s", text.c_str());
  try {
    fs::create_directories(cfg.out);
    atomic_write_text((fs::path(cfg.out) / "error.json").string(), text);
  } catch (...) {
    // the JSON already went to stderr
  }
}

}  // namespace

int run_command(const std::string& command, const RunConfig& cfg) {
  try {
    fs::create_directories(cfg.out);
    fs::remove(fs::path(cfg.out) / "error.json");
    if (command == "density")
      cmd_density(cfg);
    else if (command == "simulate")
      cmd_simulate(cfg);
    else if (command == "moments")
      cmd_moments(cfg);
    else if (command == "couple")
      cmd_couple(cfg);
    else if (command == "rates")
      cmd_rates(cfg);
    else if (command == "checks")
      cmd_checks(cfg);
    else if (command == "report")
      cmd_report(cfg);
    else
      throw std::invalid_argument("unknown command: " + command);
    return 0;
  } catch (const config::ConfigError& e) {
    write_error(cfg, command, e.what());
    return 2;
  } catch (const std::exception& e) {
    write_error(cfg, command, e.what());
    return 1;
  }
}

}  // namespace couplab::cli
