#include "couplab/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "couplab/errors.hpp"
#include "couplab/gaussian.hpp"
#include "couplab/parallel.hpp"

namespace couplab::coupling {

namespace {

constexpr double kAssemblySlack = 1e-9;

// Conditional block-sum laws given an exact anchor state are atomic (the
// map is deterministic, so a block is one of 2^blocklen preimage branches).
// Sample atoms reconstructed by numerical branch inversion land within
// ~1e-12 of the path's own values, not exactly on them; CDF queries align
// anything inside this relative window so such atoms still register.
constexpr double kAtomSnap = 1e-9;

double sorted_quantile(const std::vector<double>& v, double q) {
  double h = q * static_cast<double>(v.size() - 1);
  std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= v.size()) return v.back();
  double frac = h - static_cast<double>(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

}  // namespace

int block_exponent(double p, Variant variant, double epsilon, int L) {
  if (!(p >= 2.0 && p <= 3.0))
    throw std::invalid_argument("block_exponent: p must lie in [2, 3]");
  if (L < 0) throw std::invalid_argument("block_exponent: L must be >= 0");
  if (variant == Variant::rate_b && !(epsilon > 0.0))
    throw std::invalid_argument("block_exponent: rate_b needs epsilon > 0");
  if (L == 0) return 0;
  double raw;
  if (variant == Variant::rate_a) {
    raw = 2.0 * L / p - (2.0 / p) * std::log2(static_cast<double>(L));
  } else {
    double guarded = std::max(1.0, std::log(static_cast<double>(L)));
    raw = 2.0 * L / p + (2.0 * (1.0 + epsilon) / p) * std::log2(guarded);
  }
  int m = static_cast<int>(std::floor(raw));
  return std::clamp(m, 0, L);
}

BlockSchedule make_schedule(double p, Variant variant, double epsilon,
                            int L_max) {
  if (!(p > 2.0 && p <= 3.0))
    throw std::invalid_argument("make_schedule: p must lie in (2, 3]");
  if (L_max < 0) throw std::invalid_argument("make_schedule: L_max < 0");
  BlockSchedule s;
  s.p = p;
  s.variant = variant;
  s.epsilon = epsilon;
  s.L_max = L_max;
  s.m.resize(L_max + 1);
  for (int L = 0; L <= L_max; ++L)
    s.m[L] = block_exponent(p, variant, epsilon, L);
  return s;
}

std::vector<BlockRange> block_layout(const BlockSchedule& s, int L) {
  if (L < 0 || L > s.L_max)
    throw std::invalid_argument("block_layout: L outside the schedule");
  int m = s.m[L];
  if (m < 0 || m > L)
    throw std::invalid_argument("block_layout: schedule violates 0 <= m <= L");
  long blocklen = 1L << m;
  long nblocks = 1L << (L - m);
  long base = 1L << L;
  std::vector<BlockRange> out(nblocks);
  for (long k = 0; k < nblocks; ++k) {
    out[k].first = base + k * blocklen + 1;
    out[k].last = base + (k + 1) * blocklen;
  }
  return out;
}

double rate_normalizer(double p, Variant variant, double epsilon,
                       bool sigma_zero, double n) {
  if (!(n >= 1.0)) throw std::invalid_argument("rate_normalizer: n < 1");
  double lead = std::pow(n, 1.0 / p);
  if (sigma_zero) return lead;
  double l = std::max(std::log(n), 1.0);
  if (variant == Variant::rate_a) return lead * std::pow(l, 0.5 - 1.0 / p);
  double ll = std::max(std::log(l), 1.0);
  return lead * std::sqrt(l) * std::pow(ll, (1.0 + epsilon) / p);
}

EmpiricalCdf::EmpiricalCdf(std::vector<double> sample)
    : xs_(std::move(sample)) {
  if (xs_.empty())
    throw std::invalid_argument("EmpiricalCdf: empty sample");
  std::sort(xs_.begin(), xs_.end());
}

double EmpiricalCdf::value(double x) const {
  double tol = kAtomSnap * (1.0 + std::abs(x));
  auto it = std::upper_bound(xs_.begin(), xs_.end(), x + tol);
  return static_cast<double>(it - xs_.begin()) /
         static_cast<double>(xs_.size());
}

double EmpiricalCdf::left_value(double x) const {
  double tol = kAtomSnap * (1.0 + std::abs(x));
  auto it = std::lower_bound(xs_.begin(), xs_.end(), x - tol);
  return static_cast<double>(it - xs_.begin()) /
         static_cast<double>(xs_.size());
}

long EmpiricalCdf::resolution() const {
  return static_cast<long>(xs_.size());
}

NormalCdf::NormalCdf(double s, long resolution) : s_(s), res_(resolution) {
  if (!(s > 0.0)) throw std::invalid_argument("NormalCdf: s must be positive");
  if (res_ < 1) throw std::invalid_argument("NormalCdf: resolution < 1");
}

double NormalCdf::value(double x) const {
  return gaussian::std_normal_cdf(x / s_);
}

double NormalCdf::left_value(double x) const { return value(x); }

EmpiricalCdf conditional_cdf(const dynamics::MapModel& m,
                             const observables::Observable& f, double center,
                             double y0, long blocklen, long M_cond,
                             RngStream& rng) {
  if (!m.has_density())
    throw std::invalid_argument("conditional_cdf: density not built");
  if (blocklen < 1)
    throw std::invalid_argument("conditional_cdf: blocklen must be >= 1");
  if (M_cond < 1000)
    throw std::invalid_argument("conditional_cdf: M_cond must be >= 1000");
  std::vector<std::uint64_t> keys(M_cond);
  for (long r = 0; r < M_cond; ++r) keys[r] = rng.next_u64();
  std::vector<double> sums(M_cond);
  parallel_for(static_cast<std::size_t>(M_cond), worker_count(),
               [&](std::size_t r) {
                 RngStream rs(keys[r]);
                 double y = y0;
                 double s = 0.0;
                 for (long t = 0; t < blocklen; ++t) {
                   y = m.step_chain(y, rs);
                   s += observables::eval_observable(f, y) - center;
                 }
                 sums[r] = s;
               });
  return EmpiricalCdf(std::move(sums));
}

double conditional_quantile_transform(const CondCdf& cdf, double block_sigma,
                                      double U, double delta,
                                      std::uint64_t* capped) {
  if (!(block_sigma > 0.0))
    throw std::invalid_argument(
        "conditional_quantile_transform: block_sigma must be positive");
  if (!(delta >= 0.0 && delta <= 1.0))
    throw std::invalid_argument(
        "conditional_quantile_transform: delta must lie in [0, 1]");
  double lo = cdf.left_value(U);
  double hi = cdf.value(U);
  if (lo == hi && (lo <= 0.0 || lo >= 1.0))
    throw DegenerateError(
        "conditional_quantile_transform: block sum outside the estimated "
        "support");
  double m = static_cast<double>(cdf.resolution());
  double floor_arg = 0.5 / m;
  double cap_arg = 1.0 - 0.5 / m;
  if (floor_arg > cap_arg)
    throw DegenerateError("conditional_quantile_transform: clamp window empty");
  double a = lo + delta * (hi - lo);
  if (a < floor_arg) {
    a = floor_arg;
    if (capped) ++*capped;
  } else if (a > cap_arg) {
    a = cap_arg;
    if (capped) ++*capped;
  }
  return block_sigma * gaussian::std_normal_quantile(a);
}

std::vector<double> skorohod_split(double V, int m, double sigma,
                                   RngStream& rng) {
  if (m < 0) throw std::invalid_argument("skorohod_split: m must be >= 0");
  if (!(sigma > 0.0))
    throw std::invalid_argument("skorohod_split: sigma must be positive");
  std::vector<double> vals{V};
  for (int j = m; j >= 1; --j) {
    double sd = sigma * std::pow(2.0, 0.5 * (j - 2));
    std::vector<double> next;
    next.reserve(vals.size() * 2);
    for (double s : vals) {
      double left = 0.5 * s + sd * gaussian::std_normal_quantile(rng.next_unit());
      next.push_back(left);
      next.push_back(s - left);
    }
    vals = std::move(next);
  }
  return vals;
}

ChainSource::ChainSource(const dynamics::MapModel& model,
                         const observables::Observable& f)
    : model_(model), f_(f) {
  if (!model.has_density())
    throw std::invalid_argument("ChainSource: density not built");
  center_ = observables::center_on_grid(f, model.density());
}

void ChainSource::path(long n, std::uint64_t seed, std::vector<double>& x,
                       std::vector<double>& states,
                       std::uint64_t* capped) const {
  RngStream rng(derive_key(seed, "path"));
  dynamics::Trajectory traj = dynamics::simulate_chain(model_, n, {}, rng);
  states = std::move(traj.values);
  x.resize(states.size());
  for (std::size_t i = 0; i < states.size(); ++i)
    x[i] = observables::eval_observable(f_, states[i], capped) - center_;
}

EmpiricalCdf ChainSource::block_cdf(double state, long blocklen, long M_cond,
                                    std::uint64_t key) const {
  RngStream rng(key);
  return conditional_cdf(model_, f_, center_, state, blocklen, M_cond, rng);
}

void IidGaussianSource::path(long n, std::uint64_t seed,
                             std::vector<double>& x,
                             std::vector<double>& states,
                             std::uint64_t* capped) const {
  (void)capped;
  RngStream rng(derive_key(seed, "path"));
  x.resize(n);
  for (long i = 0; i < n; ++i)
    x[i] = gaussian::std_normal_quantile(rng.next_unit());
  states.assign(n, 0.0);
}

EmpiricalCdf IidGaussianSource::block_cdf(double state, long blocklen,
                                          long M_cond,
                                          std::uint64_t key) const {
  (void)state;
  RngStream rng(key);
  double scale = std::sqrt(static_cast<double>(blocklen));
  std::vector<double> sums(M_cond);
  for (long r = 0; r < M_cond; ++r)
    sums[r] = scale * gaussian::std_normal_quantile(rng.next_unit());
  return EmpiricalCdf(std::move(sums));
}

CouplingResult build_coupling(const CouplingRun& run,
                              const PathSource& source) {
  if (run.n_total < 1)
    throw std::invalid_argument("build_coupling: n_total must be >= 1");
  if (run.M_cond < 1000)
    throw std::invalid_argument("build_coupling: M_cond must be >= 1000");
  if (run.sigma < 0.0)
    throw std::invalid_argument("build_coupling: sigma must be >= 0");
  int N = 0;
  while ((1L << (N + 1)) < run.n_total) ++N;
  long n_path = 1L << (N + 1);
  BlockSchedule sched = make_schedule(run.p, run.variant, run.epsilon, N);

  CouplingResult res;
  std::vector<double> states;
  source.path(n_path, run.seed, res.x, states, &res.capped_events);
  res.z.assign(n_path, 0.0);

  if (run.sigma > 0.0) {
    double d1 = RngStream(derive_key(run.seed, "delta", 0, 0)).next_unit();
    res.z[0] = run.sigma * gaussian::std_normal_quantile(d1);
    for (int L = 0; L <= N; ++L) {
      int m = sched.m[L];
      long blocklen = 1L << m;
      long nblocks = 1L << (L - m);
      double block_sigma = run.sigma * std::pow(2.0, 0.5 * m);
      for (long k = 1; k <= nblocks; ++k) {
        long a = (1L << L) + (k - 1) * blocklen;  // index before the block
        double anchor = states[a - 1];
        double u = 0.0;
        for (long t = 0; t < blocklen; ++t) u += res.x[a + t];
        EmpiricalCdf cdf = source.block_cdf(
            anchor, blocklen, run.M_cond, derive_key(run.seed, "cond", L, k));
        double delta =
            RngStream(derive_key(run.seed, "delta", L, k)).next_unit();
        double v = 0.0;
        try {
          v = conditional_quantile_transform(cdf, block_sigma, u, delta,
                                             &res.capped_events);
        } catch (const DegenerateError&) {
          ++res.degenerate_blocks;
          v = 0.0;
        }
        RngStream split_rng(derive_key(run.seed, "split", L, k));
        std::vector<double> comps = skorohod_split(v, m, run.sigma, split_rng);
        for (long t = 0; t < blocklen; ++t) res.z[a + t] = comps[t];
        res.blocks.push_back({L, k, anchor, u, v});
      }
    }
  }

  // diff[j] = S_j - T_j; diff[0] = 0.
  std::vector<double> diff(n_path + 1, 0.0);
  for (long j = 1; j <= n_path; ++j)
    diff[j] = diff[j - 1] + res.x[j - 1] - res.z[j - 1];

  res.series.level_sup.assign(N + 1, 0.0);
  for (int L = 0; L <= N; ++L) {
    double base = diff[1L << L];
    double d = 0.0;
    for (long l = 0; l <= (1L << L); ++l)
      d = std::max(d, std::abs(diff[(1L << L) + l] - base));
    res.series.level_sup[L] = d;
  }

  bool sigma_zero = run.sigma == 0.0;
  double running = 0.0;
  long next_grid = 1;
  for (long j = 1; j <= n_path; ++j) {
    running = std::max(running, std::abs(diff[j]));
    if (j == next_grid) {
      res.series.n_grid.push_back(j);
      res.series.sup_disc.push_back(running);
      res.series.normalized.push_back(
          running / rate_normalizer(run.p, run.variant, run.epsilon,
                                    sigma_zero, static_cast<double>(j)));
      next_grid *= 2;
    }
  }

  res.z1_gap = std::abs(res.x[0] - res.z[0]);
  res.sup_total = running;
  double rhs = res.z1_gap;
  for (double d : res.series.level_sup) rhs += d;
  res.assembly_ok = res.sup_total <= rhs + kAssemblySlack;
  return res;
}

DiscrepancySummary discrepancy_stats(
    const std::vector<DiscrepancySeries>& runs, double p) {
  if (runs.size() < 10)
    throw std::invalid_argument("discrepancy_stats: needs at least 10 runs");
  const std::vector<long>& grid = runs.front().n_grid;
  for (const auto& r : runs)
    if (r.n_grid != grid)
      throw std::invalid_argument("discrepancy_stats: runs on different grids");

  DiscrepancySummary out;
  std::vector<double> med_raw;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (grid[j] < 16) continue;
    std::vector<double> norm(runs.size()), raw(runs.size());
    for (std::size_t r = 0; r < runs.size(); ++r) {
      norm[r] = runs[r].normalized[j];
      raw[r] = runs[r].sup_disc[j];
    }
    std::sort(norm.begin(), norm.end());
    std::sort(raw.begin(), raw.end());
    out.n_grid.push_back(grid[j]);
    out.med.push_back(sorted_quantile(norm, 0.5));
    out.lo_quartile.push_back(sorted_quantile(norm, 0.25));
    out.hi_quartile.push_back(sorted_quantile(norm, 0.75));
    med_raw.push_back(sorted_quantile(raw, 0.5));
  }
  if (out.n_grid.size() < 2)
    throw std::invalid_argument(
        "discrepancy_stats: grid has fewer than two points at n >= 16");

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double n = static_cast<double>(out.n_grid.size());
  for (std::size_t j = 0; j < out.n_grid.size(); ++j) {
    double lx = std::log(static_cast<double>(out.n_grid[j]));
    double ly = std::log(med_raw[j]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  out.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  out.rise = out.med.back() / out.med.front();
  out.consistent = out.slope <= 1.0 / p + 0.08 && out.rise <= 1.25;
  return out;
}

double level_discrepancy(const dynamics::MapModel& model,
                         const observables::Observable& f, double center,
                         const BlockSchedule& s, int L, double sigma,
                         long M_cond, std::uint64_t seed, bool map_side,
                         double* anchor_out, double* v_out) {
  if (L < 0 || L > s.L_max)
    throw std::invalid_argument("level_discrepancy: L outside the schedule");
  if (!(sigma > 0.0))
    throw std::invalid_argument("level_discrepancy: sigma must be positive");
  int m = s.m[L];
  long blocklen = 1L << m;
  long nblocks = 1L << (L - m);
  long seg = 1L << L;
  double block_sigma = sigma * std::pow(2.0, 0.5 * m);

  RngStream path_rng(derive_key(seed, map_side ? "lvl-orbit" : "lvl-chain"));
  dynamics::Trajectory traj =
      map_side ? dynamics::simulate_orbit(model, seg + 1, {}, path_rng)
               : dynamics::simulate_chain(model, seg + 1, {}, path_rng);
  const std::vector<double>& st = traj.values;

  // Chain side: st[0] anchors the first block and st[t+1] generates x[t].
  // Map side: st[t] generates x[t] and st[k 2^m] anchors block k from one
  // past the block in orbit time.
  std::vector<double> x(seg), z(seg, 0.0);
  for (long t = 0; t < seg; ++t) {
    double state = map_side ? st[t] : st[t + 1];
    x[t] = observables::eval_observable(f, state) - center;
  }
  for (long k = 1; k <= nblocks; ++k) {
    long t0 = (k - 1) * blocklen;
    double anchor = map_side ? st[k * blocklen] : st[t0];
    double u = 0.0;
    for (long t = t0; t < t0 + blocklen; ++t) u += x[t];
    RngStream cond_rng(derive_key(seed, "lvl-cond", L, k));
    EmpiricalCdf cdf =
        conditional_cdf(model, f, center, anchor, blocklen, M_cond, cond_rng);
    double delta = RngStream(derive_key(seed, "lvl-delta", L, k)).next_unit();
    double v = 0.0;
    try {
      v = conditional_quantile_transform(cdf, block_sigma, u, delta);
    } catch (const DegenerateError&) {
      v = 0.0;
    }
    RngStream split_rng(derive_key(seed, "lvl-split", L, k));
    std::vector<double> comps = skorohod_split(v, m, sigma, split_rng);
    for (long t = 0; t < blocklen; ++t) z[t0 + t] = comps[t];
    if (k == 1) {
      if (anchor_out) *anchor_out = anchor;
      if (v_out) *v_out = v;
    }
  }

  // Chain side sups run over prefixes of the segment, map side over orbit
  // suffixes; both start from the empty sum 0.
  double d = 0.0, acc = 0.0;
  if (map_side) {
    for (long t = seg - 1; t >= 0; --t) {
      acc += x[t] - z[t];
      d = std::max(d, std::abs(acc));
    }
  } else {
    for (long t = 0; t < seg; ++t) {
      acc += x[t] - z[t];
      d = std::max(d, std::abs(acc));
    }
  }
  return d;
}

}  // namespace couplab::coupling
