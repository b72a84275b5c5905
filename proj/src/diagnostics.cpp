#include "couplab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "couplab/gaussian.hpp"
#include "couplab/parallel.hpp"

namespace couplab::diagnostics {

namespace {

std::vector<double> stationary_path(const dynamics::MapModel& m,
                                    const observables::Observable& f,
                                    double center, long len, SeriesForm form,
                                    RngStream& rng) {
  std::vector<double> x(static_cast<std::size_t>(len));
  if (form == SeriesForm::shuffled) {
    for (double& v : x)
      v = observables::eval_observable(f, m.sample_invariant(rng)) - center;
    return x;
  }
  dynamics::Trajectory t = form == SeriesForm::orbit
                               ? dynamics::simulate_orbit(m, len, {}, rng)
                               : dynamics::simulate_chain(m, len, {}, rng);
  for (long i = 0; i < len; ++i)
    x[static_cast<std::size_t>(i)] =
        observables::eval_observable(f, t.values[static_cast<std::size_t>(i)]) -
        center;
  return x;
}

double sample_variance(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

double sigma2_series(const dynamics::MapModel& m,
                     const observables::Observable& f, double center, int K,
                     long reps, std::uint64_t seed, SeriesForm form,
                     double* se_out) {
  if (K < 1) throw std::invalid_argument("sigma2_series: K < 1");
  if (reps < 2) throw std::invalid_argument("sigma2_series: reps < 2");
  const long len = 2L * K;

  std::vector<double> est(static_cast<std::size_t>(reps));
  std::vector<double> last(static_cast<std::size_t>(reps));
  parallel_for(static_cast<std::size_t>(reps), worker_count(), [&](std::size_t r) {
    RngStream rng(derive_key(seed, "s2-path", static_cast<std::uint64_t>(r)));
    std::vector<double> x = stationary_path(m, f, center, len, form, rng);
    double var0 = 0.0;
    for (double v : x) var0 += v * v;
    var0 /= static_cast<double>(len);
    double s = var0, ck = 0.0;
    for (int k = 1; k <= K; ++k) {
      double c = 0.0;
      for (long t = 0; t + k < len; ++t)
        c += x[static_cast<std::size_t>(t)] * x[static_cast<std::size_t>(t + k)];
      c /= static_cast<double>(len - k);
      s += 2.0 * c;
      if (k == K) ck = c;
    }
    est[r] = s;
    last[r] = ck;
  });

  double total = 0.0, tail_term = 0.0;
  for (std::size_t r = 0; r < est.size(); ++r) {
    total += est[r];
    tail_term += last[r];
  }
  total /= static_cast<double>(reps);
  tail_term = 2.0 * tail_term / static_cast<double>(reps);
  if (std::abs(tail_term) > 0.1 * std::abs(total))
    std::fprintf(stderr,
                 "sigma2_series: lag-%d term %.3e is over 10%% of the sum "
                 "%.3e; truncation too short\n",
                 K, tail_term, total);
  if (se_out)
    *se_out = std::sqrt(sample_variance(est) / static_cast<double>(reps));
  return total;
}

double sigma2_batch(const dynamics::MapModel& m,
                    const observables::Observable& f, double center, long n,
                    long reps, std::uint64_t seed) {
  if (n < 1024) throw std::invalid_argument("sigma2_batch: n < 2^10");
  if (reps < 100) throw std::invalid_argument("sigma2_batch: reps < 100");
  std::vector<double> sums(static_cast<std::size_t>(reps));
  parallel_for(static_cast<std::size_t>(reps), worker_count(), [&](std::size_t r) {
    RngStream rng(derive_key(seed, "s2b-path", static_cast<std::uint64_t>(r)));
    dynamics::Trajectory t = dynamics::simulate_chain(m, n, {}, rng);
    double s = 0.0;
    for (double y : t.values) s += observables::eval_observable(f, y) - center;
    sums[r] = s / std::sqrt(static_cast<double>(n));
  });
  return sample_variance(sums);
}

double sigma2_batch(const coupling::PathSource& src, long n, long reps,
                    std::uint64_t seed) {
  if (n < 1024) throw std::invalid_argument("sigma2_batch: n < 2^10");
  if (reps < 100) throw std::invalid_argument("sigma2_batch: reps < 100");
  std::vector<double> sums(static_cast<std::size_t>(reps));
  parallel_for(static_cast<std::size_t>(reps), worker_count(), [&](std::size_t r) {
    std::vector<double> x, states;
    src.path(n, derive_key(seed, "s2b-src", static_cast<std::uint64_t>(r)), x,
             states, nullptr);
    double s = 0.0;
    for (double v : x) s += v;
    sums[r] = s / std::sqrt(static_cast<double>(n));
  });
  return sample_variance(sums);
}

VarianceReport variance_report(const dynamics::MapModel& m,
                               const observables::Observable& f, double center,
                               int K, long reps_series, long n_batch,
                               long reps_batch, std::uint64_t seed) {
  VarianceReport rep;
  rep.K_trunc = K;
  rep.sigma2_series =
      sigma2_series(m, f, center, K, reps_series, derive_key(seed, "vr-s"));
  rep.sigma2_batch =
      sigma2_batch(m, f, center, n_batch, reps_batch, derive_key(seed, "vr-b"));
  double scale = std::max(rep.sigma2_series, rep.sigma2_batch);
  rep.agreement = scale > 0.0
                      ? std::abs(rep.sigma2_series - rep.sigma2_batch) / scale
                      : 0.0;
  return rep;
}

std::vector<double> scaled_sums(const dynamics::MapModel& m,
                                const observables::Observable& f, double center,
                                double sigma, long n, long reps,
                                std::uint64_t seed) {
  if (!(sigma > 0.0)) throw std::invalid_argument("scaled_sums: sigma <= 0");
  if (n < 1 || reps < 1)
    throw std::invalid_argument("scaled_sums: empty request");
  std::vector<double> out(static_cast<std::size_t>(reps));
  const double norm = sigma * std::sqrt(static_cast<double>(n));
  parallel_for(static_cast<std::size_t>(reps), worker_count(), [&](std::size_t r) {
    RngStream rng(derive_key(seed, "clt-path", static_cast<std::uint64_t>(r)));
    dynamics::Trajectory t = dynamics::simulate_chain(m, n, {}, rng);
    double s = 0.0;
    for (double y : t.values) s += observables::eval_observable(f, y) - center;
    out[r] = s / norm;
  });
  return out;
}

W2Table w2_bound_check(const coupling::PathSource& src, double sigma2,
                       const quantmix::MixingProfile* prof,
                       const quantmix::QuantileFn* q,
                       const std::vector<long>& n_grid, long M_cond, long reps,
                       std::uint64_t seed) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("w2_bound_check: sigma2 <= 0");
  if (n_grid.empty()) throw std::invalid_argument("w2_bound_check: empty grid");
  if (reps < 1) throw std::invalid_argument("w2_bound_check: reps < 1");
  if ((prof == nullptr) != (q == nullptr))
    throw std::invalid_argument("w2_bound_check: profile and quantile go together");

  // Plug-in W2^2 against an M-point empirical law carries a positive
  // finite-sample bias that grows with the block variance and would read as
  // spurious growth of the ratio. kappa = E W2^2(M-sample from N(0,1), N(0,1))
  // is measured once and kappa * (sample variance) is subtracted per draw.
  double kappa = 0.0;
  {
    const int batches = 2000;
    std::vector<double> z(static_cast<std::size_t>(M_cond));
    for (int b = 0; b < batches; ++b) {
      RngStream rng(derive_key(seed, "w2-floor", static_cast<std::uint64_t>(b)));
      for (double& v : z) v = gaussian::std_normal_quantile(rng.next_unit());
      std::sort(z.begin(), z.end());
      double w2 = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        double gq = gaussian::std_normal_quantile(
            (static_cast<double>(i) + 0.5) / static_cast<double>(M_cond));
        w2 += (z[i] - gq) * (z[i] - gq);
      }
      kappa += w2 / static_cast<double>(M_cond);
    }
    kappa /= batches;
  }

  W2Table table;
  for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
    const long n = n_grid[gi];
    if (n < 1) throw std::invalid_argument("w2_bound_check: n < 1");
    const double sd_n = std::sqrt(static_cast<double>(n) * sigma2);
    double acc = 0.0;
    for (long r = 0; r < reps; ++r) {
      std::vector<double> x, states;
      src.path(1, derive_key(seed, "w2-start", gi, static_cast<std::uint64_t>(r)),
               x, states, nullptr);
      coupling::EmpiricalCdf cdf = src.block_cdf(
          states[0], n, M_cond,
          derive_key(seed, "w2-cdf", gi, static_cast<std::uint64_t>(r)));
      const std::vector<double>& pts = cdf.points();
      const double M = static_cast<double>(pts.size());
      double w2 = 0.0, mean = 0.0, msq = 0.0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        double gq = sd_n * gaussian::std_normal_quantile(
                               (static_cast<double>(i) + 0.5) / M);
        w2 += (pts[i] - gq) * (pts[i] - gq);
        mean += pts[i];
        msq += pts[i] * pts[i];
      }
      mean /= M;
      acc += w2 / M - kappa * (msq / M - mean * mean);
    }
    W2Row row;
    row.n = n;
    row.w2_avg = acc / static_cast<double>(reps);
    double root_n = std::sqrt(static_cast<double>(n));
    row.denom = prof ? root_n * quantmix::moment_M3_truncated(*prof, *q, root_n).value
                     : root_n;
    row.ratio = row.w2_avg / row.denom;
    table.rows.push_back(row);
  }

  double lo = table.rows[0].ratio, hi = table.rows[0].ratio;
  std::vector<double> ns, ratios;
  for (const auto& r : table.rows) {
    lo = std::min(lo, r.ratio);
    hi = std::max(hi, r.ratio);
    ns.push_back(static_cast<double>(r.n));
    ratios.push_back(r.ratio);
  }
  table.max_over_min = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  table.tau = ns.size() >= 2 ? kendall_tau(ns, ratios) : 0.0;
  table.bounded = table.max_over_min <= 10.0;
  return table;
}

TailTable maximal_tail(const coupling::PathSource& src, double sigma2,
                       const quantmix::MixingProfile* prof,
                       const quantmix::QuantileFn* q, long n,
                       const std::vector<double>& lambda_grid, long reps,
                       std::uint64_t seed) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("maximal_tail: sigma2 <= 0");
  if (n < 1) throw std::invalid_argument("maximal_tail: n < 1");
  if (reps < 10000) throw std::invalid_argument("maximal_tail: reps < 1e4");
  if (lambda_grid.empty()) throw std::invalid_argument("maximal_tail: empty grid");
  for (double l : lambda_grid)
    if (!(l > 0.0)) throw std::invalid_argument("maximal_tail: lambda <= 0");
  if ((prof == nullptr) != (q == nullptr))
    throw std::invalid_argument("maximal_tail: profile and quantile go together");

  std::vector<double> maxes(static_cast<std::size_t>(reps));
  parallel_for(static_cast<std::size_t>(reps), worker_count(), [&](std::size_t r) {
    std::vector<double> x, states;
    src.path(n, derive_key(seed, "mt-path", static_cast<std::uint64_t>(r)), x,
             states, nullptr);
    double s = 0.0, m = 0.0;
    for (double v : x) {
      s += v;
      m = std::max(m, std::abs(s));
    }
    maxes[r] = m;
  });
  std::sort(maxes.begin(), maxes.end());

  TailTable table;
  const double nvar = static_cast<double>(n) * sigma2;
  std::vector<double> grid = lambda_grid;
  std::sort(grid.begin(), grid.end());
  for (double lambda : grid) {
    TailRow row;
    row.lambda = lambda;
    // tail probability at 5*lambda, envelope terms as functions of lambda
    auto it = std::lower_bound(maxes.begin(), maxes.end(), 5.0 * lambda);
    row.p_hat = static_cast<double>(maxes.end() - it) / static_cast<double>(reps);
    row.poly = prof ? static_cast<double>(n) / (lambda * lambda * lambda) *
                          (quantmix::moment_M3_truncated(*prof, *q, lambda).value +
                           std::pow(sigma2, 1.5))
                    : 0.0;
    table.rows.push_back(row);
  }

  // envelope constant over the bulk; falls back to every resolved point
  for (int pass = 0; pass < 2 && table.c_fit == 0.0; ++pass) {
    double floor = pass == 0 ? 0.05 : 0.0;
    for (const auto& r : table.rows)
      if (r.p_hat > floor && r.p_hat < 1.0)
        table.c_fit = std::max(
            table.c_fit, r.lambda * r.lambda / (nvar * -std::log(r.p_hat)));
  }

  table.shape_consistent = true;
  for (auto& r : table.rows) {
    r.gauss = table.c_fit > 0.0
                  ? std::exp(-r.lambda * r.lambda / (table.c_fit * nvar))
                  : 1.0;
    if (r.p_hat > r.gauss + r.poly + 1e-12) table.shape_consistent = false;
  }
  return table;
}

double integral_Q(const quantmix::QuantileFn& q, double a) {
  if (!(a > 0.0)) return 0.0;
  a = std::min(a, 1.0);
  const int panels = 400;
  const double lo = a * 1e-10;
  const double step = std::log(a / lo) / panels;
  double s = 0.0;
  for (int i = 0; i < panels; ++i) {
    double ua = lo * std::exp(step * i);
    double ub = lo * std::exp(step * (i + 1));
    s += q.at(0.5 * (ua + ub)) * (ub - ua);
  }
  return s + q.at(lo) * lo;  // sliver below the panel range
}

CovTable covariance_bound_check(const dynamics::MapModel& m,
                                const observables::Observable& f, double center,
                                const quantmix::MixingProfile& prof,
                                const quantmix::QuantileFn& q,
                                const std::vector<long>& i_grid, int bins,
                                long reps, std::uint64_t seed) {
  if (reps < 10000) throw std::invalid_argument("covariance_bound_check: reps < 1e4");
  if (bins < 2) throw std::invalid_argument("covariance_bound_check: bins < 2");
  if (i_grid.empty()) throw std::invalid_argument("covariance_bound_check: empty grid");
  for (long i : i_grid)
    if (i < 0) throw std::invalid_argument("covariance_bound_check: lag < 0");
  if (static_cast<long>(bins) * 10 > reps)
    std::fprintf(stderr,
                 "covariance_bound_check: %d bins for %ld replicates "
                 "undersmooths\n",
                 bins, reps);

  const dynamics::DensityGrid& grid = m.density();
  std::vector<double> edges(static_cast<std::size_t>(bins - 1));
  for (int k = 1; k < bins; ++k)
    edges[static_cast<std::size_t>(k - 1)] =
        dynamics::grid_quantile(grid, static_cast<double>(k) / bins);

  long max_i = 0;
  for (long i : i_grid) max_i = std::max(max_i, i);
  const std::size_t lags = i_grid.size();

  // Fixed shard layout: results do not depend on the worker count.
  const int shards = 64;
  std::vector<std::vector<double>> sums(
      shards, std::vector<double>(lags * static_cast<std::size_t>(bins), 0.0));
  std::vector<std::vector<double>> sq(shards, std::vector<double>(lags, 0.0));
  std::vector<std::vector<long>> counts(shards, std::vector<long>(bins, 0));

  parallel_for(shards, worker_count(), [&](std::size_t s) {
    long lo = static_cast<long>(s) * reps / shards;
    long hi = static_cast<long>(s + 1) * reps / shards;
    for (long r = lo; r < hi; ++r) {
      RngStream rng(derive_key(seed, "cov-path", static_cast<std::uint64_t>(r)));
      dynamics::Trajectory t = dynamics::simulate_chain(m, max_i + 1, {}, rng);
      int b = static_cast<int>(
          std::upper_bound(edges.begin(), edges.end(), t.values[0]) -
          edges.begin());
      ++counts[s][static_cast<std::size_t>(b)];
      for (std::size_t li = 0; li < lags; ++li) {
        double x = observables::eval_observable(
                       f, t.values[static_cast<std::size_t>(i_grid[li])]) -
                   center;
        sums[s][li * static_cast<std::size_t>(bins) + static_cast<std::size_t>(b)] += x;
        sq[s][li] += x * x;
      }
    }
  });

  std::vector<long> nb(static_cast<std::size_t>(bins), 0);
  for (int s = 0; s < shards; ++s)
    for (int b = 0; b < bins; ++b)
      nb[static_cast<std::size_t>(b)] += counts[s][static_cast<std::size_t>(b)];

  CovTable table;
  std::vector<double> is, margins;
  for (std::size_t li = 0; li < lags; ++li) {
    double l1 = 0.0, xsq = 0.0;
    for (int b = 0; b < bins; ++b) {
      double sum_b = 0.0;
      for (int s = 0; s < shards; ++s)
        sum_b += sums[s][li * static_cast<std::size_t>(bins) +
                         static_cast<std::size_t>(b)];
      if (nb[static_cast<std::size_t>(b)] > 0) l1 += std::abs(sum_b);
    }
    l1 /= static_cast<double>(reps);
    for (int s = 0; s < shards; ++s) xsq += sq[s][li];
    double sd = std::sqrt(std::max(xsq / static_cast<double>(reps), 0.0));

    CovRow row;
    row.i = i_grid[li];
    row.lhs = l1;
    row.rhs = 8.0 * integral_Q(q, prof.at(row.i));
    row.band = 2.0 * sd *
               std::sqrt(2.0 * bins / (std::numbers::pi * static_cast<double>(reps)));
    row.holds = row.lhs <= row.rhs + row.band;
    table.rows.push_back(row);
    is.push_back(static_cast<double>(row.i));
    margins.push_back(row.rhs - row.lhs);
  }
  table.margin_tau = is.size() >= 2 ? kendall_tau(is, margins) : 0.0;
  return table;
}

// Both forms compare per run of tied sample values, so a discrete sample
// scores 0 against its own empirical CDF.
double ks_distance(std::vector<double> sample, const coupling::CondCdf& ref) {
  if (sample.empty()) throw std::invalid_argument("ks_distance: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size();) {
    std::size_t j = i;
    while (j < sample.size() && sample[j] == sample[i]) ++j;
    d = std::max(d, std::abs(static_cast<double>(j) / n - ref.value(sample[i])));
    d = std::max(d, std::abs(static_cast<double>(i) / n -
                             ref.left_value(sample[i])));
    i = j;
  }
  return d;
}

double ks_distance(std::vector<double> sample,
                   const std::function<double(double)>& cdf) {
  if (sample.empty()) throw std::invalid_argument("ks_distance: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size();) {
    std::size_t j = i;
    while (j < sample.size() && sample[j] == sample[i]) ++j;
    double f = cdf(sample[i]);
    d = std::max(d, std::abs(static_cast<double>(j) / n - f));
    d = std::max(d, std::abs(static_cast<double>(i) / n - f));
    i = j;
  }
  return d;
}

double kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("kendall_tau: need matching series, size >= 2");
  long concordant = 0, discordant = 0;
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = (x[i] - x[j]) * (y[i] - y[j]);
      if (s > 0) ++concordant;
      else if (s < 0) ++discordant;
    }
  return static_cast<double>(concordant - discordant) /
         (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

}  // namespace couplab::diagnostics
