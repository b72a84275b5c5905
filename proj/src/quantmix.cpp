#include "couplab/quantmix.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "couplab/errors.hpp"
#include "couplab/parallel.hpp"

namespace couplab::quantmix {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

// ---------------------- quantile functions ----------------------

double QuantileFn::at(double u) const {
  if (!(u > 0.0 && u <= 1.0))
    throw std::domain_error("QuantileFn: u outside (0,1]");
  switch (form) {
    case Form::power:
      return c * std::pow(u, -1.0 / b);
    case Form::constant:
      return m;
    case Form::grid: {
      if (u < us.front()) {
        // power extension fitted over the lowest observed decade
        return qs.front() * std::pow(us.front() / u, ext_b);
      }
      auto it = std::lower_bound(us.begin(), us.end(), u);
      if (it == us.end()) return qs.back();
      return qs[static_cast<std::size_t>(it - us.begin())];
    }
  }
  return m;
}

QuantileFn power_quantile(double c, double b) {
  if (!(c > 0.0 && b > 0.0))
    throw std::domain_error("power_quantile: c and b must be positive");
  QuantileFn q;
  q.form = QuantileFn::Form::power;
  q.c = c;
  q.b = b;
  return q;
}

QuantileFn constant_quantile(double m) {
  if (!(m >= 0.0)) throw std::domain_error("constant_quantile: negative bound");
  QuantileFn q;
  q.form = QuantileFn::Form::constant;
  q.m = m;
  return q;
}

QuantileFn grid_quantile_fn(std::vector<double> us, std::vector<double> qs) {
  if (us.size() != qs.size() || us.size() < 2)
    throw std::invalid_argument("grid_quantile_fn: bad grids");
  for (std::size_t i = 0; i < us.size(); ++i) {
    if (!(us[i] > 0.0 && us[i] <= 1.0))
      throw std::invalid_argument("grid_quantile_fn: us outside (0,1]");
    if (i > 0 && us[i] <= us[i - 1])
      throw std::invalid_argument("grid_quantile_fn: us not increasing");
    if (i > 0 && qs[i] > qs[i - 1]) qs[i] = qs[i - 1];  // keep non-increasing
  }
  QuantileFn q;
  q.form = QuantileFn::Form::grid;
  q.us = std::move(us);
  q.qs = std::move(qs);
  // exponent for values below the grid: log-log fit over the first decade
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < q.us.size() && q.us[i] <= 10.0 * q.us.front();
       ++i) {
    if (!(q.qs[i] > 0.0)) continue;
    double x = std::log(q.us[i]), y = std::log(q.qs[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n >= 3) {
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    q.ext_b = std::max(0.0, -slope);
  }
  return q;
}

QuantileFn quantile_of_tail(const observables::TailFunction& tail,
                            int grid_points) {
  using observables::TailFunction;
  if (grid_points < 8)
    throw std::invalid_argument("quantile_of_tail: grid too small");
  switch (tail.form) {
    case TailFunction::Form::power:
      return power_quantile(tail.c, tail.b);
    case TailFunction::Form::indicator:
      return constant_quantile(tail.bound);
    case TailFunction::Form::empirical: {
      double u_lo = 1.0;
      for (std::size_t i = tail.hs.size(); i-- > 0;)
        if (tail.hs[i] > 0.0) {
          u_lo = tail.hs[i];
          break;
        }
      u_lo = std::max(u_lo * 0.5, 1e-12);
      std::vector<double> us(grid_points), qs(grid_points);
      double lr = std::log(1.0 / u_lo);
      for (int j = 0; j < grid_points; ++j) {
        double u = u_lo * std::exp(lr * j / (grid_points - 1.0));
        us[j] = std::min(u, 1.0);
        // Q(u) = inf{ t : H(t) <= u } on the step grid
        std::size_t k = 0;
        while (k < tail.ts.size() && tail.hs[k] > u) ++k;
        qs[j] = k < tail.ts.size() ? tail.ts[k] : tail.ts.back();
      }
      us.back() = 1.0;
      return grid_quantile_fn(std::move(us), std::move(qs));
    }
  }
  return constant_quantile(1.0);
}

// ---------------------- mixing profiles ----------------------

double MixingProfile::at(long n) const {
  if (n < 0) throw std::domain_error("MixingProfile: negative lag");
  if (n == 0) return 1.0;
  switch (form) {
    case Form::analytic:
      return std::min(1.0, c * std::pow(static_cast<double>(n), -rho));
    case Form::geometric:
      return std::pow(a, static_cast<double>(n));
    case Form::empirical:
      if (static_cast<std::size_t>(n) <= values.size())
        return values[n - 1];
      return values.back();
  }
  return 1.0;
}

MixingProfile analytic_profile(double c, double rho) {
  if (!(c > 0.0 && rho > 0.0))
    throw std::domain_error("analytic_profile: c and rho must be positive");
  MixingProfile p;
  p.form = MixingProfile::Form::analytic;
  p.c = c;
  p.rho = rho;
  return p;
}

MixingProfile geometric_profile(double a) {
  if (!(a > 0.0 && a < 1.0))
    throw std::domain_error("geometric_profile: a outside (0,1)");
  MixingProfile p;
  p.form = MixingProfile::Form::geometric;
  p.a = a;
  return p;
}

MixingProfile empirical_profile(std::vector<double> values) {
  if (values.empty())
    throw std::invalid_argument("empirical_profile: empty list");
  for (double v : values)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("empirical_profile: value outside [0,1]");
  MixingProfile p;
  p.form = MixingProfile::Form::empirical;
  p.values = std::move(values);
  return p;
}

MixingProfile intermittent_profile(double gamma, double big_c) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::domain_error("intermittent_profile: gamma outside (0,1)");
  return analytic_profile(big_c, (1.0 - gamma) / gamma);
}

long alpha_inverse(const MixingProfile& prof, double x, bool* extrapolated) {
  if (extrapolated) *extrapolated = false;
  if (!(x >= 0.0)) throw std::domain_error("alpha_inverse: x must be >= 0");
  if (x >= 1.0) return 0;
  switch (prof.form) {
    case MixingProfile::Form::geometric: {
      if (x <= 0.0)
        throw std::domain_error("alpha_inverse: geometric never reaches 0");
      long q = std::max<long>(
          1, static_cast<long>(
                 std::ceil(std::log(x) / std::log(prof.a) - 1e-12)));
      while (prof.at(q) > x) ++q;
      while (q > 1 && prof.at(q - 1) <= x) --q;
      return q;
    }
    case MixingProfile::Form::analytic: {
      if (x <= 0.0)
        throw std::domain_error("alpha_inverse: analytic never reaches 0");
      double est = std::pow(prof.c / x, 1.0 / prof.rho);
      if (est > 9e18)
        throw std::overflow_error("alpha_inverse: index overflow");
      long q = std::max<long>(1, static_cast<long>(std::ceil(est - 1e-9)));
      while (prof.at(q) > x) ++q;
      while (q > 1 && prof.at(q - 1) <= x) --q;
      return q;
    }
    case MixingProfile::Form::empirical: {
      for (std::size_t i = 0; i < prof.values.size(); ++i)
        if (prof.values[i] <= x) return static_cast<long>(i) + 1;
      if (extrapolated) *extrapolated = true;
      return static_cast<long>(prof.values.size()) + 1;
    }
  }
  return 0;
}

namespace {

// Evaluation layer for the integrals: real-valued alpha^{-1}, with empirical
// profiles extended below their observed range by a fitted power law.
struct ProfileEval {
  const MixingProfile& prof;
  long K = 0;             // empirical list length
  double alpha_K = 0.0;   // last listed value
  double ext_rho = 1.0;   // fitted decay exponent for the extension
  bool used_extension = false;

  explicit ProfileEval(const MixingProfile& p) : prof(p) {
    if (prof.form != MixingProfile::Form::empirical) return;
    K = static_cast<long>(prof.values.size());
    alpha_K = prof.values[K - 1];
    // fit over the decaying part: points strictly above the final value
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (long i = 1; i <= K; ++i) {
      double v = prof.values[i - 1];
      if (v > alpha_K && v > 0.0) {
        double x = std::log(static_cast<double>(i)), y = std::log(v);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
      }
    }
    if (n >= 2) {
      double denom = n * sxx - sx * sx;
      if (denom > 0.0) ext_rho = std::max(0.1, -(n * sxy - sx * sy) / denom);
    }
  }

  double inv_real(double u) {
    if (u >= 1.0) return 0.0;
    switch (prof.form) {
      case MixingProfile::Form::geometric:
        return static_cast<double>(alpha_inverse(prof, u));
      case MixingProfile::Form::analytic: {
        double est = std::pow(prof.c / u, 1.0 / prof.rho);
        double q = std::ceil(est - 1e-9);
        if (q < 1.0) q = 1.0;
        if (q < 1e15) {
          // exact ceil adjustment only matters while q is representable
          while (prof.at(static_cast<long>(q)) > u) q += 1.0;
          while (q > 1.0 && prof.at(static_cast<long>(q) - 1) <= u) q -= 1.0;
        }
        return q;
      }
      case MixingProfile::Form::empirical: {
        for (long i = 1; i <= K; ++i)
          if (prof.values[i - 1] <= u) return static_cast<double>(i);
        used_extension = true;
        if (alpha_K <= 0.0) return static_cast<double>(K) + 1.0;
        return static_cast<double>(K) *
               std::pow(alpha_K / u, 1.0 / ext_rho);
      }
    }
    return 0.0;
  }

  // alpha(q) for real q >= 1, following the same extension.
  double level(double q) {
    switch (prof.form) {
      case MixingProfile::Form::geometric:
        return std::pow(prof.a, q);
      case MixingProfile::Form::analytic:
        return std::min(1.0, prof.c * std::pow(q, -prof.rho));
      case MixingProfile::Form::empirical: {
        long qi = static_cast<long>(q);
        if (qi <= K) return prof.values[qi - 1];
        if (alpha_K <= 0.0) return 0.0;
        return alpha_K * std::pow(q / static_cast<double>(K), -ext_rho);
      }
    }
    return 0.0;
  }
};

template <typename F>
double adaptive_simpson_rec(F& f, double a, double b, double fa, double fm,
                            double fb, double whole, double eps, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * eps)
    return left + right + delta / 15.0;
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * eps,
                              depth - 1) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * eps,
                              depth - 1);
}

template <typename F>
double adaptive_simpson(F&& f, double a, double b, double eps) {
  if (!(b > a)) return 0.0;
  double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, eps, 28);
}

// Integral of f over [lo, hi], where f is smooth between the step points of
// alpha^{-1}. Enumerates the steps when there are few, otherwise falls back
// to composite Simpson in log coordinates.
template <typename F>
double integrate_span(ProfileEval& pe, F&& f, double lo, double hi,
                      double eps_rel, int comp_points) {
  if (!(hi > lo)) return 0.0;
  double q_hi = pe.inv_real(hi * (1.0 - 1e-14));
  double q_lo = pe.inv_real(lo * (1.0 + 1e-14));
  double span = q_lo - q_hi;
  if (span <= 2048.0) {
    double total = 0.0;
    double upper = hi;
    for (double q = q_hi; q <= q_lo && upper > lo; q += 1.0) {
      double bp = q >= 1.0 ? pe.level(q) : 0.0;
      double lower = std::max(lo, bp);
      if (lower < upper) {
        // nudge off the step points so the panel sees one constant level
        double h = (upper - lower) * 1e-12;
        double guess = std::abs(f(0.5 * (lower + upper))) * (upper - lower);
        total += adaptive_simpson(f, lower + h, upper - h,
                                  eps_rel * std::max(guess, 1e-300));
        upper = lower;
      } else if (bp >= upper) {
        continue;  // step outside the remaining window
      } else {
        upper = lower;
      }
    }
    return total;
  }
  // dense steps: composite Simpson on v = log u
  double av = std::log(lo), bv = std::log(hi);
  int n = comp_points;
  double hstep = (bv - av) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    double v = av + i * hstep;
    double u = std::exp(v);
    double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * f(u) * u;
  }
  return acc * hstep / 3.0;
}

struct LadderOutcome {
  double value = 0.0;
  bool divergent = false;
  bool tail_estimated = false;
  double u_floor = 1.0;  // lower end of the deepest decade integrated
};

// Integrate f over (0,1] as a ladder of decades. Truncation terms can make
// the decade sums rise before they start to fall, so divergence is judged
// only from the deepest decades reached.
template <typename F>
LadderOutcome decade_ladder(ProfileEval& pe, F&& f, double eps_rel,
                            int comp_points) {
  constexpr int kMaxDecades = 26;
  LadderOutcome out;
  std::vector<double> d;
  double hi = 1.0;
  for (int k = 0; k < kMaxDecades; ++k) {
    double lo = hi * 0.1;
    double dk = integrate_span(pe, f, lo, hi, eps_rel, comp_points);
    if (!std::isfinite(dk)) {
      out.divergent = true;
      out.value = kInf;
      return out;
    }
    d.push_back(dk);
    out.value += dk;
    hi = lo;
    out.u_floor = lo;
    if (k >= 4) {
      if (d[k] <= 0.0 && d[k - 1] <= 0.0) return out;  // nothing left below
      // average ratio over the last three decade pairs
      double lr = 0.0;
      int cnt = 0;
      for (int j = k - 2; j <= k; ++j)
        if (d[j] > 0.0 && d[j - 1] > 0.0) {
          lr += std::log10(d[j] / d[j - 1]);
          ++cnt;
        }
      if (cnt == 3) {
        double slope = lr / cnt;
        if (slope < -0.004 && out.value > 0.0 && d[k] <= 1e-13 * out.value)
          return out;  // decaying and the rest is negligible
        if (k == kMaxDecades - 1) {
          if (slope >= -0.004) {
            out.divergent = true;  // integrand power at 0 is >= 1
            out.value = kInf;
          } else {
            double r = std::pow(10.0, slope);
            out.value += d[k] * r / (1.0 - r);
            out.tail_estimated = true;
          }
        }
      }
    }
  }
  return out;
}

template <typename F>
MomentResult run_moment(const MixingProfile& prof, const QuantileFn& q,
                        F&& integrand) {
  MomentResult res;
  ProfileEval pe_coarse(prof), pe_fine(prof);
  auto f_coarse = [&](double u) { return integrand(pe_coarse, u); };
  auto f_fine = [&](double u) { return integrand(pe_fine, u); };
  LadderOutcome coarse = decade_ladder(pe_coarse, f_coarse, 1e-6, 256);
  LadderOutcome fine = decade_ladder(pe_fine, f_fine, 1e-9, 512);
  res.extrapolated =
      pe_fine.used_extension ||
      (q.form == QuantileFn::Form::grid && fine.u_floor < q.us.front());
  if (coarse.divergent || fine.divergent) {
    res.divergent = true;
    res.value = kInf;
    return res;
  }
  res.value = fine.value;
  double scale = std::max(std::abs(fine.value), 1e-300);
  res.converged = std::abs(fine.value - coarse.value) <= 0.005 * scale;
  return res;
}

}  // namespace

double rate_R(const MixingProfile& prof, const QuantileFn& q, double u) {
  if (!(u > 0.0 && u <= 1.0)) throw std::domain_error("rate_R: u outside (0,1]");
  ProfileEval pe(prof);
  return pe.inv_real(u) * std::max(q.at(u), 1.0);
}

MomentResult moment_M(const MixingProfile& prof, const QuantileFn& q,
                      double p) {
  if (!(p > 1.0)) throw std::domain_error("moment_M: p must exceed 1");
  return run_moment(prof, q, [&q, p](ProfileEval& pe, double u) {
    double qu = q.at(u);
    double r = pe.inv_real(u) * std::max(qu, 1.0);
    return std::pow(r, p - 1.0) * qu;
  });
}

MomentResult moment_M3_truncated(const MixingProfile& prof,
                                 const QuantileFn& q, double lambda) {
  if (!(lambda > 0.0))
    throw std::domain_error("moment_M3_truncated: lambda must be positive");
  return run_moment(prof, q, [&q, lambda](ProfileEval& pe, double u) {
    double qu = q.at(u);
    double r = pe.inv_real(u) * std::max(qu, 1.0);
    return qu * r * std::min(r, lambda);
  });
}

SupResult lambda_sup(const MixingProfile& prof, const QuantileFn& q,
                     double p) {
  if (!(p > 1.0)) throw std::domain_error("lambda_sup: p must exceed 1");
  ProfileEval pe(prof);
  auto g = [&](double u) {
    double qu = q.at(u);
    double r = pe.inv_real(u) * std::max(qu, 1.0);
    return u * std::pow(r, p - 1.0) * qu;
  };
  SupResult res;
  res.value = g(1.0 - 1e-12);  // the sup is often a limit at u -> 1-
  const int n_grid = 3000;
  const double u_min = 1e-12;
  double lr = std::log(1.0 / u_min);
  std::vector<double> tail_u, tail_g;
  for (int i = 0; i <= n_grid; ++i) {
    double u = std::exp(-lr * i / n_grid);
    double val = g(u);
    res.value = std::max(res.value, val);
    if (u <= 1e-6 && val > 0.0) {
      tail_u.push_back(u);
      tail_g.push_back(val);
    }
  }
  // evaluate just below each step of alpha^{-1}, where the product jumps up
  for (long j = 1; j <= 8192; ++j) {
    double bp = pe.level(static_cast<double>(j));
    if (bp < u_min) break;
    if (bp >= 1.0) continue;
    res.value = std::max(res.value, g(bp));
    res.value = std::max(res.value, g(bp * (1.0 - 1e-9)));
  }
  res.extrapolated =
      pe.used_extension ||
      (q.form == QuantileFn::Form::grid && u_min < q.us.front());
  if (tail_u.size() >= 10) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    double n = static_cast<double>(tail_u.size());
    for (std::size_t i = 0; i < tail_u.size(); ++i) {
      double x = std::log(tail_u[i]), y = std::log(tail_g[i]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    if (slope < -0.01) {
      res.finite = false;
      res.value = kInf;
    }
  }
  return res;
}

// ---------------------- empirical mixing coefficients ----------------------

MixingProfile estimate_alpha(const dynamics::MapModel& m, int n_max, long reps,
                             int bins_past, int x_points, std::uint64_t seed) {
  if (n_max < 1) throw std::invalid_argument("estimate_alpha: n_max < 1");
  if (reps < 10000) throw std::invalid_argument("estimate_alpha: reps < 1e4");
  if (bins_past < 2 || x_points < 3)
    throw std::invalid_argument("estimate_alpha: grids too small");
  if (static_cast<long>(bins_past) * 10 > reps)
    std::fprintf(stderr,
                 "estimate_alpha: %d bins for %ld replicates undersmooths\n",
                 bins_past, reps);
  const dynamics::DensityGrid& grid = m.density();

  std::vector<double> edges(bins_past - 1), xs(x_points);
  for (int k = 1; k < bins_past; ++k)
    edges[k - 1] = dynamics::grid_quantile(grid, static_cast<double>(k) / bins_past);
  for (int j = 0; j < x_points; ++j)
    xs[j] = dynamics::grid_quantile(grid, (j + 1.0) / (x_points + 1.0));

  // Fixed shard layout: results do not depend on the worker count.
  const int shards = 64;
  const int slots = x_points + 1;  // histogram over x-grid position
  std::vector<std::vector<std::int64_t>> hist(
      shards, std::vector<std::int64_t>(
                  static_cast<std::size_t>(n_max) * bins_past * slots, 0));
  std::vector<std::vector<std::int64_t>> bin_count(
      shards, std::vector<std::int64_t>(bins_past, 0));

  parallel_for(shards, worker_count(), [&](std::size_t s) {
    auto& h = hist[s];
    auto& bc = bin_count[s];
    long lo = static_cast<long>(s) * reps / shards;
    long hi = static_cast<long>(s + 1) * reps / shards;
    for (long r = lo; r < hi; ++r) {
      RngStream rng(derive_key(seed, "alpha-chain", static_cast<std::uint64_t>(r)));
      double y = m.sample_invariant(rng);
      int b = static_cast<int>(
          std::upper_bound(edges.begin(), edges.end(), y) - edges.begin());
      ++bc[b];
      for (int n = 1; n <= n_max; ++n) {
        y = m.step_chain(y, rng);
        int pos = static_cast<int>(
            std::upper_bound(xs.begin(), xs.end(), y) - xs.begin());
        ++h[(static_cast<std::size_t>(n - 1) * bins_past + b) * slots + pos];
      }
    }
  });

  // merge shards in fixed order, then prefix-sum the histograms into counts
  // of {Y_n <= x_j}
  std::vector<std::int64_t> nb(bins_past, 0);
  for (int s = 0; s < shards; ++s)
    for (int b = 0; b < bins_past; ++b) nb[b] += bin_count[s][b];
  std::vector<double> values(n_max, 0.0);
  const double total = static_cast<double>(reps);
  std::vector<std::int64_t> cell(static_cast<std::size_t>(bins_past) * slots);
  for (int n = 1; n <= n_max; ++n) {
    std::fill(cell.begin(), cell.end(), 0);
    for (int s = 0; s < shards; ++s) {
      const auto& h = hist[s];
      for (int b = 0; b < bins_past; ++b)
        for (int j = 0; j < slots; ++j)
          cell[static_cast<std::size_t>(b) * slots + j] +=
              h[(static_cast<std::size_t>(n - 1) * bins_past + b) * slots + j];
    }
    double best = 0.0;
    for (int j = 0; j < x_points; ++j) {
      // P(Y_n <= x_j) pooled and per starting bin
      double pooled = 0.0;
      for (int b = 0; b < bins_past; ++b) {
        std::int64_t c = 0;
        for (int t = 0; t <= j; ++t)
          c += cell[static_cast<std::size_t>(b) * slots + t];
        pooled += static_cast<double>(c);
      }
      pooled /= total;
      double l1 = 0.0;
      for (int b = 0; b < bins_past; ++b) {
        if (nb[b] == 0) continue;
        std::int64_t c = 0;
        for (int t = 0; t <= j; ++t)
          c += cell[static_cast<std::size_t>(b) * slots + t];
        double cond = static_cast<double>(c) / static_cast<double>(nb[b]);
        l1 += (static_cast<double>(nb[b]) / total) * std::abs(cond - pooled);
      }
      best = std::max(best, l1);
    }
    values[n - 1] = best;
  }
  return empirical_profile(std::move(values));
}

}  // namespace couplab::quantmix
