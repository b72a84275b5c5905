#include "couplab/observables.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "couplab/errors.hpp"

namespace couplab::observables {

namespace {
constexpr double kEvalCap = 1e12;

const double kGlNodes[4] = {0.1834346424956498, 0.5255324099163290,
                            0.7966664774136267, 0.9602898564975363};
const double kGlWeights[4] = {0.3626837833783620, 0.3137066458778873,
                              0.2223810344533745, 0.1012285362903763};

// Fitted decay exponent of a step tail over its last decade of positive
// values; +inf for tails of bounded range.
double fitted_step_exponent(const std::vector<double>& ts,
                            const std::vector<double>& hs) {
  std::vector<double> lt, lh;
  for (std::size_t i = 0; i < ts.size(); ++i)
    if (hs[i] > 0.0 && hs[i] < 1.0) {
      lt.push_back(ts[i]);
      lh.push_back(hs[i]);
    }
  if (lt.size() < 4) return std::numeric_limits<double>::infinity();
  // bounded observable: the tail drops to zero before the grid end
  if (hs.back() == 0.0 && ts.back() < 2.0 * lt.back())
    return std::numeric_limits<double>::infinity();
  double tmax = lt.back();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < lt.size(); ++i) {
    if (lt[i] < 0.1 * tmax) continue;
    double x = std::log(lt[i]), y = std::log(lh[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += y * x;
    ++n;
  }
  if (n < 3) return std::numeric_limits<double>::infinity();
  double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return -slope;
}
}  // namespace

double TailFunction::at(double x) const {
  if (x < 0.0) throw std::domain_error("TailFunction: negative argument");
  switch (form) {
    case Form::power:
      if (x <= c) return 1.0;
      return std::pow(x / c, -b);
    case Form::indicator:
      return x < bound ? 1.0 : 0.0;
    case Form::empirical: {
      if (ts.empty() || x < ts.front()) return 1.0;
      auto it = std::upper_bound(ts.begin(), ts.end(), x);
      return hs[static_cast<std::size_t>(it - ts.begin()) - 1];
    }
  }
  return 1.0;
}

TailFunction power_tail(double c, double b) {
  if (!(c > 0.0 && b > 0.0))
    throw std::domain_error("power_tail: c and b must be positive");
  if (!(b > 2.0))
    throw std::domain_error("power_tail: x H(x) integrable requires b > 2");
  TailFunction t;
  t.form = TailFunction::Form::power;
  t.c = c;
  t.b = b;
  return t;
}

TailFunction indicator_tail(double m) {
  if (!(m > 0.0)) throw std::domain_error("indicator_tail: bound must be positive");
  TailFunction t;
  t.form = TailFunction::Form::indicator;
  t.bound = m;
  return t;
}

TailFunction empirical_tail(std::vector<double> ts, std::vector<double> hs) {
  if (ts.size() != hs.size() || ts.empty())
    throw std::invalid_argument("empirical_tail: mismatched or empty grids");
  for (std::size_t i = 1; i < ts.size(); ++i) {
    if (ts[i] <= ts[i - 1])
      throw std::invalid_argument("empirical_tail: ts not increasing");
    if (hs[i] > hs[i - 1]) hs[i] = hs[i - 1];  // enforce non-increasing
  }
  if (hs.back() > 0.0) {
    // unbounded range: x H(x) integrable needs a fitted exponent above 2
    double fitted = fitted_step_exponent(ts, hs);
    if (fitted <= 2.0)
      throw std::invalid_argument("empirical_tail: x H(x) not integrable");
  }
  TailFunction t;
  t.form = TailFunction::Form::empirical;
  t.ts = std::move(ts);
  t.hs = std::move(hs);
  return t;
}

Observable identity_observable() {
  Observable f;
  f.pieces.push_back(Piece{0.0, 1.0, Piece::Kind::identity, 1.0, 1.0, 0.0, 1.0});
  f.bv_bound = 1.0;
  return f;
}

namespace {

double eval_piece(const Piece& p, double x) {
  double v = 0.0;
  switch (p.kind) {
    case Piece::Kind::identity:
      v = x;
      break;
    case Piece::Kind::power:
      v = std::pow(x, p.a);
      break;
    case Piece::Kind::affine:
      v = p.slope * x + p.intercept;
      break;
    case Piece::Kind::indicator:
      v = 1.0;
      break;
  }
  return p.sign * v;
}

}  // namespace

double eval_observable(const Observable& obs, double x,
                       std::uint64_t* capped) {
  for (const Piece& p : obs.pieces) {
    if (x > p.lo && x < p.hi) {
      double v = eval_piece(p, x);
      if (std::abs(v) > kEvalCap) {
        if (capped) ++*capped;
        return std::copysign(kEvalCap, v);
      }
      return v;
    }
  }
  return 0.0;
}

namespace {

// Gauss-Legendre on [a,b] of f restricted to one piece.
double gl_piece(const Piece& p, double a, double b) {
  double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double acc = 0.0;
  for (int k = 0; k < 4; ++k) {
    double v1 = eval_piece(p, mid + half * kGlNodes[k]);
    double v2 = eval_piece(p, mid - half * kGlNodes[k]);
    v1 = std::clamp(v1, -kEvalCap, kEvalCap);
    v2 = std::clamp(v2, -kEvalCap, kEvalCap);
    acc += kGlWeights[k] * (v1 + v2);
  }
  return acc * half;
}

double gl_piece_sq(const Piece& p, double a, double b, double center) {
  double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double acc = 0.0;
  for (int k = 0; k < 4; ++k) {
    double v1 = std::clamp(eval_piece(p, mid + half * kGlNodes[k]), -kEvalCap,
                           kEvalCap);
    double v2 = std::clamp(eval_piece(p, mid - half * kGlNodes[k]), -kEvalCap,
                           kEvalCap);
    acc += kGlWeights[k] *
           ((v1 - center) * (v1 - center) + (v2 - center) * (v2 - center));
  }
  return acc * half;
}

template <typename CellFn>
double integrate_cells(const Observable& obs, const dynamics::DensityGrid& g,
                       CellFn&& piece_integral) {
  const double h = 1.0 / g.bins;
  double total = 0.0;
  for (const Piece& p : obs.pieces) {
    int first = std::max(0, static_cast<int>(p.lo * g.bins));
    int last = std::min(g.bins - 1, static_cast<int>(p.hi * g.bins));
    for (int i = first; i <= last; ++i) {
      double a = std::max(p.lo, i * h);
      double b = std::min(p.hi, (i + 1) * h);
      if (b <= a) continue;
      total += g.values[i] * piece_integral(p, a, b);
    }
  }
  return total;
}

}  // namespace

double center_on_grid(const Observable& obs, const dynamics::DensityGrid& g) {
  if (g.bins <= 0) throw std::invalid_argument("center_on_grid: empty grid");
  return integrate_cells(obs, g, [](const Piece& p, double a, double b) {
    return gl_piece(p, a, b);
  });
}

double second_moment_on_grid(const Observable& obs,
                             const dynamics::DensityGrid& g, double center) {
  if (g.bins <= 0)
    throw std::invalid_argument("second_moment_on_grid: empty grid");
  // includes the mass of the zero value outside all pieces
  double covered = 0.0;
  const double h = 1.0 / g.bins;
  for (const Piece& p : obs.pieces) {
    int first = std::max(0, static_cast<int>(p.lo * g.bins));
    int last = std::min(g.bins - 1, static_cast<int>(p.hi * g.bins));
    for (int i = first; i <= last; ++i) {
      double a = std::max(p.lo, i * h);
      double b = std::min(p.hi, (i + 1) * h);
      if (b > a) covered += g.values[i] * (b - a);
    }
  }
  double inside =
      integrate_cells(obs, g, [&](const Piece& p, double a, double b) {
        return gl_piece_sq(p, a, b, center);
      });
  return inside + (1.0 - covered) * center * center;
}

TailFunction tail_of_observable(const Observable& obs,
                                const dynamics::MapModel& m, long samples,
                                int grid_points, RngStream& rng) {
  if (samples < 100) throw std::invalid_argument("tail_of_observable: samples < 100");
  if (grid_points < 8) throw std::invalid_argument("tail_of_observable: grid too small");
  std::vector<double> vals(samples);
  std::uint64_t capped = 0;
  for (long i = 0; i < samples; ++i)
    vals[i] = std::abs(eval_observable(obs, m.sample_invariant(rng), &capped));
  std::sort(vals.begin(), vals.end());
  double vmax = vals.back();
  double vmin = 0.0;
  for (double v : vals)
    if (v > 0.0) {
      vmin = v;
      break;
    }
  if (!(vmax > 0.0))
    throw DegenerateError("tail_of_observable: observable vanishes on sample");
  vmin = std::max(vmin, vmax * 1e-15);
  std::vector<double> ts(grid_points), hs(grid_points);
  double lr = std::log(vmax / vmin);
  for (int j = 0; j < grid_points; ++j) {
    double t = vmin * std::exp(lr * j / (grid_points - 1.0));
    if (j == grid_points - 1) t = vmax;  // keep the top knot exact
    auto it = std::upper_bound(vals.begin(), vals.end(), t);
    ts[j] = t;
    hs[j] = static_cast<double>(vals.end() - it) / static_cast<double>(samples);
  }
  return empirical_tail(std::move(ts), std::move(hs));
}

namespace {

double critical_exponent(double gamma, double p) {
  return p * (1.0 - gamma) / (1.0 - p * gamma);
}

double fitted_tail_exponent(const TailFunction& tail) {
  return fitted_step_exponent(tail.ts, tail.hs);
}

}  // namespace

Verdict check_moment_condition(const TailFunction& tail, double gamma,
                               double p) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::domain_error("gamma outside (0,1)");
  if (!(p > 1.0)) throw std::domain_error("p must exceed 1");
  if (!(p * gamma < 1.0))
    throw std::domain_error("check_moment_condition: requires p*gamma < 1");
  double crit = critical_exponent(gamma, p);
  switch (tail.form) {
    case TailFunction::Form::power:
      return tail.b > crit ? Verdict::holds : Verdict::fails;
    case TailFunction::Form::indicator:
      return Verdict::holds;
    case TailFunction::Form::empirical: {
      double fitted = fitted_tail_exponent(tail);
      if (std::isinf(fitted)) return Verdict::holds;
      if (fitted > crit + 0.1) return Verdict::holds;
      if (fitted < crit - 0.1) return Verdict::fails;
      return Verdict::marginal;
    }
  }
  return Verdict::fails;
}

Verdict check_lambda_condition(const TailFunction& tail, double gamma,
                               double p) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::domain_error("gamma outside (0,1)");
  const double inv_gamma = 1.0 / gamma;
  const double feq_tol = 1e-12;
  if (std::abs(p - inv_gamma) <= feq_tol * inv_gamma) {
    // boundary case: compact support is exactly what survives here
    if (tail.form == TailFunction::Form::indicator) return Verdict::holds;
    throw std::domain_error(
        "check_lambda_condition: p = 1/gamma admissible only for indicator "
        "tails");
  }
  if (!(p > 2.0 && p < inv_gamma))
    throw std::domain_error(
        "check_lambda_condition: requires 2 < p < 1/gamma");
  double crit = critical_exponent(gamma, p);
  switch (tail.form) {
    case TailFunction::Form::power:
      return tail.b >= crit ? Verdict::holds : Verdict::fails;
    case TailFunction::Form::indicator:
      return Verdict::holds;
    case TailFunction::Form::empirical: {
      double fitted = fitted_tail_exponent(tail);
      if (std::isinf(fitted)) return Verdict::holds;
      if (fitted > crit + 0.1) return Verdict::holds;
      if (fitted < crit - 0.1) return Verdict::fails;
      return Verdict::marginal;
    }
  }
  return Verdict::fails;
}

}  // namespace couplab::observables
