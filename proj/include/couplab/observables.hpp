#pragma once

#include <cstdint>
#include <vector>

#include "couplab/dynamics.hpp"
#include "couplab/rng.hpp"

namespace couplab::observables {

// Upper tail of |f(Y)|: H(x) = P(|f| > x), cadlag and non-increasing.
struct TailFunction {
  enum class Form { power, indicator, empirical };
  Form form = Form::indicator;
  double c = 1.0, b = 1.0;  // power: H(x) = min(1, (x/c)^{-b})
  double bound = 1.0;       // indicator: H = 1 on [0, bound), 0 beyond
  std::vector<double> ts, hs;  // empirical step grid

  double at(double x) const;
};

TailFunction power_tail(double c, double b);
TailFunction indicator_tail(double m);
TailFunction empirical_tail(std::vector<double> ts, std::vector<double> hs);

// Piecewise-monotone observable: on each open interval one monotone piece,
// zero outside all pieces.
struct Piece {
  enum class Kind { identity, power, affine, indicator };
  double lo = 0.0, hi = 1.0;
  Kind kind = Kind::identity;
  double a = 1.0;                       // power exponent, x^a
  double slope = 1.0, intercept = 0.0;  // affine
  double sign = 1.0;
};

struct Observable {
  std::vector<Piece> pieces;
  double bv_bound = 0.0;  // user-declared variation bound; 0 = not declared
};

Observable identity_observable();

// Piece evaluation capped at |f| <= 1e12; each cap bumps *capped when given.
double eval_observable(const Observable& obs, double x,
                       std::uint64_t* capped = nullptr);

// Deterministic nu(f) from the grid: per-cell Gauss-Legendre against the
// cell-averaged density, split at piece boundaries.
double center_on_grid(const Observable& obs, const dynamics::DensityGrid& g);

// nu((f - center)^2) by the same quadrature.
double second_moment_on_grid(const Observable& obs,
                             const dynamics::DensityGrid& g, double center);

// Empirical tail of |f| under the grid law: log-spaced t grid between the
// smallest positive and largest observed value.
TailFunction tail_of_observable(const Observable& obs,
                                const dynamics::MapModel& m, long samples,
                                int grid_points, RngStream& rng);

enum class Verdict { holds, fails, marginal };

// Whether the integral of x^{p-1} H(x)^{(1-p*gamma)/(1-gamma)} converges;
// requires p*gamma < 1. Critical tail exponent: p(1-gamma)/(1-p*gamma).
// Empirical tails get a fitted exponent and a marginal band of 0.1 around
// the critical one.
Verdict check_moment_condition(const TailFunction& tail, double gamma,
                               double p);

// Whether H(x) = O(x^{-p(1-gamma)/(1-p*gamma)}). Admissible for
// 2 < p < 1/gamma, plus the boundary p = 1/gamma for indicator tails only.
Verdict check_lambda_condition(const TailFunction& tail, double gamma,
                               double p);

}  // namespace couplab::observables
