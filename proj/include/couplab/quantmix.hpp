#pragma once

#include <cstdint>
#include <vector>

#include "couplab/dynamics.hpp"
#include "couplab/observables.hpp"

namespace couplab::quantmix {

// Cadlag inverse of a tail function: Q(u) = inf{ t : H(t) <= u } on (0,1].
// Non-increasing in u.
struct QuantileFn {
  enum class Form { power, constant, grid };
  Form form = Form::constant;
  double c = 1.0, b = 1.0;     // power: Q(u) = c u^{-1/b}
  double m = 1.0;              // constant
  std::vector<double> us, qs;  // grid knots, us increasing within (0,1]
  double ext_b = 0.0;          // fitted exponent for u below the grid

  double at(double u) const;
};

QuantileFn power_quantile(double c, double b);
QuantileFn constant_quantile(double m);
QuantileFn grid_quantile_fn(std::vector<double> us, std::vector<double> qs);
QuantileFn quantile_of_tail(const observables::TailFunction& tail,
                            int grid_points = 257);

// alpha(0) = 1 always; the forms below give alpha(n) for n >= 1.
struct MixingProfile {
  enum class Form { analytic, geometric, empirical };
  Form form = Form::analytic;
  double c = 1.0, rho = 1.0;   // analytic: min(1, c n^{-rho})
  double a = 0.5;              // geometric: a^n
  std::vector<double> values;  // empirical alpha(1..K)

  double at(long n) const;
};

MixingProfile analytic_profile(double c, double rho);
MixingProfile geometric_profile(double a);
MixingProfile empirical_profile(std::vector<double> values);

// Polynomial envelope alpha(n) <= C n^{(gamma-1)/gamma} of the reversed
// intermittent chain; the constant is unknown and defaults to 1.
MixingProfile intermittent_profile(double gamma, double big_c = 1.0);

// min{ q in N : alpha(q) <= x }; 0 when x >= 1. For empirical profiles with
// no listed value <= x, returns size+1 and sets *extrapolated.
long alpha_inverse(const MixingProfile& prof, double x,
                   bool* extrapolated = nullptr);

// R(u) = alpha^{-1}(u) * max(Q(u), 1). Empirical profiles are extended
// below their observed range by a fitted power law.
double rate_R(const MixingProfile& prof, const QuantileFn& q, double u);

struct MomentResult {
  double value = 0.0;
  bool divergent = false;     // fitted integrand power at 0+ is >= 1
  bool converged = true;      // refinement levels agreed within 0.5%
  bool extrapolated = false;  // empirical data extended beyond its range
};

// M_{p,alpha}(Q): integral of R^{p-1}(u) Q(u) over (0,1].
MomentResult moment_M(const MixingProfile& prof, const QuantileFn& q,
                      double p);

// Truncated third-order version: integral of Q(u) R(u) min(R(u), lambda).
MomentResult moment_M3_truncated(const MixingProfile& prof,
                                 const QuantileFn& q, double lambda);

struct SupResult {
  double value = 0.0;
  bool finite = true;
  bool extrapolated = false;
};

// Lambda_{p,alpha}(Q) = sup over (0,1] of u R^{p-1}(u) Q(u).
SupResult lambda_sup(const MixingProfile& prof, const QuantileFn& q, double p);

// Empirical mixing coefficients of the reversed chain: for each n in
// 1..n_max, the max over an x grid of the L1 distance between the law of Y_n
// given Y_0 (binned into equal-mass cells) and the stationary law.
MixingProfile estimate_alpha(const dynamics::MapModel& m, int n_max, long reps,
                             int bins_past, int x_points, std::uint64_t seed);

}  // namespace couplab::quantmix
