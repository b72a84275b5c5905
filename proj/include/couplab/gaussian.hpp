#pragma once

#include <vector>

#include "couplab/rng.hpp"

namespace couplab::gaussian {

// Centered normal law N(0, sigma2); sigma2 = 0 is the point mass at zero.
struct NormalSpec {
  double sigma2 = 1.0;
};

// Phi(x). Absolute error below 1e-12 on |x| <= 8.
double std_normal_cdf(double x);

// Phi^{-1}(u) for u in (0,1): rational approximation polished with one Newton
// step on std_normal_cdf. Throws std::domain_error outside (0,1).
double std_normal_quantile(double u);

// One inverse-CDF draw from spec.
double sample_normal(const NormalSpec& spec, RngStream& rng);

// Quadratic transport distance W2 between the empirical law of `sample` and
// N(0, spec.sigma2), via order statistics: W2^2 = sum_i of the integral of
// (x_(i) - s Phi^{-1}(u))^2 over the i-th uniform slot, each slot integrated
// by midpoint refinement. Throws std::invalid_argument on an empty sample.
double w2_empirical_vs_gaussian(std::vector<double> sample,
                                const NormalSpec& spec);

}  // namespace couplab::gaussian
