#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "couplab/rng.hpp"

namespace couplab::dynamics {

// T(x) = x (1 + 2^gamma x^gamma) on [0, 1/2), 2x - 1 on [1/2, 1].
// Expanding with a neutral fixed point at 0; gamma in (0,1).
double apply_map(double gamma, double x);

// |T'(x)|: 1 + 2^gamma (1+gamma) x^gamma on the left branch, 2 on the right.
double map_derivative(double gamma, double x);

// Unique left-branch preimage of y in [0,1): safeguarded Newton started at
// y/2 with a bisection fallback, stops when |T(x) - y| <= 1e-12.
double left_preimage(double gamma, double y);

// Cell-averaged invariant density on a uniform grid (Ulam scheme).
struct DensityGrid {
  int bins = 0;
  double gamma = 0.0;
  std::vector<double> values;  // density per cell; sum * (1/bins) == 1
  double residual = 0.0;       // L1 distance to its own transfer image
  long iterations = 0;
};

// Builds the grid by iterating the discretized transfer operator from the
// uniform density until the L1 residual drops below tol. bins must be a
// power of two >= 256 (so the branch cut 1/2 is a cell boundary). Throws
// ConvergenceError (carrying the last residual) if max_iters is exhausted.
DensityGrid build_density(double gamma, int bins, double tol = 1e-8,
                          long max_iters = 500000);

// Re-derives the transfer matrix and applies it once: independent check that
// the grid is a fixed point.
double transfer_l1_residual(const DensityGrid& grid);

// CDF of the grid law (piecewise linear) and its inverse.
double grid_cdf(const DensityGrid& grid, double x);
double grid_quantile(const DensityGrid& grid, double u);

class MapModel {
 public:
  explicit MapModel(double gamma);

  double gamma() const { return gamma_; }
  bool has_density() const { return density_.bins > 0; }
  const DensityGrid& density() const;
  void set_density(DensityGrid grid);

  double apply(double x) const;
  double derivative(double x) const;

  // Same contract as left_preimage, accelerated by a precomputed inverse
  // table plus Newton polish.
  double left_inverse(double y) const;

  // Density value at x from the grid.
  double density_at(double x) const;

  // Draw from the grid law: cell by inverse CDF, uniform within the cell.
  double sample_invariant(RngStream& rng) const;

  // One step of the reversed chain: pick a preimage of y with probability
  // proportional to h(x)/|T'(x)|.
  double step_chain(double y, RngStream& rng) const;

  // The unnormalized branch weights h(x)/(h(y) |T'(x)|); their sum is 1
  // exactly when h is the exact invariant density.
  struct KernelWeights {
    double x_left, x_right;
    double w_left, w_right;
  };
  KernelWeights kernel_weights(double y) const;

 private:
  double newton_left_inverse(double y, double x0) const;

  double gamma_;
  double pow2g_;       // 2^gamma
  double deriv_coef_;  // 2^gamma (1+gamma)
  DensityGrid density_;
  std::vector<double> cum_;        // cumulative cell masses for sampling
  std::vector<double> inv_table_;  // left-branch inverse at uniform y knots
  double inv_step_ = 0.0;
};

struct Trajectory {
  enum class Kind { orbit, chain };
  Kind kind = Kind::orbit;
  double gamma = 0.0;
  std::uint64_t seed = 0;  // informational, recorded in exports
  std::vector<double> values;
};

// Forward orbit: values[i] = T^{i+1}(x0). x0 = nullopt draws a stationary
// start from the grid.
Trajectory simulate_orbit(const MapModel& m, long n, std::optional<double> x0,
                          RngStream& rng);

// Reversed chain: values[0] is the initial state (y0 or a stationary draw),
// then n-1 kernel steps, so T(values[i+1]) = values[i] up to the preimage
// tolerance.
Trajectory simulate_chain(const MapModel& m, long n, std::optional<double> y0,
                          RngStream& rng);

}  // namespace couplab::dynamics
