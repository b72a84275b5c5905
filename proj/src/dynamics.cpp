#include "couplab/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "couplab/errors.hpp"

namespace couplab::dynamics {

namespace {

void check_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::domain_error("gamma outside (0,1)");
}

constexpr double kPreimageTol = 1e-13;  // on |T(x) - y|, tighter than the
                                        // 1e-12 contract

// Solves x + 2^g x^{1+g} = y on [0, 1/2) by Newton with a bisection bracket.
// g is increasing and convex there, so once an iterate lands right of the
// root Newton descends monotonically; the bracket catches everything else.
double solve_left(double gamma, double pow2g, double y, double x0,
                  double* xg_out = nullptr) {
  if (y == 0.0) {
    if (xg_out) *xg_out = 0.0;
    return 0.0;
  }
  double lo = 0.0, hi = 0.5;
  double x = std::clamp(x0, 1e-300, 0.5);
  double xg = 0.0;
  for (int it = 0; it < 200; ++it) {
    xg = std::pow(x, gamma);
    double g = x + pow2g * x * xg - y;
    if (std::abs(g) <= kPreimageTol) {
      if (xg_out) *xg_out = xg;
      return x;
    }
    if (g > 0.0)
      hi = x;
    else
      lo = x;
    double dg = 1.0 + pow2g * (1.0 + gamma) * xg;
    double xn = x - g / dg;
    if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
    if (xn == x) break;
    x = xn;
  }
  if (xg_out) *xg_out = xg;
  return x;
}

}  // namespace

double apply_map(double gamma, double x) {
  check_gamma(gamma);
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("x outside [0,1]");
  double y;
  if (x < 0.5)
    y = x * (1.0 + std::pow(2.0, gamma) * std::pow(x, gamma));
  else
    y = 2.0 * x - 1.0;
  return std::clamp(y, 0.0, 1.0);
}

double map_derivative(double gamma, double x) {
  check_gamma(gamma);
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("x outside [0,1]");
  if (x < 0.5)
    return 1.0 + std::pow(2.0, gamma) * (1.0 + gamma) * std::pow(x, gamma);
  return 2.0;
}

double left_preimage(double gamma, double y) {
  check_gamma(gamma);
  if (!(y >= 0.0 && y < 1.0)) throw std::domain_error("y outside [0,1)");
  return solve_left(gamma, std::pow(2.0, gamma), y, 0.5 * y);
}

// ---------------------- Ulam transfer matrix ----------------------

namespace {

struct TransferRows {
  // Row i of the cell-to-cell matrix: entries (col, weight), weights sum to 1.
  std::vector<int> offsets;
  std::vector<int> cols;
  std::vector<double> weights;
};

void check_bins(int bins) {
  if (bins < 256 || (bins & (bins - 1)) != 0)
    throw std::domain_error("bins must be a power of two >= 256");
}

TransferRows build_rows(double gamma, int bins) {
  const int half = bins / 2;
  const double h = 1.0 / bins;
  const double pow2g = std::pow(2.0, gamma);

  // Left-branch preimages of all cell boundaries, warm-started in sequence.
  std::vector<double> xlb(bins + 1);
  xlb[0] = 0.0;
  for (int j = 1; j < bins; ++j)
    xlb[j] = solve_left(gamma, pow2g, j * h, xlb[j - 1] + 0.5 * h);
  xlb[bins] = 0.5;

  TransferRows rows;
  rows.offsets.reserve(bins + 1);
  rows.offsets.push_back(0);
  int j = 0;
  for (int i = 0; i < half; ++i) {
    double a = i * h, b = (i + 1) * h;
    while (j + 1 < bins && xlb[j + 1] <= a) ++j;
    for (int k = j; k < bins && xlb[k] < b; ++k) {
      double overlap = std::min(b, xlb[k + 1]) - std::max(a, xlb[k]);
      if (overlap > 0.0) {
        rows.cols.push_back(k);
        rows.weights.push_back(overlap / h);
      }
    }
    rows.offsets.push_back(static_cast<int>(rows.cols.size()));
  }
  for (int i = half; i < bins; ++i) {
    int target = 2 * i - bins;
    rows.cols.push_back(target);
    rows.weights.push_back(0.5);
    rows.cols.push_back(target + 1);
    rows.weights.push_back(0.5);
    rows.offsets.push_back(static_cast<int>(rows.cols.size()));
  }
  return rows;
}

void apply_rows(const TransferRows& rows, const std::vector<double>& mu,
                std::vector<double>& out) {
  std::fill(out.begin(), out.end(), 0.0);
  const int bins = static_cast<int>(mu.size());
  for (int i = 0; i < bins; ++i) {
    double m = mu[i];
    for (int e = rows.offsets[i]; e < rows.offsets[i + 1]; ++e)
      out[rows.cols[e]] += m * rows.weights[e];
  }
}

}  // namespace

DensityGrid build_density(double gamma, int bins, double tol, long max_iters) {
  check_gamma(gamma);
  check_bins(bins);
  if (!(tol > 0.0)) throw std::domain_error("tol must be positive");

  TransferRows rows = build_rows(gamma, bins);
  std::vector<double> mu(bins, 1.0 / bins), next(bins);
  double residual = 0.0;
  long it = 0;
  for (; it < max_iters; ++it) {
    apply_rows(rows, mu, next);
    residual = 0.0;
    double mass = 0.0;
    for (int i = 0; i < bins; ++i) {
      residual += std::abs(next[i] - mu[i]);
      mass += next[i];
    }
    for (int i = 0; i < bins; ++i) next[i] /= mass;
    mu.swap(next);
    if (residual <= tol) break;
  }
  if (residual > tol)
    throw ConvergenceError("build_density: residual above tol after max_iters",
                           residual);

  DensityGrid grid;
  grid.bins = bins;
  grid.gamma = gamma;
  grid.values.resize(bins);
  for (int i = 0; i < bins; ++i) grid.values[i] = mu[i] * bins;
  grid.residual = residual;
  grid.iterations = it + 1;
  return grid;
}

double transfer_l1_residual(const DensityGrid& grid) {
  check_gamma(grid.gamma);
  check_bins(grid.bins);
  TransferRows rows = build_rows(grid.gamma, grid.bins);
  std::vector<double> mu(grid.bins), image(grid.bins);
  for (int i = 0; i < grid.bins; ++i) mu[i] = grid.values[i] / grid.bins;
  apply_rows(rows, mu, image);
  double r = 0.0;
  for (int i = 0; i < grid.bins; ++i) r += std::abs(image[i] - mu[i]);
  return r;
}

double grid_cdf(const DensityGrid& grid, double x) {
  check_bins(grid.bins);
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double pos = x * grid.bins;
  int cell = static_cast<int>(pos);
  double acc = 0.0;
  for (int i = 0; i < cell; ++i) acc += grid.values[i];
  acc += grid.values[cell] * (pos - cell);
  return std::min(1.0, acc / grid.bins);
}

double grid_quantile(const DensityGrid& grid, double u) {
  check_bins(grid.bins);
  if (!(u >= 0.0 && u <= 1.0)) throw std::domain_error("u outside [0,1]");
  if (u == 0.0) return 0.0;
  if (u == 1.0) return 1.0;
  double target = u * grid.bins;
  double acc = 0.0;
  for (int i = 0; i < grid.bins; ++i) {
    double next = acc + grid.values[i];
    if (next >= target) {
      double frac = grid.values[i] > 0.0 ? (target - acc) / grid.values[i] : 0.5;
      return (i + frac) / grid.bins;
    }
    acc = next;
  }
  return 1.0;
}

// ---------------------- MapModel ----------------------

namespace {
constexpr int kInvKnots = (1 << 16) + 1;
// Below this y the inverse table is too coarse against the x^{1+gamma}
// curvature; solve directly.
constexpr double kDirectCut = 1.0 / 1024.0;
}  // namespace

MapModel::MapModel(double gamma) : gamma_(gamma) {
  check_gamma(gamma);
  pow2g_ = std::pow(2.0, gamma);
  deriv_coef_ = pow2g_ * (1.0 + gamma);
  inv_step_ = 1.0 / (kInvKnots - 1);
  inv_table_.resize(kInvKnots);
  inv_table_[0] = 0.0;
  for (int j = 1; j < kInvKnots - 1; ++j)
    inv_table_[j] = solve_left(gamma_, pow2g_, j * inv_step_,
                               inv_table_[j - 1] + 0.25 * inv_step_);
  inv_table_[kInvKnots - 1] = 0.5;
}

const DensityGrid& MapModel::density() const {
  if (!has_density()) throw std::logic_error("MapModel: density not built");
  return density_;
}

void MapModel::set_density(DensityGrid grid) {
  check_bins(grid.bins);
  if (grid.gamma != gamma_)
    throw std::invalid_argument("MapModel: density gamma mismatch");
  density_ = std::move(grid);
  cum_.resize(density_.bins);
  double acc = 0.0;
  const double h = 1.0 / density_.bins;
  for (int i = 0; i < density_.bins; ++i) {
    acc += density_.values[i] * h;
    cum_[i] = acc;
  }
  cum_.back() = 1.0;
}

double MapModel::apply(double x) const { return apply_map(gamma_, x); }

double MapModel::derivative(double x) const {
  return map_derivative(gamma_, x);
}

double MapModel::newton_left_inverse(double y, double x0) const {
  return solve_left(gamma_, pow2g_, y, x0);
}

double MapModel::left_inverse(double y) const {
  if (!(y >= 0.0 && y < 1.0)) throw std::domain_error("y outside [0,1)");
  if (y < kDirectCut) return newton_left_inverse(y, 0.5 * y);
  double pos = y / inv_step_;
  int j = static_cast<int>(pos);
  double frac = pos - j;
  double x0 = inv_table_[j] * (1.0 - frac) + inv_table_[j + 1] * frac;
  return newton_left_inverse(y, x0);
}

double MapModel::density_at(double x) const {
  const DensityGrid& g = density();
  int idx = std::min(g.bins - 1, static_cast<int>(x * g.bins));
  return g.values[idx];
}

double MapModel::sample_invariant(RngStream& rng) const {
  const DensityGrid& g = density();
  double u = rng.next_unit();
  auto it = std::lower_bound(cum_.begin(), cum_.end(), u);
  int idx = static_cast<int>(it - cum_.begin());
  if (idx >= g.bins) idx = g.bins - 1;
  double v = rng.next_unit();
  return (idx + v) / g.bins;
}

MapModel::KernelWeights MapModel::kernel_weights(double y) const {
  const DensityGrid& g = density();
  KernelWeights kw{};
  kw.x_right = 0.5 * (y + 1.0);
  double hy = density_at(y);
  if (!(hy > 0.0)) throw DegenerateError("kernel_weights: zero density at y");
  double hr = g.values[std::min(g.bins - 1, static_cast<int>(kw.x_right * g.bins))];
  kw.w_right = hr / (2.0 * hy);
  if (y >= 1.0) {
    kw.x_left = 0.5;
    kw.w_left = 0.0;
    return kw;
  }
  double xg = 0.0;
  if (y < kDirectCut) {
    kw.x_left = solve_left(gamma_, pow2g_, y, 0.5 * y, &xg);
  } else {
    double pos = y / inv_step_;
    int j = static_cast<int>(pos);
    double frac = pos - j;
    double x0 = inv_table_[j] * (1.0 - frac) + inv_table_[j + 1] * frac;
    kw.x_left = solve_left(gamma_, pow2g_, y, x0, &xg);
  }
  double deriv = 1.0 + deriv_coef_ * xg;
  double hl = g.values[std::min(g.bins - 1, static_cast<int>(kw.x_left * g.bins))];
  kw.w_left = hl / (deriv * hy);
  return kw;
}

double MapModel::step_chain(double y, RngStream& rng) const {
  KernelWeights kw = kernel_weights(y);
  double s = kw.w_left + kw.w_right;
  if (!(s > 0.0)) throw DegenerateError("step_chain: zero total weight");
  double u = rng.next_unit();
  return u * s < kw.w_left ? kw.x_left : kw.x_right;
}

// ---------------------- trajectories ----------------------

Trajectory simulate_orbit(const MapModel& m, long n, std::optional<double> x0,
                          RngStream& rng) {
  if (n < 1) throw std::invalid_argument("simulate_orbit: n < 1");
  double x = x0 ? *x0 : m.sample_invariant(rng);
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("x0 outside [0,1]");
  Trajectory t;
  t.kind = Trajectory::Kind::orbit;
  t.gamma = m.gamma();
  t.values.resize(n);
  for (long i = 0; i < n; ++i) {
    x = m.apply(x);
    t.values[i] = x;
  }
  return t;
}

Trajectory simulate_chain(const MapModel& m, long n, std::optional<double> y0,
                          RngStream& rng) {
  if (n < 1) throw std::invalid_argument("simulate_chain: n < 1");
  double y = y0 ? *y0 : m.sample_invariant(rng);
  if (!(y >= 0.0 && y <= 1.0)) throw std::domain_error("y0 outside [0,1]");
  Trajectory t;
  t.kind = Trajectory::Kind::chain;
  t.gamma = m.gamma();
  t.values.resize(n);
  t.values[0] = y;
  for (long i = 1; i < n; ++i) {
    y = m.step_chain(y, rng);
    t.values[i] = y;
  }
  return t;
}

}  // namespace couplab::dynamics
