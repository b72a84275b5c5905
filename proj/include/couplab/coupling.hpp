#pragma once

#include <cstdint>
#include <vector>

#include "couplab/dynamics.hpp"
#include "couplab/observables.hpp"
#include "couplab/rng.hpp"

namespace couplab::coupling {

// Which block-length schedule drives the construction. rate_a targets the
// n^{1/p} (log n)^{1/2-1/p} normalization, rate_b the
// n^{1/p} (log n)^{1/2} (log log n)^{(1+eps)/p} one.
enum class Variant { rate_a, rate_b };

// Dyadic block-length exponent m(L):
//   rate_a: floor(2L/p - (2/p) log2 L)
//   rate_b: floor(2L/p + (2(1+eps)/p) log2(1 v log L))
// clamped to [0, L]; L = 0 gives 0. Accepts p in [2, 3] so the degenerate
// p = 2 endpoint is queryable; schedules proper require p > 2.
int block_exponent(double p, Variant variant, double epsilon, int L);

struct BlockSchedule {
  double p = 2.5;
  Variant variant = Variant::rate_a;
  double epsilon = 0.0;  // rate_b only
  int L_max = 0;
  std::vector<int> m;  // m[L] for L = 0..L_max
};

// Fills m via block_exponent. Requires p in (2, 3], L_max >= 0, and
// epsilon > 0 when variant is rate_b.
BlockSchedule make_schedule(double p, Variant variant, double epsilon,
                            int L_max);

// Consecutive integer indices [first, last], both inclusive.
struct BlockRange {
  long first = 0;
  long last = 0;
};

// The 2^{L-m(L)} blocks of length 2^{m(L)} partitioning (2^L, 2^{L+1}]:
// block k is (2^L + (k-1) 2^m, 2^L + k 2^m].
std::vector<BlockRange> block_layout(const BlockSchedule& s, int L);

// The normalization a_n the discrepancy is measured against. sigma_zero
// selects the degenerate-variance rate n^{1/p}; otherwise rate_a gives
// n^{1/p} (log n)^{1/2-1/p} and rate_b gives
// n^{1/p} (log n)^{1/2} (log log n)^{(1+eps)/p}, log terms floored at 1.
double rate_normalizer(double p, Variant variant, double epsilon,
                       bool sigma_zero, double n);

// Conditional law of a centered block sum, queried as a CDF with left
// limits. resolution() bounds the quantile-transform clamp window.
class CondCdf {
 public:
  virtual ~CondCdf() = default;
  virtual double value(double x) const = 0;       // F(x)
  virtual double left_value(double x) const = 0;  // F(x-)
  virtual long resolution() const = 0;
};

// Step CDF of a Monte Carlo sample. Queries treat values within a relative
// 1e-9 window as equal, so atoms reconstructed through numerical inversion
// of the map branches still register as atoms.
class EmpiricalCdf final : public CondCdf {
 public:
  explicit EmpiricalCdf(std::vector<double> sample);  // sorts; empty throws
  double value(double x) const override;
  double left_value(double x) const override;
  long resolution() const override;
  const std::vector<double>& points() const { return xs_; }

 private:
  std::vector<double> xs_;
};

// Exact N(0, s^2) law, for transform tests against a continuous CDF. The
// resolution only sets the clamp window, wide enough to never bite in
// double precision unless asked to.
class NormalCdf final : public CondCdf {
 public:
  explicit NormalCdf(double s, long resolution = 1000000000000L);
  double value(double x) const override;
  double left_value(double x) const override;
  long resolution() const override { return res_; }

 private:
  double s_;
  long res_;
};

// Sorted sample of M_cond centered block sums: each replicate runs blocklen
// kernel steps from y0 and sums f - center. Per-replicate stream keys are
// drawn from rng up front so replicates can run concurrently with a result
// independent of the worker count. Requires a built density, blocklen >= 1,
// M_cond >= 1000.
EmpiricalCdf conditional_cdf(const dynamics::MapModel& m,
                             const observables::Observable& f, double center,
                             double y0, long blocklen, long M_cond,
                             RngStream& rng);

// V = block_sigma * Phi^{-1}(F(U-) + delta (F(U) - F(U-))), the argument
// clamped into [1/(2M), 1 - 1/(2M)] with M = cdf.resolution(); *capped is
// bumped when the clamp bites. Throws DegenerateError when F(U-) = F(U) = 0
// or 1: U fell strictly outside the estimated support, so delta carries no
// information and the output would be pure clamp artifact.
double conditional_quantile_transform(const CondCdf& cdf, double block_sigma,
                                      double U, double delta,
                                      std::uint64_t* capped = nullptr);

// Binary Gaussian bridge realizing V = N_1 + ... + N_{2^m} with iid
// N(0, sigma^2) components: the left half-sum of s over 2^j slots is drawn
// from N(s/2, sigma^2 2^{j-1}/2). Leaves come back left to right and sum to
// V exactly.
std::vector<double> skorohod_split(double V, int m, double sigma,
                                   RngStream& rng);

// Where the coupled path comes from: the reversed-map stationary chain, or
// an iid Gaussian bench source that bypasses the dynamics entirely.
class PathSource {
 public:
  virtual ~PathSource() = default;
  // Fills centered increments x_1..x_n and the states they came from
  // (states[i] generates x[i]); bumps *capped on capped observable evals.
  virtual void path(long n, std::uint64_t seed, std::vector<double>& x,
                    std::vector<double>& states,
                    std::uint64_t* capped) const = 0;
  // Law of a centered block sum given the state preceding the block.
  virtual EmpiricalCdf block_cdf(double state, long blocklen, long M_cond,
                                 std::uint64_t key) const = 0;
};

class ChainSource final : public PathSource {
 public:
  // Keeps references; model must outlive the source and carry a density.
  ChainSource(const dynamics::MapModel& model,
              const observables::Observable& f);
  void path(long n, std::uint64_t seed, std::vector<double>& x,
            std::vector<double>& states, std::uint64_t* capped) const override;
  EmpiricalCdf block_cdf(double state, long blocklen, long M_cond,
                         std::uint64_t key) const override;
  double center() const { return center_; }

 private:
  const dynamics::MapModel& model_;
  const observables::Observable& f_;
  double center_;
};

// Unit-test source: increments are iid N(0,1), so a block sum given any
// state is exactly N(0, blocklen) and each conditional CDF replicate is a
// single sqrt(blocklen) Phi^{-1}(u) draw.
class IidGaussianSource final : public PathSource {
 public:
  void path(long n, std::uint64_t seed, std::vector<double>& x,
            std::vector<double>& states, std::uint64_t* capped) const override;
  EmpiricalCdf block_cdf(double state, long blocklen, long M_cond,
                         std::uint64_t key) const override;
};

struct CouplingRun {
  double gamma = 0.25;  // recorded for manifests; the source carries the map
  double p = 2.5;
  Variant variant = Variant::rate_a;
  double epsilon = 0.0;
  double sigma = 1.0;  // sigma(f); 0 selects the degenerate T = 0 path
  long n_total = 0;
  long M_cond = 1000;
  std::uint64_t seed = 0;
};

struct DiscrepancySeries {
  std::vector<long> n_grid;        // dyadic, 1..2^{N+1}
  std::vector<double> sup_disc;    // sup_{k <= n} |S_k - T_k|
  std::vector<double> normalized;  // sup_disc / a_n
  std::vector<double> level_sup;   // D_L for L = 0..N
};

struct BlockRecord {
  int L = 0;
  long k = 0;  // 1-based within the level
  double anchor = 0.0;
  double u = 0.0;  // centered block sum of the path
  double v = 0.0;  // its Gaussian image
};

struct CouplingResult {
  std::vector<double> x;  // centered increments, index i+1 at slot i
  std::vector<double> z;  // coupled Gaussian increments
  DiscrepancySeries series;
  std::vector<BlockRecord> blocks;
  std::uint64_t capped_events = 0;      // eval caps plus clamp hits
  std::uint64_t degenerate_blocks = 0;  // transform fell back to V = 0
  double z1_gap = 0.0;                  // |X_1 - Z'_1|
  double sup_total = 0.0;
  bool assembly_ok = false;  // sup <= z1_gap + sum of D_L, checked per run
};

// Runs the full construction over the dyadic envelope 2^{N+1} >= n_total:
// one stationary path, then per level L and block k the centered block sum
// U, its conditional CDF from the block-start state, the quantile transform
// to V with a dedicated uniform, and the bridge split into Z' increments.
// Z'_1 = sigma Phi^{-1}(delta_1). The whole output is a pure function of
// (seed, config).
CouplingResult build_coupling(const CouplingRun& run, const PathSource& source);

struct DiscrepancySummary {
  std::vector<long> n_grid;  // common grid restricted to n >= 16
  std::vector<double> med, lo_quartile, hi_quartile;  // of normalized
  double slope = 0.0;  // log-log fit of the unnormalized median
  double rise = 0.0;   // normalized median, last over first grid point
  bool consistent = false;
};

// Pools >= 10 runs sharing one n grid: per-n quartiles of the normalized
// discrepancy, the growth slope of the unnormalized median over n >= 16,
// and the consistency verdict slope <= 1/p + 0.08 and rise <= 1.25.
DiscrepancySummary discrepancy_stats(const std::vector<DiscrepancySeries>& runs,
                                     double p);

// One replicate of the level-L anchored discrepancy
//   D_L = sup over prefixes of the level segment of |sum (x_i - z_i)|.
// Chain side (map_side false): a stationary kernel-chain segment read
// forward, blocks conditioned on the state before each block. Map side: a
// stationary forward orbit, blocks conditioned on the state one past each
// block in orbit time, discrepancy accumulated over orbit suffixes. The two
// constructions are equal in law; anchor_out/v_out expose the first
// processed block for independence checks.
double level_discrepancy(const dynamics::MapModel& model,
                         const observables::Observable& f, double center,
                         const BlockSchedule& s, int L, double sigma,
                         long M_cond, std::uint64_t seed, bool map_side,
                         double* anchor_out = nullptr,
                         double* v_out = nullptr);

}  // namespace couplab::coupling
