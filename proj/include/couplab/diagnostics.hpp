#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "couplab/coupling.hpp"
#include "couplab/dynamics.hpp"
#include "couplab/observables.hpp"
#include "couplab/quantmix.hpp"

namespace couplab::diagnostics {

// How sigma2_series generates its stationary paths: kernel chain, forward
// orbit (equal in law by time reversal), or independent stationary draws
// (the shuffle surrogate, killing every covariance term).
enum class SeriesForm { chain, orbit, shuffled };

// Truncated long-run variance nu((f-c)^2) + 2 sum_{k=1..K} Cov(X_0, X_k),
// averaged over reps stationary paths of length 2K; se_out gets the
// between-path standard error. Warns on stderr when the last covariance
// term exceeds 10% of the total (truncation too short).
double sigma2_series(const dynamics::MapModel& m,
                     const observables::Observable& f, double center, int K,
                     long reps, std::uint64_t seed,
                     SeriesForm form = SeriesForm::chain,
                     double* se_out = nullptr);

// Sample variance of S_n / sqrt(n) over reps independent stationary paths.
// Requires n >= 1024, reps >= 100.
double sigma2_batch(const dynamics::MapModel& m,
                    const observables::Observable& f, double center, long n,
                    long reps, std::uint64_t seed);
double sigma2_batch(const coupling::PathSource& src, long n, long reps,
                    std::uint64_t seed);

struct VarianceReport {
  double sigma2_series = 0.0;
  double sigma2_batch = 0.0;
  int K_trunc = 0;
  double agreement = 0.0;  // |series - batch| / max(series, batch)
};

VarianceReport variance_report(const dynamics::MapModel& m,
                               const observables::Observable& f, double center,
                               int K, long reps_series, long n_batch,
                               long reps_batch, std::uint64_t seed);

// S_n / (sigma sqrt(n)) over reps stationary paths, for CLT checks.
std::vector<double> scaled_sums(const dynamics::MapModel& m,
                                const observables::Observable& f, double center,
                                double sigma, long n, long reps,
                                std::uint64_t seed);

struct W2Row {
  long n = 0;
  double w2_avg = 0.0;  // mean over start states of W2^2(cond law, N(0,n s^2))
  double denom = 0.0;   // sqrt(n) M3(Q, sqrt(n)), or sqrt(n) without a profile
  double ratio = 0.0;
};

struct W2Table {
  std::vector<W2Row> rows;
  double max_over_min = 0.0;  // of the ratios
  double tau = 0.0;           // Kendall tau of ratio vs n
  bool bounded = false;       // max_over_min <= 10
};

// Conditional-Gaussian transport check: for each n, W2^2 between the
// empirical conditional law of S_n given a stationary start state (M_cond
// samples via the source) and N(0, n sigma2), averaged over reps starts,
// against the mixed-moment envelope. The Gaussian-reference finite-M
// plug-in floor (kappa_M times the conditional sample variance) is
// subtracted from every draw; without it the floor grows linearly in n and
// fakes growth of the ratio. prof/q may be null: the denominator degrades
// to sqrt(n) (the iid bench, whose debiased numerator sits near zero).
W2Table w2_bound_check(const coupling::PathSource& src, double sigma2,
                       const quantmix::MixingProfile* prof,
                       const quantmix::QuantileFn* q,
                       const std::vector<long>& n_grid, long M_cond, long reps,
                       std::uint64_t seed);

struct TailRow {
  double lambda = 0.0;
  double p_hat = 0.0;  // P(max_{k<=n} |S_k| >= 5 lambda)
  double gauss = 0.0;  // exp(-lambda^2 / (c_fit n sigma2))
  double poly = 0.0;   // n lambda^{-3} (M3(Q, lambda) + sigma^3)
};

struct TailTable {
  std::vector<TailRow> rows;
  double c_fit = 0.0;
  bool shape_consistent = false;  // p_hat <= gauss + poly on the whole grid
};

// Maximal-inequality tail shape. The Gaussian constant is fitted as the
// envelope over bulk points (p_hat >= 0.05), so domination on the full grid
// genuinely constrains the tail beyond the bulk through the polynomial
// term. Requires reps >= 1e4. prof/q null drops the polynomial term.
TailTable maximal_tail(const coupling::PathSource& src, double sigma2,
                       const quantmix::MixingProfile* prof,
                       const quantmix::QuantileFn* q, long n,
                       const std::vector<double>& lambda_grid, long reps,
                       std::uint64_t seed);

struct CovRow {
  long i = 0;
  double lhs = 0.0;   // binned || E(X_i | Y_0) ||_1
  double rhs = 0.0;   // 8 int_0^{alpha(i)} Q
  double band = 0.0;  // Monte Carlo noise floor of lhs
  bool holds = false;
};

struct CovTable {
  std::vector<CovRow> rows;
  double margin_tau = 0.0;  // Kendall tau of (rhs - lhs) vs i
};

// Conditional-expectation bound: per lag i, || E(X_i | Y_0) ||_1 estimated
// by equal-mass binning of Y_0, against 8 int_0^{alpha(i)} Q(u) du. q is
// the quantile envelope of |f| itself (uncentered); the envelope class is
// defined through |f|, and int Q_{|f - c|} <= 2 int Q_{|f|} absorbs the
// centering. Warns on stderr when bins * 10 > reps. Requires reps >= 1e4.
CovTable covariance_bound_check(const dynamics::MapModel& m,
                                const observables::Observable& f, double center,
                                const quantmix::MixingProfile& prof,
                                const quantmix::QuantileFn& q,
                                const std::vector<long>& i_grid, int bins,
                                long reps, std::uint64_t seed);

// int_0^a Q(u) du over log-spaced panels.
double integral_Q(const quantmix::QuantileFn& q, double a);

// Sup distance between the empirical CDF of sample and a reference. The
// CondCdf overload uses the reference's left limits, so a sample tested
// against its own step CDF scores exactly 0.
double ks_distance(std::vector<double> sample, const coupling::CondCdf& ref);
double ks_distance(std::vector<double> sample,
                   const std::function<double(double)>& cdf);

// Kendall rank correlation, O(n^2), ties counted as discordant-neutral.
double kendall_tau(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace couplab::diagnostics
