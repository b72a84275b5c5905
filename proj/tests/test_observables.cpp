#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "couplab/observables.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace couplab;
using namespace couplab::observables;

namespace {

Observable power_observable(double exponent) {
  Observable f;
  f.pieces.push_back(
      Piece{0.0, 1.0, Piece::Kind::power, exponent, 1.0, 0.0, 1.0});
  return f;
}

const dynamics::MapModel& model_gamma025() {
  static dynamics::MapModel m = [] {
    dynamics::MapModel mm(0.25);
    mm.set_density(dynamics::build_density(0.25, 4096));
    return mm;
  }();
  return m;
}

TailFunction synthetic_power_steps(double slope) {
  std::vector<double> ts, hs;
  for (int i = 0; i <= 60; ++i) {
    double t = std::pow(10.0, 3.0 * i / 60.0);
    ts.push_back(t);
    hs.push_back(std::min(1.0, std::pow(t, -slope)));
  }
  return empirical_tail(std::move(ts), std::move(hs));
}

}  // namespace

TEST_SUITE("observables") {

TEST_CASE("tail function forms") {
  TailFunction p = power_tail(2.0, 3.0);
  CHECK(p.at(1.0) == 1.0);
  CHECK(p.at(2.0) == 1.0);
  CHECK(p.at(4.0) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(p.at(20.0) == doctest::Approx(1e-3).epsilon(1e-12));
  double prev = 1.0;
  for (int i = 0; i <= 50; ++i) {
    double h = p.at(0.1 * std::pow(1.3, i));
    CHECK(h <= prev + 1e-15);
    prev = h;
  }
  CHECK_THROWS_AS(p.at(-0.5), std::domain_error);
  CHECK_THROWS_AS(power_tail(0.0, 3.0), std::domain_error);
  CHECK_THROWS_AS(power_tail(1.0, -1.0), std::domain_error);
  // x H(x) integrable requires decay faster than x^{-2}
  CHECK_THROWS_AS(power_tail(1.0, 2.0), std::domain_error);
  CHECK_THROWS_AS(power_tail(1.0, 1.5), std::domain_error);

  TailFunction ind = indicator_tail(0.5);
  CHECK(ind.at(0.3) == 1.0);
  CHECK(ind.at(0.499999) == 1.0);
  CHECK(ind.at(0.5) == 0.0);
  CHECK(ind.at(2.0) == 0.0);
  CHECK_THROWS_AS(indicator_tail(0.0), std::domain_error);

  TailFunction e = empirical_tail({1.0, 2.0, 4.0}, {0.5, 0.25, 0.0});
  CHECK(e.at(0.5) == 1.0);
  CHECK(e.at(1.0) == 0.5);
  CHECK(e.at(1.5) == 0.5);
  CHECK(e.at(2.0) == 0.25);
  CHECK(e.at(3.9) == 0.25);
  CHECK(e.at(4.0) == 0.0);
  CHECK(e.at(100.0) == 0.0);
  // rising steps are clamped back to non-increasing
  TailFunction clamped = empirical_tail({1.0, 2.0, 4.0}, {0.5, 0.6, 0.0});
  CHECK(clamped.at(2.0) == 0.5);
  CHECK_THROWS_AS(empirical_tail({2.0, 1.0}, {0.5, 0.2}),
                  std::invalid_argument);
  CHECK_THROWS_AS(empirical_tail({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(empirical_tail({1.0}, {0.5, 0.2}), std::invalid_argument);
  // heavy unbounded tail (fitted exponent 1.5) is not integrable
  auto make_heavy = [] {
    std::vector<double> ts, hs;
    for (int i = 0; i <= 40; ++i) {
      double t = std::pow(10.0, 2.0 * i / 40.0);
      ts.push_back(t);
      hs.push_back(std::min(1.0, std::pow(t, -1.5)));
    }
    return empirical_tail(ts, hs);
  };
  CHECK_THROWS_AS(make_heavy(), std::invalid_argument);
  CHECK_NOTHROW(synthetic_power_steps(3.0));
}

TEST_CASE("observable evaluation") {
  Observable id = identity_observable();
  CHECK(id.bv_bound == 1.0);
  CHECK(eval_observable(id, 0.3) == 0.3);
  CHECK(eval_observable(id, 0.0) == 0.0);  // interval is open
  CHECK(eval_observable(id, 1.0) == 0.0);

  Observable f = power_observable(-0.2);
  CHECK(eval_observable(f, 0.5) ==
        doctest::Approx(1.148698354997035).epsilon(1e-12));

  Observable two;
  two.pieces.push_back(Piece{0.0, 0.25, Piece::Kind::identity, 1.0, 1.0, 0.0, 1.0});
  two.pieces.push_back(
      Piece{0.5, 1.0, Piece::Kind::affine, 1.0, -2.0, 1.0, 1.0});
  CHECK(eval_observable(two, 0.3) == 0.0);  // between the pieces
  CHECK(eval_observable(two, 0.1) == 0.1);
  CHECK(eval_observable(two, 0.75) == doctest::Approx(-0.5).epsilon(1e-15));

  Observable ind;
  ind.pieces.push_back(
      Piece{0.25, 0.75, Piece::Kind::indicator, 1.0, 1.0, 0.0, -1.0});
  CHECK(eval_observable(ind, 0.5) == -1.0);

  // cap at 1e12 with a visible counter
  Observable spike = power_observable(-3.0);
  std::uint64_t capped = 0;
  CHECK(eval_observable(spike, 1e-6, &capped) == 1e12);
  CHECK(capped == 1);
  spike.pieces[0].sign = -1.0;
  CHECK(eval_observable(spike, 1e-6, &capped) == -1e12);
  CHECK(capped == 2);
  CHECK(eval_observable(spike, 0.5, &capped) == doctest::Approx(-8.0));
  CHECK(capped == 2);
}

TEST_CASE("variation stays under the declared bound") {
  Observable f;
  f.pieces.push_back(Piece{0.0, 0.5, Piece::Kind::affine, 1.0, 2.0, 0.0, 1.0});
  f.pieces.push_back(Piece{0.5, 1.0, Piece::Kind::affine, 1.0, -1.0, 1.0, 1.0});
  f.bv_bound = 3.5;  // rise 1, drop to 0 at the junction, rise 0.5, fall 0.5
  RngStream rng(derive_key(31, "bv-partition"));
  std::vector<double> xs{0.0, 0.5, 1.0};
  for (int i = 0; i < 2000; ++i) xs.push_back(rng.next_unit());
  std::sort(xs.begin(), xs.end());
  double tv = 0.0;
  for (std::size_t i = 1; i < xs.size(); ++i)
    tv += std::abs(eval_observable(f, xs[i]) - eval_observable(f, xs[i - 1]));
  CHECK(tv <= f.bv_bound + 1e-9);
}

TEST_CASE("centering against the grid law") {
  const auto& m = model_gamma025();
  const auto& g = m.density();

  // identity: the quadrature must reproduce the exact cell-midpoint sum
  double mid_sum = 0.0;
  for (int i = 0; i < g.bins; ++i)
    mid_sum += g.values[i] / g.bins * (i + 0.5) / g.bins;
  Observable id = identity_observable();
  double c_id = center_on_grid(id, g);
  CHECK(c_id == doctest::Approx(mid_sum).epsilon(1e-12));

  // against a Monte Carlo draw from the same grid
  RngStream rng(derive_key(32, "center-mc"));
  std::vector<double> draws(100000);
  for (auto& d : draws) d = m.sample_invariant(rng);
  CHECK(testsup::mean_of(draws) == doctest::Approx(c_id).epsilon(0.01));
  double v_id = second_moment_on_grid(id, g, c_id);
  CHECK(testsup::variance_of(draws) == doctest::Approx(v_id).epsilon(0.03));

  // indicator of (0, 1/2): center = mass, spread = c(1-c) exactly
  Observable half;
  half.pieces.push_back(
      Piece{0.0, 0.5, Piece::Kind::indicator, 1.0, 1.0, 0.0, 1.0});
  double c_half = center_on_grid(half, g);
  CHECK(c_half == doctest::Approx(dynamics::grid_cdf(g, 0.5)).epsilon(1e-12));
  CHECK(second_moment_on_grid(half, g, c_half) ==
        doctest::Approx(c_half * (1.0 - c_half)).epsilon(1e-12));

  // affine transport of the identity center
  Observable aff;
  aff.pieces.push_back(
      Piece{0.0, 1.0, Piece::Kind::affine, 1.0, 2.0, 1.0, 1.0});
  CHECK(center_on_grid(aff, g) ==
        doctest::Approx(2.0 * c_id + 1.0).epsilon(1e-12));
}

TEST_CASE("empirical tail of an observable") {
  const auto& m = model_gamma025();

  SUBCASE("bounded observable has a bounded tail") {
    RngStream rng(derive_key(33, "tail-id"));
    TailFunction t = tail_of_observable(identity_observable(), m, 20000, 48, rng);
    CHECK(t.form == TailFunction::Form::empirical);
    CHECK(t.hs.back() == 0.0);
    CHECK(t.at(1.0) == 0.0);  // |f| < 1 everywhere
    for (std::size_t i = 1; i < t.hs.size(); ++i) CHECK(t.hs[i] <= t.hs[i - 1]);
  }

  SUBCASE("power blowup reproduces the map's tail exponent") {
    // nu[0,eps] ~ eps^{1-gamma}, so |f|=x^{-1/5} has tail exponent
    // 5(1-gamma) = 3.75 at gamma = 1/4; fitted over t in [2,4] where the
    // grid still resolves the density spike
    RngStream rng(derive_key(7777, "probe-tail"));
    TailFunction t = tail_of_observable(power_observable(-0.2), m, 400000, 64, rng);
    std::vector<double> ts, hs;
    for (std::size_t i = 0; i < t.ts.size(); ++i) {
      if (t.ts[i] < 2.0 || t.ts[i] > 4.0) continue;
      if (t.hs[i] <= 0.0 || t.hs[i] >= 1.0) continue;
      ts.push_back(t.ts[i]);
      hs.push_back(t.hs[i]);
    }
    CHECK(ts.size() >= 10);
    double slope = testsup::loglog_slope(ts, hs);
    CHECK(slope <= -3.75 * 0.85);
    CHECK(slope >= -3.75 * 1.15);
  }

  SUBCASE("doubling the sample moves the tail within the noise band") {
    RngStream r1(derive_key(34, "tail-a"));
    RngStream r2(derive_key(35, "tail-b"));
    TailFunction a = tail_of_observable(power_observable(-0.2), m, 200000, 64, r1);
    TailFunction b = tail_of_observable(power_observable(-0.2), m, 400000, 64, r2);
    double sup = 0.0;
    for (double t : {1.1, 1.3, 1.7, 2.2, 3.0, 4.0, 6.0, 9.0, 15.0, 25.0})
      sup = std::max(sup, std::abs(a.at(t) - b.at(t)));
    CHECK(sup <= 0.04);  // Monte Carlo plus knot quantization
  }

  SUBCASE("reproducible under the same stream") {
    RngStream r1(derive_key(36, "tail-rep"));
    RngStream r2(derive_key(36, "tail-rep"));
    TailFunction a = tail_of_observable(power_observable(-0.2), m, 5000, 32, r1);
    TailFunction b = tail_of_observable(power_observable(-0.2), m, 5000, 32, r2);
    CHECK(a.ts == b.ts);
    CHECK(a.hs == b.hs);
  }

  SUBCASE("guards") {
    RngStream rng(derive_key(37, "tail-guard"));
    CHECK_THROWS_AS(tail_of_observable(identity_observable(), m, 50, 32, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("moment condition verdicts") {
  // gamma=1/4, p=3: critical exponent 3*(3/4)/(1/4) = 9
  CHECK(check_moment_condition(power_tail(1.0, 9.5), 0.25, 3.0) ==
        Verdict::holds);
  CHECK(check_moment_condition(power_tail(1.0, 9.0), 0.25, 3.0) ==
        Verdict::fails);
  CHECK(check_moment_condition(power_tail(1.0, 8.0), 0.25, 3.0) ==
        Verdict::fails);
  CHECK(check_moment_condition(indicator_tail(5.0), 0.25, 3.0) ==
        Verdict::holds);
  CHECK(check_moment_condition(indicator_tail(5.0), 0.3, 2.5) ==
        Verdict::holds);
  CHECK_THROWS_AS(check_moment_condition(power_tail(1.0, 12.0), 0.45, 3.0),
                  std::domain_error);
  CHECK_THROWS_AS(check_moment_condition(power_tail(1.0, 12.0), 1.1, 2.0),
                  std::domain_error);
  CHECK_THROWS_AS(check_moment_condition(power_tail(1.0, 12.0), 0.25, 0.5),
                  std::domain_error);

  // empirical tails: fitted exponent against the critical one, 0.1 band
  CHECK(check_moment_condition(synthetic_power_steps(9.5), 0.25, 3.0) ==
        Verdict::holds);
  CHECK(check_moment_condition(synthetic_power_steps(8.5), 0.25, 3.0) ==
        Verdict::fails);
  CHECK(check_moment_condition(synthetic_power_steps(9.05), 0.25, 3.0) ==
        Verdict::marginal);
  // bounded-range empirical tail always integrates
  CHECK(check_moment_condition(empirical_tail({1.0, 2.0, 4.0}, {0.5, 0.25, 0.0}),
                               0.25, 3.0) == Verdict::holds);

  // closed-form agreement on a (b, p, gamma) lattice
  for (double gamma : {0.2, 0.3})
    for (double p : {2.2, 2.6})
      for (double b : {3.0, 6.0, 9.0, 12.0, 15.0}) {
        double crit = p * (1.0 - gamma) / (1.0 - p * gamma);
        Verdict want = b > crit ? Verdict::holds : Verdict::fails;
        CHECK(check_moment_condition(power_tail(1.0, b), gamma, p) == want);
      }
}

TEST_CASE("growth condition verdicts") {
  // gamma=1/4, p=2.5: critical exponent 2.5*0.75/0.375 = 5
  CHECK(check_lambda_condition(power_tail(1.0, 5.0), 0.25, 2.5) ==
        Verdict::holds);
  CHECK(check_lambda_condition(power_tail(1.0, 6.0), 0.25, 2.5) ==
        Verdict::holds);
  CHECK(check_lambda_condition(power_tail(1.0, 4.99), 0.25, 2.5) ==
        Verdict::fails);
  CHECK(check_lambda_condition(indicator_tail(2.0), 0.25, 2.5) ==
        Verdict::holds);

  // boundary p = 1/gamma admits only compactly supported tails
  CHECK(check_lambda_condition(indicator_tail(1.0), 0.25, 4.0) ==
        Verdict::holds);
  CHECK_THROWS_AS(check_lambda_condition(power_tail(1.0, 6.0), 0.25, 4.0),
                  std::domain_error);
  CHECK_THROWS_AS(check_lambda_condition(power_tail(1.0, 6.0), 0.25, 2.0),
                  std::domain_error);
  CHECK_THROWS_AS(check_lambda_condition(power_tail(1.0, 6.0), 0.25, 4.2),
                  std::domain_error);

  CHECK(check_lambda_condition(synthetic_power_steps(5.3), 0.25, 2.5) ==
        Verdict::holds);
  CHECK(check_lambda_condition(synthetic_power_steps(4.5), 0.25, 2.5) ==
        Verdict::fails);
  CHECK(check_lambda_condition(synthetic_power_steps(5.05), 0.25, 2.5) ==
        Verdict::marginal);
}

}  // TEST_SUITE
