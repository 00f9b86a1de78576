#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "qvi/penalty.hpp"

using namespace qvi;

TEST_CASE("smoothing branch values") {
  for (const double rho : {1.0, 0.1, 1e-3}) {
    CHECK(smoothed_plus(rho, -1.0) == 0.0);
    CHECK(smoothed_plus(rho, rho) == doctest::Approx(rho / 2.0).epsilon(1e-15));
  }
  CHECK(smoothed_plus(0.1, 0.05) == doctest::Approx(0.0125).epsilon(1e-15));
  CHECK(PenaltyParams(0.5).rho == 0.5);
  CHECK_THROWS_AS(PenaltyParams(0.0), ConfigError);
}

TEST_CASE("slope values and finite-difference agreement") {
  CHECK(smoothed_plus_prime(2.0, -5.0) == 0.0);
  for (const double rho : {1.0, 0.01}) CHECK(smoothed_plus_prime(rho, rho / 2.0) == 0.5);

  // Central differences inside the quadratic branch are exact up to
  // rounding, and straddling the kink at r = rho stays O(step).
  const double rho = 0.3, r = rho / 3.0;
  for (const double step : {1e-2, 1e-3, 1e-4}) {
    const double fd =
        oracle::central_diff([rho](double x) { return smoothed_plus(rho, x); }, r, step);
    CHECK(std::abs(fd - smoothed_plus_prime(rho, r)) <= 1e-12);
  }
  const double fd_kink =
      oracle::central_diff([rho](double x) { return smoothed_plus(rho, x); }, rho, 1e-3);
  CHECK(std::abs(fd_kink - smoothed_plus_prime(rho, rho)) <= 1e-3);
}

TEST_CASE("sandwich and monotonicity over sampled values") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> uni(-10.0, 10.0);
  for (const double rho : {1.0, 1e-2, 1e-4}) {
    const double half = rho / 2.0;
    for (int t = 0; t < 4000; ++t) {
      const double r = uni(rng);
      const double sp = smoothed_plus(rho, r);
      const double plus = std::max(0.0, r);
      // 0 <= r+ - sp <= rho/2, checked in the rearranged exact form.
      CHECK(sp >= 0.0);
      CHECK(sp <= plus);
      CHECK(sp >= plus - half);
      const double d = smoothed_plus_prime(rho, r);
      CHECK(d >= 0.0);
      CHECK(d <= 1.0);
      // T-monotone in the scalar sense.
      const double r2 = uni(rng);
      CHECK((smoothed_plus(rho, r) - smoothed_plus(rho, r2)) * (r - r2) >= 0.0);
    }
  }
}

TEST_CASE("smaller rho gives a larger smoothing") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> uni(-3.0, 3.0);
  for (int t = 0; t < 2000; ++t) {
    const double r = uni(rng);
    CHECK(smoothed_plus(1e-3, r) >= smoothed_plus(1e-1, r));
    CHECK(smoothed_plus(1e-1, r) >= smoothed_plus(1.0, r));
  }
}

TEST_CASE("nodewise superposition with lumped mass") {
  const auto s = assemble_space(16);
  Field v(16);
  v.values.setConstant(-0.2);
  CHECK(penalty_load(s, 0.5, v).values.cwiseAbs().maxCoeff() == 0.0);

  const double c = 2.0, rho = 0.7;
  v.values.setConstant(c);
  const DualField w = penalty_load(s, rho, v);
  for (int i = 0; i < 16; ++i)
    CHECK(w[i] == doctest::Approx(s.mass_lumped[i] * (c - rho / 2.0)).epsilon(1e-15));

  const Eigen::VectorXd d = penalty_slope_diag(s, rho, v);
  for (int i = 0; i < 16; ++i) CHECK(d[i] == doctest::Approx(s.mass_lumped[i]).epsilon(1e-15));
}

TEST_CASE("superposition operator is increasing") {
  const auto s = assemble_space(24);
  std::mt19937_64 rng(29);
  for (int t = 0; t < 40; ++t) {
    const Field v = oracle::random_field(rng, 24, -1.5, 1.5);
    Field w = v;
    const Field bump = oracle::random_field(rng, 24, 0.0, 1.0);
    w.values += bump.values;
    const DualField pv = penalty_load(s, 0.05, v);
    const DualField pw = penalty_load(s, 0.05, w);
    CHECK(order_leq(pv, pw, 0.0));
  }
}
