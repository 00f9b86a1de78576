#include <doctest.h>

#include <cmath>
#include <memory>
#include <numbers>

#include "oracles.hpp"
#include "qvi/obstacle.hpp"

using namespace qvi;

namespace {
constexpr double kPi = std::numbers::pi;

Field sine_interp(const DiscreteSpace& s, double amp = 1.0) {
  return interpolate(s, [amp](double x) { return amp * std::sin(kPi * x); });
}
} // namespace

TEST_CASE("constant map ignores its argument") {
  const auto s = assemble_space(12);
  Field psi(12);
  psi.values.setConstant(0.3);
  const ConstantObstacle map(psi);
  std::mt19937_64 rng(2);
  const Field u = oracle::random_field(rng, 12, -1.0, 1.0);
  CHECK(map.eval(u).values == psi.values);
  CHECK(map.deriv(u, u).values.cwiseAbs().maxCoeff() == 0.0);
  CHECK(map.lipschitz_estimate(u, 1.0) == 0.0);
}

TEST_CASE("inverse-Laplacian map: sign preservation and norm") {
  const auto s = assemble_space(48);
  const InverseLaplacianObstacle map(s);

  const Field zero(48);
  CHECK(v_norm(s, map.eval(zero)) == 0.0);

  std::mt19937_64 rng(7);
  const Field w = oracle::random_field(rng, 48, 0.0, 2.0);
  CHECK((map.eval(w).values.array() >= 0.0).all()); // discrete maximum principle

  // Operator norm is below the continuous bound 1/pi^2 plus a little slack.
  const double est = map.lipschitz_estimate(zero, 1.0);
  CHECK(est > 0.05);
  CHECK(est < 1.05 / (kPi * kPi));
  MESSAGE("inverse-Laplacian V-operator norm = ", est);
}

TEST_CASE("thermoforming: interpolated sine is nearly a fixed shape") {
  double prev = 1e9;
  for (const int n : {64, 256}) {
    const auto s = assemble_space(n);
    const ThermoformingObstacle map(s);
    const Field u = sine_interp(s);
    const Field phi = map.eval(u);
    const double err = (phi.values - u.values).cwiseAbs().maxCoeff();
    CHECK(err < prev);
    CHECK(err <= 20.0 * s.h * s.h);
    prev = err;
  }
}

TEST_CASE("thermoforming: membrane far below the gap leaves the mould untouched") {
  // g(psi T - u) vanishes when psi T - u >= 0; a strongly negative
  // membrane state realizes the flat branch, so T and the derivative are 0.
  const auto s = assemble_space(40);
  const ThermoformingObstacle map(s);
  Field u(40);
  u.values.setConstant(-10.0);
  const Eigen::VectorXd T = map.temperature(u);
  CHECK(T.cwiseAbs().maxCoeff() <= 1e-11);
  CHECK(v_norm(s, map.eval(u)) <= 1e-9);
  // g' vanishes there as well, so the derivative is zero too.
  const Field h = sine_interp(s, 0.5);
  CHECK(v_norm(s, map.deriv(u, h)) <= 1e-9);
}

TEST_CASE("thermoforming: zero direction gives zero derivative") {
  const auto s = assemble_space(24);
  const ThermoformingObstacle map(s);
  const Field u = sine_interp(s, 0.4);
  CHECK(v_norm(s, map.deriv(u, Field(24))) == 0.0);
}

TEST_CASE("thermoforming derivative matches one-sided differences") {
  const auto s = assemble_space(64);
  const ThermoformingObstacle map(s);
  const Field u = sine_interp(s, 0.8);
  std::mt19937_64 rng(13);
  const Field h = oracle::random_field(rng, 64, -1.0, 1.0);
  const Field d = map.deriv(u, h);
  double prev_err = 1e9;
  for (const double step : {1e-2, 1e-3, 1e-4, 1e-5}) {
    Field up = u;
    up.values += step * h.values;
    const Field quotient(Eigen::VectorXd((map.eval(up).values - map.eval(u).values) / step));
    const double err = v_norm(s, oracle::diff(quotient, d));
    CHECK(err <= prev_err + 1e-12);
    CHECK(err <= 10.0 * step + 1e-9);
    prev_err = err;
  }
}

TEST_CASE("certified contraction radius solves its quadratic exactly") {
  const auto cert = ThermoformingObstacle::certified_contraction();
  // Consistency: the Lipschitz bound equals one exactly at R*.
  CHECK(std::abs(ThermoformingContraction::lipschitz_bound(cert.radius_star) - 1.0) <= 1e-10);
  // Strictly inside the radius the bound is below one.
  CHECK(ThermoformingContraction::lipschitz_bound(0.99 * cert.radius_star) < 1.0);
  CHECK(ThermoformingContraction::state_bound(0.0) == 0.0);
  // Frozen value of the closed-form radius.
  CHECK(cert.radius_star == doctest::Approx(0.0434260309183979).epsilon(1e-12));
  MESSAGE("certified contraction radius = ", cert.radius_star);
}

TEST_CASE("every map is increasing on random ordered pairs") {
  const auto s = assemble_space(32);
  Field psi(32);
  psi.values.setConstant(0.4);
  const ConstantObstacle constant(psi);
  const InverseLaplacianObstacle inv(s);
  const ThermoformingObstacle thermo(s);
  const ObstacleMap* maps[] = {&constant, &inv, &thermo};

  std::mt19937_64 rng(41);
  for (const ObstacleMap* map : maps) {
    for (int t = 0; t < 100; ++t) {
      const Field u = oracle::random_field(rng, 32, -0.5, 0.5);
      Field v = u;
      v.values += oracle::random_field(rng, 32, 0.0, 0.5).values;
      CHECK(order_leq(map->eval(u), map->eval(v), 1e-11));
    }
  }
}

TEST_CASE("thermoforming is Lipschitz from H into V") {
  const auto s = assemble_space(48);
  const ThermoformingObstacle map(s);
  std::mt19937_64 rng(43);
  double worst = 0.0;
  for (int t = 0; t < 30; ++t) {
    const Field u1 = oracle::random_field(rng, 48, -0.5, 0.5);
    const Field u2 = oracle::random_field(rng, 48, -0.5, 0.5);
    const double dh = h_norm(s, oracle::diff(u1, u2));
    if (dh == 0.0) continue;
    worst = std::max(worst, v_norm(s, oracle::diff(map.eval(u1), map.eval(u2))) / dh);
  }
  CHECK(worst < 1e3); // complete-continuity surrogate: finite H->V ratio
  MESSAGE("measured H->V Lipschitz ratio = ", worst);
}

TEST_CASE("lipschitz_estimate dominates sampled ratios in a ball") {
  const auto s = assemble_space(32);
  const InverseLaplacianObstacle inv(s);
  const ThermoformingObstacle thermo(s);
  std::mt19937_64 rng(47);
  for (const ObstacleMap* map : {static_cast<const ObstacleMap*>(&inv),
                                 static_cast<const ObstacleMap*>(&thermo)}) {
    const Field center(32);
    const double radius = 0.02;
    const double est = map->lipschitz_estimate(center, radius);
    for (int t = 0; t < 50; ++t) {
      Field u1 = oracle::random_field(rng, 32, -1.0, 1.0);
      Field u2 = oracle::random_field(rng, 32, -1.0, 1.0);
      // scale both into the V-ball
      for (Field* u : {&u1, &u2}) {
        const double nv = v_norm(s, *u);
        if (nv > 0.0) u->values *= (radius / nv) * 0.999;
      }
      const double dv = v_norm(s, oracle::diff(u1, u2));
      if (dv == 0.0) continue;
      const double ratio = v_norm(s, oracle::diff(map->eval(u1), map->eval(u2))) / dv;
      CHECK(ratio <= est * (1.0 + 1e-6));
    }
  }
}
