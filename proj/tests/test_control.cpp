#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "qvi/control.hpp"

using namespace qvi;

namespace {
constexpr double kPi = std::numbers::pi;

Field const_field(int n, double c) {
  Field v(n);
  v.values.setConstant(c);
  return v;
}

// Tracking problem over a constant obstacle: the target sits above the
// obstacle in the middle, so the optimal state has genuine contact.
struct TrackingSetup {
  DiscreteSpace s;
  ConstantObstacle map;
  ControlProblem prob;

  explicit TrackingSetup(int n, double nu = 1e-2)
      : s(assemble_space(n)), map(const_field(n, 0.1)),
        prob(make_box_problem(
            s, map, 1.0, 0.0,
            interpolate(s, [](double x) { return std::sin(kPi * x); }), nu,
            const_field(n, 0.0), const_field(n, 10.0))) {}
};

std::vector<double> short_schedule() { return {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6}; }

// Deep schedule for stationarity certification: the exactness bias of
// the certificate scales with the terminal smoothing.
std::vector<double> deep_schedule() {
  std::vector<double> sched;
  double r = 1.0;
  for (int k = 0; k < 21; ++k) {
    sched.push_back(r);
    r *= 0.5;
  }
  return sched;
}
} // namespace

TEST_CASE("pure Tikhonov objective") {
  const auto s = assemble_space(24);
  const ConstantObstacle map(const_field(24, 0.5));
  const auto prob = make_box_problem(s, map, 0.0, 0.0, Field(24), 0.3, const_field(24, 0.0),
                                     const_field(24, 5.0));
  const Field f = const_field(24, 2.0);
  const auto ev = reduced_objective(prob, 1e-3, f);
  const double hn = h_norm(s, f);
  CHECK(ev.value == doctest::Approx(0.15 * hn * hn).epsilon(1e-12));
}

TEST_CASE("zero control with nonnegative obstacle map gives zero value") {
  const auto s = assemble_space(32);
  const ThermoformingObstacle map(s);
  const auto prob = make_box_problem(s, map, 1.0, -1.0, Field(32), 1.0, const_field(32, 0.0),
                                     const_field(32, 5.0));
  const auto ev = reduced_objective(prob, 1e-4, Field(32));
  CHECK(v_norm(s, ev.y) <= 1e-9);
  CHECK(v_norm(s, ev.z) <= 1e-9);
  CHECK(ev.value <= 1e-18);
}

TEST_CASE("variation objective separates the branches") {
  const auto s = assemble_space(48);
  const ThermoformingObstacle map(s);
  const auto prob = make_box_problem(s, map, 1.0, -1.0, Field(48), 1e-2, const_field(48, 0.0),
                                     const_field(48, 12.0));
  const Field f = interpolate(s, [](double x) { return kPi * kPi * std::sin(kPi * x); });
  const auto ev = reduced_objective(prob, 1e-5, f);
  CHECK(h_norm(s, ev.z) <= 1e-3); // minimal branch shrinks like O(rho)
  const double gap = h_norm(s, Field(Eigen::VectorXd(ev.y.values - ev.z.values)));
  const double hf = lumped_norm(s, f);
  CHECK(ev.value ==
        doctest::Approx(0.5 * gap * gap + 0.5 * prob.nu * hf * hf).epsilon(1e-10));
  // The minimal branch scales like the smoothing parameter.
  CHECK(h_norm(s, reduced_objective(prob, 1e-6, f).z) <= 0.2 * h_norm(s, ev.z));
  CHECK(gap > 0.1); // maximal branch stays near the sine profile
}

TEST_CASE("controls outside the box are rejected") {
  TrackingSetup ts(24);
  CHECK_THROWS_AS(reduced_objective(ts.prob, 1e-2, const_field(24, -1.0)), ConfigError);
  CHECK_THROWS_AS(make_box_problem(ts.s, ts.map, 1.0, 0.0, Field(24), 1e-2,
                                   const_field(24, 2.0), const_field(24, 1.0)),
                  ConfigError);
}

TEST_CASE("box projection is idempotent") {
  TrackingSetup ts(24);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const Field f = oracle::random_field(rng, 24, -5.0, 15.0);
    const Field once = ts.prob.clamp(f);
    const Field twice = ts.prob.clamp(once);
    CHECK(once.values == twice.values);
  }
}

TEST_CASE("zero tracking weight gives a zero adjoint") {
  TrackingSetup ts(32);
  auto prob = ts.prob;
  prob.a = 0.0;
  const Field f = const_field(32, 1.0);
  const auto ev = reduced_objective(prob, 1e-3, f);
  const auto adj = solve_adjoints(prob, 1e-3, f, ev.y, ev.z);
  CHECK(v_norm(ts.s, adj.p) == 0.0);
  CHECK(v_norm(ts.s, adj.q) == 0.0);
}

TEST_CASE("inactive constant-obstacle adjoint is the plain transpose solve") {
  const auto s = assemble_space(32);
  const ConstantObstacle map(const_field(32, 100.0)); // never active
  const auto prob = make_box_problem(s, map, 1.0, 0.0,
                                     interpolate(s, [](double x) { return std::sin(kPi * x); }),
                                     1e-1, const_field(32, 0.0), const_field(32, 2.0));
  const Field f = const_field(32, 0.5);
  const double rho = 1e-3;
  const auto ev = reduced_objective(prob, rho, f);
  const auto adj = solve_adjoints(prob, rho, f, ev.y, ev.z);
  const Eigen::VectorXd jy = s.mass.apply(Eigen::VectorXd(ev.y.values - prob.y_d.values));
  const Field direct = solve_linear(s.stiffness, DualField(Eigen::VectorXd(-jy)));
  CHECK((adj.p.values - direct.values).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("adjoint gradient matches finite differences of the reduced objective") {
  TrackingSetup ts(48);
  const double rho = 1e-4;
  const Field f = const_field(48, 1.0);
  const auto ev = reduced_objective(ts.prob, rho, f);
  const auto adj = solve_adjoints(ts.prob, rho, f, ev.y, ev.z);
  const Field grad(
      Eigen::VectorXd(ts.prob.nu * f.values - adj.p.values - adj.q.values));

  std::mt19937_64 rng(7);
  const Field h = oracle::random_field(rng, 48, -1.0, 1.0);
  const double directional =
      (ts.s.mass_lumped.array() * grad.values.array() * h.values.array()).sum();
  double prev = 1e18;
  for (const double step : {1e-3, 1e-4, 1e-5}) {
    Field fs(Eigen::VectorXd(f.values + step * h.values));
    const double fd = (reduced_objective(ts.prob, rho, fs).value - ev.value) / step;
    const double err = std::abs(fd - directional);
    CHECK(err <= prev * (1.0 + 1e-9));
    CHECK(err <= 10.0 * step * std::max(1.0, std::abs(directional)));
    prev = err;
  }
  // Relative agreement at s = 1e-5.
  Field fs(Eigen::VectorXd(f.values + 1e-5 * h.values));
  const double fd = (reduced_objective(ts.prob, rho, fs).value - ev.value) / 1e-5;
  CHECK(std::abs(fd - directional) <= 1e-3 * std::abs(directional));
}

TEST_CASE("large Tikhonov weight pushes the control to the lower clamp") {
  TrackingSetup ts(32, /*nu=*/1e4);
  const auto out = optimize(ts.prob, {1e-2, 1e-3}, const_field(32, 1.0));
  // clamp(0) with box [0,10] is 0; the residual scales like |p|/nu.
  CHECK(out.control.values.cwiseAbs().maxCoeff() <= 1e-4);
  CHECK(out.final_kkt <= 1e-7);
}

TEST_CASE("objective decreases monotonically within each rho level") {
  TrackingSetup ts(48);
  const auto out = optimize(ts.prob, short_schedule(), const_field(48, 1.0));
  CHECK(out.final_kkt <= 1e-7);
  for (size_t i = 1; i < out.trajectory.size(); ++i) {
    if (out.trajectory[i].rho != out.trajectory[i - 1].rho) continue;
    if (out.trajectory[i].polish) continue; // kkt-driven phase, not value-driven
    CHECK(out.trajectory[i].value <= out.trajectory[i - 1].value * (1.0 + 1e-12) + 1e-15);
  }
  // Spot checks of the adjoint gradient happened and stayed small.
  bool any = false;
  for (const auto& pt : out.trajectory)
    if (pt.gradient_check >= 0.0) {
      any = true;
      CHECK(pt.gradient_check <= 1e-3);
    }
  CHECK(any);
}

TEST_CASE("optimizer agrees with a finite-difference gradient oracle") {
  TrackingSetup ts(64);
  const double rho = 1e-3;
  const auto mine = optimize(ts.prob, {1e-1, 1e-2, rho}, const_field(64, 1.0));

  // Independent path: projected gradient with central finite-difference
  // gradients of the reduced objective (no adjoints involved), driven by
  // its own finite-difference stationarity residual.
  Field f = const_field(64, 1.0);
  double step = 1.0;
  ControlWarmState warm;
  const auto fd_gradient = [&](const Field& at) {
    Field grad(64);
    for (int i = 0; i < 64; ++i) {
      const double fd_step = 1e-6;
      Field fp = at, fm = at;
      fp[i] += fd_step;
      fm[i] = std::max(0.0, fm[i] - fd_step);
      ControlWarmState w2 = warm;
      const double vp = reduced_objective(ts.prob, rho, ts.prob.clamp(fp), &w2).value;
      w2 = warm;
      const double vm = reduced_objective(ts.prob, rho, fm, &w2).value;
      grad[i] = (vp - vm) / (fd_step + (at[i] - fm[i]));
    }
    // The value varies as <M_L grad_H, df>: divide out the weights.
    return Field(Eigen::VectorXd(grad.values.array() / ts.s.mass_lumped.array()));
  };
  const auto fd_kkt = [&](const Field& at, const Field& grad_h) {
    const Field probe = ts.prob.clamp(Field(Eigen::VectorXd(at.values - grad_h.values)));
    return lumped_norm(ts.s, Field(Eigen::VectorXd(at.values - probe.values)));
  };
  Field grad_h = fd_gradient(f);
  double kkt = fd_kkt(f, grad_h);
  for (int it = 0; it < 300 && kkt > 1e-6; ++it) {
    bool ok = false;
    double t = step;
    for (int ls = 0; ls < 40; ++ls) {
      Field trial = ts.prob.clamp(Field(Eigen::VectorXd(f.values - t * grad_h.values)));
      const Field grad_t = fd_gradient(trial);
      const double kkt_t = fd_kkt(trial, grad_t);
      if (kkt_t < kkt) {
        f = trial;
        grad_h = grad_t;
        kkt = kkt_t;
        step = 1.5 * t;
        ok = true;
        break;
      }
      t *= 0.4;
    }
    if (!ok) break;
  }
  const double gap = lumped_norm(ts.s, Field(Eigen::VectorXd(mine.control.values - f.values)));
  MESSAGE("oracle kkt ", kkt, ", control gap ", gap);
  CHECK(gap <= 1e-2);
  CHECK(kkt <= 1e-4);
}

TEST_CASE("certificate on an unconstrained instance is trivially clean") {
  const auto s = assemble_space(32);
  const ConstantObstacle map(const_field(32, 1000.0));
  const auto prob = make_box_problem(s, map, 1.0, 0.0,
                                     interpolate(s, [](double x) { return std::sin(kPi * x); }),
                                     1e-1, const_field(32, 0.0), const_field(32, 50.0));
  const auto out = optimize(prob, short_schedule(), const_field(32, 1.0));
  const auto cert = certify_stationarity(prob, out.control, 1e-6);
  CHECK(cert.all_passed());
  CHECK(cert.lambda.values.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(cert.xi1.values.cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("certificate passes on the constant-obstacle tracking problem") {
  TrackingSetup ts(64);
  const auto sched = deep_schedule();
  OptimizeOptions oo;
  oo.tol_kkt = 5e-9;
  const auto out = optimize(ts.prob, sched, const_field(64, 1.0), oo);
  REQUIRE(out.final_kkt <= 1e-7);
  const auto cert = certify_stationarity(ts.prob, out.control, sched.back());
  for (const auto& [name, ok] : cert.passed) {
    INFO("condition ", name, " residual ", cert.residuals.at(name));
    CHECK(ok);
  }
  CHECK(std::abs(cert.residuals.at("complementarity_xi1")) <= 1e-8);
  CHECK(cert.residuals.at("sign_lambda_p") >= -1e-7);
  // Sign diagnostics are reported for nonnegative weights.
  CHECK(cert.diagnostics.count("weighted_sign_lambda_1") == 1);
}

TEST_CASE("stationarity residual is nonnegative over tangent directions") {
  TrackingSetup ts(64);
  OptimizeOptions oo;
  oo.tol_kkt = 5e-9;
  const auto out = optimize(ts.prob, deep_schedule(), const_field(64, 1.0), oo);
  const double worst = bouligand_residual(ts.prob, out.control, 50, 11);
  CHECK(worst >= -1e-6);
}
