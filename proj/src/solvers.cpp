#include "qvi/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qvi {

SolveReport solve_vi(const DiscreteSpace& s, const DualField& f, const Field& obstacle,
                     const std::optional<Field>& warm_start, const Tolerances& tols) {
  const int n = s.n_interior;
  if (f.n() != n || obstacle.n() != n) throw ConfigError("solve_vi: dimension mismatch");
  if (!all_finite(obstacle.values)) throw ConfigError("solve_vi: obstacle has non-finite entries");

  Field u = warm_start ? *warm_start : solve_linear(s.stiffness, f);
  Eigen::VectorXd xi = f.values - s.stiffness.apply(u.values);
  const double c = tols.pdas_c;

  std::vector<char> active(n, 0);
  double comp = 0.0;
  for (int it = 1; it <= tols.max_pdas; ++it) {
    for (int i = 0; i < n; ++i)
      active[i] = (xi[i] + c * (u[i] - obstacle[i]) > 0.0) ? 1 : 0;

    // Mixed system: identity rows on the active set, operator rows elsewhere.
    TriDiag A = s.stiffness;
    Eigen::VectorXd rhs = f.values;
    for (int i = 0; i < n; ++i) {
      if (!active[i]) continue;
      A.diag[i] = 1.0;
      if (i > 0) A.lower[i - 1] = 0.0;
      if (i + 1 < n) A.upper[i] = 0.0;
      rhs[i] = obstacle[i];
    }
    u = Field(A.solve(rhs));
    xi = f.values - s.stiffness.apply(u.values);
    for (int i = 0; i < n; ++i)
      if (!active[i]) xi[i] = 0.0; // exact complementarity off the active set

    comp = 0.0;
    double feas = 0.0, sign = 0.0;
    for (int i = 0; i < n; ++i) {
      comp = std::max(comp, std::abs(xi[i] * (obstacle[i] - u[i])));
      feas = std::max(feas, u[i] - obstacle[i]);
      sign = std::max(sign, -xi[i]);
    }
    if (comp <= tols.comp && feas <= tols.ord && sign <= tols.ord) {
      SolveReport rep;
      rep.solution = std::move(u);
      rep.iterations = it;
      rep.final_residual = comp;
      rep.multiplier = DualField(std::move(xi));
      for (int i = 0; i < n; ++i)
        if (active[i]) rep.active_set.push_back(i);
      return rep;
    }
  }
  std::ostringstream msg;
  msg << "solve_vi: active set cycling after " << tols.max_pdas << " sweeps; last set size "
      << std::count(active.begin(), active.end(), 1) << ", complementarity " << comp;
  throw SolverError(msg.str());
}

SolveReport solve_penalized_obstacle(const DiscreteSpace& s, double rho, const DualField& f,
                                     const Field& obstacle,
                                     const std::optional<Field>& warm_start,
                                     const Tolerances& tols) {
  const int n = s.n_interior;
  if (!(rho > 0.0)) throw ConfigError("solve_penalized: rho must be positive");
  if (f.n() != n || obstacle.n() != n) throw ConfigError("solve_penalized: dimension mismatch");

  Field u = warm_start ? *warm_start : solve_linear(s.stiffness, f);

  const auto residual = [&](const Field& v) {
    Eigen::VectorXd r = s.stiffness.apply(v.values) - f.values;
    for (int i = 0; i < n; ++i)
      r[i] += (1.0 / rho) * s.mass_lumped[i] * smoothed_plus(rho, v[i] - obstacle[i]);
    return r;
  };

  const double tol = tols.newton_rel * (1.0 + f.values.cwiseAbs().maxCoeff());
  Eigen::VectorXd F = residual(u);
  double fnorm = F.cwiseAbs().maxCoeff();
  std::vector<double> history{fnorm};
  int iterations = 0;
  while (fnorm > tol) {
    if (iterations++ >= tols.max_newton) {
      std::ostringstream msg;
      msg << "solve_penalized: no convergence after " << tols.max_newton
          << " Newton steps; residuals";
      const size_t k0 = history.size() > 6 ? history.size() - 6 : 0;
      for (size_t k = k0; k < history.size(); ++k) msg << " " << history[k];
      throw SolverError(msg.str());
    }
    TriDiag J = s.stiffness;
    for (int i = 0; i < n; ++i)
      J.diag[i] += (1.0 / rho) * s.mass_lumped[i] * smoothed_plus_prime(rho, u[i] - obstacle[i]);
    const Eigen::VectorXd step = J.solve(-F);

    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      Field un(Eigen::VectorXd(u.values + t * step));
      Eigen::VectorXd Fn = residual(un);
      const double fn = Fn.cwiseAbs().maxCoeff();
      if (fn <= (1.0 - 1e-4 * t) * fnorm) {
        u = std::move(un);
        F = std::move(Fn);
        fnorm = fn;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted)
      throw SolverError("solve_penalized: Armijo line search stalled at residual " +
                        std::to_string(fnorm));
    history.push_back(fnorm);
  }

  SolveReport rep;
  rep.iterations = iterations;
  rep.final_residual = fnorm;
  rep.multiplier = DualField(n);
  for (int i = 0; i < n; ++i) {
    rep.multiplier[i] = (1.0 / rho) * s.mass_lumped[i] * smoothed_plus(rho, u[i] - obstacle[i]);
    if (u[i] - obstacle[i] > 0.0) rep.active_set.push_back(i);
  }
  rep.solution = std::move(u);
  return rep;
}

SolveReport solve_penalized(const DiscreteSpace& s, double rho, const DualField& f,
                            const Field& phi, const ObstacleMap& obstacle_map,
                            const std::optional<Field>& warm_start, const Tolerances& tols) {
  return solve_penalized_obstacle(s, rho, f, obstacle_map.eval(phi), warm_start, tols);
}

} // namespace qvi
