#include "qvi/sensitivity.hpp"

#include <cmath>
#include <sstream>

#include "qvi/penalty.hpp"

namespace qvi {

CriticalCone build_critical_cone(const Field& u, const Field& phi_u, const DualField& xi,
                                 double tol_act, double tol_mult) {
  const int n = u.n();
  if (phi_u.n() != n || xi.n() != n) throw ConfigError("build_critical_cone: dimension mismatch");
  CriticalCone cone;
  cone.tol_act = tol_act;
  cone.tol_mult = tol_mult;
  cone.shift = Field(n);
  for (int i = 0; i < n; ++i) {
    if (xi[i] > tol_mult)
      cone.strongly_active.push_back(i);
    else if (u[i] - phi_u[i] >= -tol_act)
      cone.biactive.push_back(i);
    else
      cone.inactive.push_back(i);
  }
  return cone;
}

DerivativeResult penalized_derivative(const DiscreteSpace& s, double rho, const Field& u,
                                      const DualField& d, const ObstacleMap& map,
                                      const DerivativeOptions& opts) {
  const int n = s.n_interior;
  if (!(rho > 0.0)) throw ConfigError("penalized_derivative: rho must be positive");
  if (u.n() != n || d.n() != n) throw ConfigError("penalized_derivative: dimension mismatch");

  const Field phi_u = map.eval(u);
  const Eigen::VectorXd D =
      penalty_slope_diag(s, rho, Field(Eigen::VectorXd(u.values - phi_u.values)));
  const TriDiag A = s.stiffness.add_diag(D, 1.0 / rho);

  DerivativeResult res;
  res.direction = d;
  Field alpha(n);
  // The defining-equation residual is amplified by the 1/rho factor, so
  // the fixed-point tail has to be tightened accordingly.
  const double tol_fp = opts.tol_fp * std::min(1.0, rho / s.h);
  double prev_diff = std::numeric_limits<double>::infinity();
  int grow = 0;
  for (int it = 1; it <= opts.max_outer; ++it) {
    const Field shift = map.deriv(u, alpha);
    Eigen::VectorXd rhs = d.values;
    for (int i = 0; i < n; ++i) rhs[i] += (1.0 / rho) * D[i] * shift[i];
    Field next(A.solve(rhs));
    const double diff = v_norm(s, Field(Eigen::VectorXd(next.values - alpha.values)));
    alpha = std::move(next);
    res.fixed_point_iters = it;
    if (diff <= tol_fp) break;
    grow = diff > prev_diff ? grow + 1 : 0;
    if (grow >= 3) {
      std::ostringstream msg;
      msg << "penalized_derivative: iteration is not contracting (differences " << prev_diff
          << " -> " << diff << "); obstacle-map Lipschitz estimate "
          << map.lipschitz_estimate(u, 1.0);
      throw SolverError(msg.str());
    }
    prev_diff = diff;
    if (it == opts.max_outer)
      throw SolverError("penalized_derivative: no convergence in " +
                        std::to_string(opts.max_outer) + " iterations");
  }

  // Residual of the defining equation, relative to its own term sizes.
  const Field shift = map.deriv(u, alpha);
  Eigen::VectorXd r = s.stiffness.apply(alpha.values) - d.values;
  double term_scale = 1.0 + d.values.cwiseAbs().maxCoeff();
  for (int i = 0; i < n; ++i) {
    const double pen_term = (1.0 / rho) * D[i] * (alpha[i] - shift[i]);
    r[i] += pen_term;
    term_scale = std::max(term_scale, std::abs(pen_term));
  }
  res.residual = r.cwiseAbs().maxCoeff() / term_scale;
  if (res.residual > opts.tol_residual) {
    std::ostringstream msg;
    msg << "penalized_derivative: defining-equation residual " << res.residual;
    throw SolverError(msg.str());
  }
  res.derivative = std::move(alpha);
  return res;
}

namespace {

/// VI on the shifted cone: minimize 1/2 w'Kw - d'w subject to
/// w = shift on strongly active nodes and w <= shift on biactive nodes.
/// Active-set iteration; ties broken toward inactivity and counted.
Field solve_cone_vi(const DiscreteSpace& s, const DualField& d, const CriticalCone& cone,
                    const Field& shift, int max_sweeps, double tol_ord, double tol_comp,
                    int& tie_count) {
  const int n = s.n_interior;
  std::vector<char> biactive_mask(n, 0), equality(n, 0);
  for (int i : cone.biactive) biactive_mask[i] = 1;
  for (int i : cone.strongly_active) equality[i] = 1;

  std::vector<char> active(n, 0); // subset of biactive currently clamped
  Field w(n);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  bool first = true;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (!first) {
      for (int i = 0; i < n; ++i) {
        if (!biactive_mask[i]) continue;
        const double indicator = eta[i] + (w[i] - shift[i]);
        if (indicator > 0.0) {
          active[i] = 1;
        } else {
          if (indicator == 0.0 && active[i]) ++tie_count;
          active[i] = 0;
        }
      }
    }
    first = false;

    TriDiag A = s.stiffness;
    Eigen::VectorXd rhs = d.values;
    for (int i = 0; i < n; ++i) {
      if (!(equality[i] || active[i])) continue;
      A.diag[i] = 1.0;
      if (i > 0) A.lower[i - 1] = 0.0;
      if (i + 1 < n) A.upper[i] = 0.0;
      rhs[i] = shift[i];
    }
    w = Field(A.solve(rhs));
    eta = d.values - s.stiffness.apply(w.values);
    for (int i = 0; i < n; ++i)
      if (!(equality[i] || active[i])) eta[i] = 0.0;

    double comp = 0.0, feas = 0.0, sign = 0.0;
    for (int i = 0; i < n; ++i) {
      if (!biactive_mask[i]) continue;
      comp = std::max(comp, std::abs(eta[i] * (shift[i] - w[i])));
      feas = std::max(feas, w[i] - shift[i]);
      sign = std::max(sign, -eta[i]); // biactive multiplier must be >= 0
    }
    if (comp <= tol_comp && feas <= tol_ord && sign <= tol_ord) return w;
  }
  throw SolverError("qvi_derivative: cone active-set iteration cycling");
}

} // namespace

DerivativeResult qvi_derivative(const DiscreteSpace& s, const Field& u, const DualField& xi,
                                const DualField& d, const ObstacleMap& map,
                                const DerivativeOptions& opts, const Tolerances& tols) {
  const int n = s.n_interior;
  if (u.n() != n || xi.n() != n || d.n() != n)
    throw ConfigError("qvi_derivative: dimension mismatch");

  const Field phi_u = map.eval(u);
  CriticalCone cone = build_critical_cone(u, phi_u, xi);

  DerivativeResult res;
  res.direction = d;
  Field alpha(n);
  double prev_diff = std::numeric_limits<double>::infinity();
  int grow = 0;
  for (int it = 1; it <= opts.max_outer; ++it) {
    cone.shift = map.deriv(u, alpha);
    Field next = solve_cone_vi(s, d, cone, cone.shift, tols.max_pdas, tols.ord, tols.comp,
                               res.biactive_ties);
    const double diff = v_norm(s, Field(Eigen::VectorXd(next.values - alpha.values)));
    alpha = std::move(next);
    res.fixed_point_iters = it;
    if (diff <= opts.tol_fp) break;
    grow = diff > prev_diff ? grow + 1 : 0;
    if (grow >= 3)
      throw SolverError("qvi_derivative: iteration is not contracting; obstacle-map Lipschitz "
                        "estimate " + std::to_string(map.lipschitz_estimate(u, 1.0)));
    prev_diff = diff;
    if (it == opts.max_outer)
      throw SolverError("qvi_derivative: no convergence in " + std::to_string(opts.max_outer) +
                        " iterations");
  }

  // Complementarity residual of the cone inequality at the fixed point.
  cone.shift = map.deriv(u, alpha);
  Eigen::VectorXd eta = d.values - s.stiffness.apply(alpha.values);
  double r = 0.0;
  std::vector<char> constrained(n, 0);
  for (int i : cone.strongly_active) {
    r = std::max(r, std::abs(alpha[i] - cone.shift[i]));
    constrained[i] = 1;
  }
  for (int i : cone.biactive) {
    r = std::max(r, std::max(0.0, alpha[i] - cone.shift[i]));
    r = std::max(r, std::max(0.0, -eta[i]));
    r = std::max(r, std::abs(eta[i] * (cone.shift[i] - alpha[i])));
    constrained[i] = 1;
  }
  for (int i = 0; i < n; ++i)
    if (!constrained[i]) r = std::max(r, std::abs(eta[i]));
  res.residual = r;
  if (res.residual > opts.tol_residual)
    throw SolverError("qvi_derivative: cone VI residual " + std::to_string(res.residual));
  res.derivative = std::move(alpha);
  return res;
}

void fd_check(DerivativeResult& result, const DiscreteSpace& s, double rho, const DualField& f,
              const OrderInterval& interval, Branch branch, const ObstacleMap& map,
              const std::vector<double>& steps, const Tolerances& tols) {
  ExtremalOptions opts;
  const ExtremalResult base = iterate_extremal(s, rho, f, interval, branch, map, opts, tols);
  result.fd_errors.clear();
  for (const double step : steps) {
    DualField g(Eigen::VectorXd(f.values + step * result.direction.values));
    ExtremalOptions o;
    o.start = base.solution;
    const ExtremalResult pert = iterate_extremal(s, rho, g, interval, branch, map, o, tols);
    const Eigen::VectorXd quotient = (pert.solution.values - base.solution.values) / step;
    result.fd_errors.emplace_back(
        step, v_norm(s, Field(Eigen::VectorXd(quotient - result.derivative.values))));
  }
}

HadamardReport hadamard_check(const DiscreteSpace& s, double rho, const DualField& f,
                              const DualField& d, const DualField& e, const DualField& F,
                              const OrderInterval& interval, Branch branch,
                              const ObstacleMap& map, const std::vector<double>& steps,
                              const Tolerances& tols) {
  ExtremalOptions opts;
  const ExtremalResult base = iterate_extremal(s, rho, f, interval, branch, map, opts, tols);

  const Field u = base.solution;
  Field alpha;
  if (rho > 0.0) {
    alpha = penalized_derivative(s, rho, u, d, map).derivative;
  } else {
    const DualField xi(Eigen::VectorXd(f.values - s.stiffness.apply(u.values)));
    alpha = qvi_derivative(s, u, xi, d, map, {}, tols).derivative;
  }

  HadamardReport rep;
  int k = 0;
  for (const double step : steps) {
    ++k;
    // fixed direction
    DualField g_fixed(Eigen::VectorXd(f.values + step * d.values));
    // perturbed direction d_k = d + e/k
    DualField dk(Eigen::VectorXd(d.values + e.values / static_cast<double>(k)));
    DualField g_seq(Eigen::VectorXd(f.values + step * dk.values));
    for (const auto* g : {&g_fixed, &g_seq})
      if (!in_admissible_set(*g, F, tols.ord))
        throw ConfigError("hadamard_check: probed source leaves the admissible set");

    ExtremalOptions o;
    o.start = base.solution;
    const auto quotient_error = [&](const DualField& g) {
      const ExtremalResult pert = iterate_extremal(s, rho, g, interval, branch, map, o, tols);
      const Eigen::VectorXd q = (pert.solution.values - base.solution.values) / step;
      return v_norm(s, Field(Eigen::VectorXd(q - alpha.values)));
    };
    rep.fixed_errors.emplace_back(step, quotient_error(g_fixed));
    rep.sequence_errors.emplace_back(step, quotient_error(g_seq));
  }

  rep.pass = true;
  for (size_t i = 0; i < rep.fixed_errors.size(); ++i) {
    const double extra = dual_norm(s, e) / static_cast<double>(i + 1); // direction gap
    if (rep.sequence_errors[i].second >
        1.10 * (rep.fixed_errors[i].second + extra) + 1e-12)
      rep.pass = false;
  }
  return rep;
}

} // namespace qvi
