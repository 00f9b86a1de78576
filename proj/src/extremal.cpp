#include "qvi/extremal.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

namespace qvi {

bool in_admissible_set(const DualField& g, const DualField& F, double tol) {
  if (g.n() != F.n()) throw ConfigError("in_admissible_set: dimension mismatch");
  for (int i = 0; i < g.n(); ++i)
    if (g[i] < -tol || g[i] > F[i] + tol) return false;
  return true;
}

OrderInterval make_interval_from_bound(const DiscreteSpace& s, const ObstacleMap& map,
                                       const DualField& F, double rho0, const Tolerances& tols) {
  if (F.n() != s.n_interior) throw ConfigError("make_interval_from_bound: dimension mismatch");
  if ((F.values.array() < 0.0).any())
    throw ConfigError("make_interval_from_bound: bound F must be nonnegative");

  OrderInterval iv;
  iv.rho0 = rho0;
  iv.sub = Field(s.n_interior);
  iv.sup = solve_linear(s.stiffness, F);

  // Subsolution certificate: 0 <= S(f, 0) for all 0 <= f <= F reduces to
  // Phi(0) >= 0 (the zero source then yields the zero solution).
  const Field phi0 = map.eval(iv.sub);
  iv.sub_violation = std::max(0.0, -phi0.values.minCoeff());

  // Supersolution certificate at the worst admissible source g = F.
  const SolveReport sup_check = solve_penalized(s, rho0, F, iv.sup, map, iv.sup, tols);
  iv.sup_violation = order_violation(sup_check.solution, iv.sup);

  const auto enforce = [&](double v, const char* which) {
    if (v > 1e-8)
      throw ConfigError(std::string("make_interval_from_bound: ") + which +
                        " certificate violated by " + std::to_string(v));
    if (v > tols.ord)
      std::cerr << "warning: " << which << " certificate violated marginally by " << v
                << ", proceeding\n";
  };
  enforce(iv.sub_violation, "subsolution (Phi(0) >= 0)");
  enforce(iv.sup_violation, "supersolution (sup >= T_rho0(F, sup))");
  return iv;
}

namespace {

SolveReport step_solve(const DiscreteSpace& s, double rho, const DualField& f, const Field& phi,
                       const ObstacleMap& map, const Field& warm, const Tolerances& tols) {
  if (rho > 0.0) return solve_penalized(s, rho, f, phi, map, warm, tols);
  return solve_vi(s, f, map.eval(phi), warm, tols);
}

} // namespace

ExtremalResult iterate_extremal(const DiscreteSpace& s, double rho, const DualField& f,
                                const OrderInterval& interval, Branch branch,
                                const ObstacleMap& map, const ExtremalOptions& opts,
                                const Tolerances& tols) {
  if (rho < 0.0) throw ConfigError("iterate_extremal: rho must be >= 0");
  const bool endpoint_start = !opts.start.has_value();
  Field u = opts.start ? *opts.start : (branch == Branch::Max ? interval.sup : interval.sub);

  ExtremalResult res;
  res.branch = branch;
  res.rho = rho;

  const double stall_tol = opts.stall_factor * s.h * s.h;
  bool converged = false; // previous step met the successive-difference test
  double best_diff = std::numeric_limits<double>::infinity();
  Field best_input;    // iterate whose image achieved the smallest difference
  int best_n = 0;
  int growth_streak = 0;
  int n = 0;
  while (n < opts.max_n) {
    const SolveReport rep = step_solve(s, rho, f, u, map, u, tols);
    const Field& next = rep.solution;
    const double diff = v_norm(s, Field(Eigen::VectorXd(next.values - u.values)));
    res.history.emplace_back(++n, diff);
    if (opts.observer) opts.observer(n, next);

    const double viol = branch == Branch::Max ? order_violation(next, u)
                                              : order_violation(u, next);
    if (viol > tols.ord) {
      res.monotone = false;
      if (n == 1 && endpoint_start) {
        const char* which = branch == Branch::Max ? "supersolution" : "subsolution";
        if (viol > 1e-8)
          throw ConfigError(std::string("iterate_extremal: ") + which +
                            " certificate failed for this source: first iterate moves the wrong"
                            " way by " + std::to_string(viol));
        std::cerr << "warning: " << which << " certificate violated marginally by " << viol
                  << ", proceeding\n";
      }
    }

    if (converged && diff <= opts.tol_fp) {
      // Successive differences stopped AND this extra solve confirms the
      // fixed-point residual |u - T_rho(f,u)|_V, so u (not next) is final.
      res.solution = u;
      res.fixed_point_residual = diff;
      res.iterations = n - 1;
      return res;
    }
    converged = diff <= opts.tol_fp;

    if (diff < best_diff) {
      best_diff = diff;
      best_input = u;
      best_n = n;
      growth_streak = 0;
    } else {
      ++growth_streak;
    }
    // Expansive maps admit no fixed point at the exact branch: the
    // differences bottom out at the mesh-error scale and then grow
    // geometrically.  Accept the best iterate when that floor is below
    // the stall ceiling; keep erroring on macroscopic divergence.
    if (growth_streak >= 3 && best_diff > opts.tol_fp) {
      if (best_diff <= stall_tol && diff <= opts.growth_guard * best_diff) {
        res.solution = best_input;
        res.fixed_point_residual = best_diff;
        res.iterations = best_n;
        res.stalled = true;
        return res;
      }
      std::ostringstream msg;
      msg << "iterate_extremal(" << branch_name(branch) << ", rho=" << rho
          << "): successive differences grow (" << best_diff << " -> " << diff
          << " at step " << n << "); the fixed-point map is not contracting here";
      throw SolverError(msg.str());
    }

    u = next;
    res.iterations = n;
  }

  std::ostringstream msg;
  const double last = res.history.back().second;
  const double prev = res.history.size() >= 2 ? res.history[res.history.size() - 2].second : last;
  const double rate = prev > 0.0 ? last / prev : 1.0;
  msg << "iterate_extremal(" << branch_name(branch) << ", rho=" << rho << "): no convergence in "
      << opts.max_n << " steps; last diff " << last << ", contraction-rate estimate " << rate;
  if (rate > 0.0 && rate < 1.0)
    msg << " (~" << static_cast<int>(std::ceil(std::log(opts.tol_fp / last) / std::log(rate)))
        << " more steps needed)";
  throw SolverError(msg.str());
}

ContinuationReport rho_continuation(const DiscreteSpace& s, const DualField& f,
                                    const OrderInterval& interval, Branch branch,
                                    const ObstacleMap& map, const std::vector<double>& rho_schedule,
                                    const ExtremalOptions& opts, const Tolerances& tols) {
  if (rho_schedule.empty()) throw ConfigError("rho_continuation: empty schedule");
  for (size_t k = 0; k + 1 < rho_schedule.size(); ++k)
    if (!(rho_schedule[k + 1] < rho_schedule[k]))
      throw ConfigError("rho_continuation: schedule must be strictly decreasing");
  if (!(rho_schedule.front() > 0.0))
    throw ConfigError("rho_continuation: schedule must be positive");

  ContinuationReport rep;
  ExtremalOptions o = opts;
  for (const double rho : rho_schedule) {
    rep.results.push_back(iterate_extremal(s, rho, f, interval, branch, map, o, tols));
    o.start = rep.results.back().solution; // warm start the next level
  }
  rep.reference = iterate_extremal(s, 0.0, f, interval, branch, map, o, tols);
  for (const auto& r : rep.results)
    rep.errors_v.push_back(v_norm(
        s, Field(Eigen::VectorXd(r.solution.values - rep.reference.solution.values))));
  return rep;
}

double ContractionConstants::lipschitz_bound() const {
  if (!valid) return std::numeric_limits<double>::infinity();
  return C_hat / (1.0 - c_hat);
}

ContractionConstants contraction_constants(double C_a, double C_b, double C_L) {
  ContractionConstants cc;
  cc.c_tilde = C_b * C_L / C_a;
  if (!(cc.c_tilde < 1.0)) return cc; // invalid: no contraction certified
  cc.valid = true;
  const double C = C_a / 2.0;
  const double ct2 = cc.c_tilde * cc.c_tilde;
  const double denom = std::sqrt(C * (1.0 + ct2) / 2.0);
  if (C_L == 0.0) {
    cc.c_hat = 0.0;
    cc.C_hat = 1.0 / C;
    return cc;
  }
  cc.c_hat = cc.c_tilde * std::sqrt(2.0 / (1.0 + ct2));
  cc.C_hat = (1.0 / std::sqrt(2.0 * C * (1.0 - ct2)) + C_a / (2.0 * std::sqrt(C) * C_b)) / denom;
  return cc;
}

LipschitzProbeReport lipschitz_probe(const DiscreteSpace& s, const DualField& f,
                                     const std::vector<DualField>& perturbations,
                                     const DualField& F, double rho,
                                     const OrderInterval& interval, Branch branch,
                                     const ObstacleMap& map, const ExtremalOptions& opts,
                                     const Tolerances& tols) {
  if (!in_admissible_set(f, F, tols.ord))
    throw ConfigError("lipschitz_probe: base source is not admissible");

  const ExtremalResult base = iterate_extremal(s, rho, f, interval, branch, map, opts, tols);

  LipschitzProbeReport rep;
  double max_disp = 0.0;
  ExtremalOptions o = opts;
  for (const auto& delta : perturbations) {
    if (delta.n() != f.n()) throw ConfigError("lipschitz_probe: dimension mismatch");
    const double dn = dual_norm(s, delta);
    if (dn == 0.0) {
      ++rep.skipped;
      continue;
    }
    DualField g(Eigen::VectorXd(f.values + delta.values));
    if (!in_admissible_set(g, F, tols.ord))
      throw ConfigError("lipschitz_probe: perturbed source leaves the admissible set");
    o.start = base.solution;
    const ExtremalResult zr = iterate_extremal(s, rho, g, interval, branch, map, o, tols);
    const double disp =
        v_norm(s, Field(Eigen::VectorXd(zr.solution.values - base.solution.values)));
    max_disp = std::max(max_disp, disp);
    rep.ratios.push_back(disp / dn);
    rep.max_ratio = std::max(rep.max_ratio, rep.ratios.back());
  }

  rep.lipschitz_constant = map.lipschitz_estimate(base.solution, 1.05 * max_disp);
  rep.constants = contraction_constants(s.coercivity, s.boundedness, rep.lipschitz_constant);
  rep.bound = rep.constants.lipschitz_bound();
  rep.violated = rep.max_ratio > rep.bound;
  return rep;
}

} // namespace qvi
