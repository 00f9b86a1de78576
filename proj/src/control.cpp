#include "qvi/control.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "qvi/penalty.hpp"

namespace qvi {

namespace {
std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}
} // namespace

Field ControlProblem::clamp(const Field& f) const {
  Field out(f.n());
  for (int i = 0; i < f.n(); ++i) out[i] = std::min(upper[i], std::max(lower[i], f[i]));
  return out;
}

bool ControlProblem::admissible(const Field& f, double tol) const {
  for (int i = 0; i < f.n(); ++i)
    if (f[i] < lower[i] - tol || f[i] > upper[i] + tol) return false;
  return true;
}

ControlProblem make_box_problem(const DiscreteSpace& s, const ObstacleMap& map, double a, double b,
                                Field y_d, double nu, Field lower, Field upper, double rho0,
                                const Tolerances& tols) {
  if (!(nu > 0.0)) throw ConfigError("make_box_problem: nu must be positive");
  if (lower.n() != s.n_interior || upper.n() != s.n_interior || y_d.n() != s.n_interior)
    throw ConfigError("make_box_problem: dimension mismatch");
  if (!order_leq(lower, upper, 0.0)) throw ConfigError("make_box_problem: needs u_a <= u_b");
  if ((lower.values.array() < 0.0).any())
    throw ConfigError("make_box_problem: canonical interval needs u_a >= 0");

  ControlProblem prob;
  prob.space = &s;
  prob.map = &map;
  prob.a = a;
  prob.b = b;
  prob.y_d = std::move(y_d);
  prob.nu = nu;
  prob.bound_F = lumped_embed(s, upper);
  prob.interval = make_interval_from_bound(s, map, prob.bound_F, rho0, tols);
  prob.lower = std::move(lower);
  prob.upper = std::move(upper);
  return prob;
}

ReducedEvaluation reduced_objective(const ControlProblem& prob, double rho, const Field& f,
                                    ControlWarmState* warm, const Tolerances& tols) {
  const DiscreteSpace& s = *prob.space;
  if (!prob.admissible(f, tols.ord))
    throw ConfigError("reduced_objective: control is outside the box");
  const DualField load = lumped_embed(s, f);

  ExtremalOptions oy, oz;
  if (warm && warm->y) oy.start = *warm->y;
  if (warm && warm->z) oz.start = *warm->z;
  ReducedEvaluation ev;
  ev.y = iterate_extremal(s, rho, load, prob.interval, Branch::Max, *prob.map, oy, tols).solution;
  ev.z = iterate_extremal(s, rho, load, prob.interval, Branch::Min, *prob.map, oz, tols).solution;
  if (warm) {
    warm->y = ev.y;
    warm->z = ev.z;
  }

  const Field r(Eigen::VectorXd(prob.a * ev.y.values + prob.b * ev.z.values - prob.y_d.values));
  const double tracking = h_norm(s, r);
  const double tikhonov = lumped_norm(s, f); // collocated control pairing
  ev.value = 0.5 * tracking * tracking + 0.5 * prob.nu * tikhonov * tikhonov;
  return ev;
}

namespace {

Field dense_adjoint_solve(const DiscreteSpace& s, double rho, const ObstacleMap& map,
                          const Field& state, const Eigen::VectorXd& rhs, double* residual) {
  const int n = s.n_interior;
  const Field phi = map.eval(state);
  const Eigen::VectorXd D =
      penalty_slope_diag(s, rho, Field(Eigen::VectorXd(state.values - phi.values)));
  const Eigen::MatrixXd G = assemble_deriv_matrix(map, s, state);

  Eigen::MatrixXd A = s.stiffness.dense().transpose();
  A += (1.0 / rho) * (Eigen::MatrixXd::Identity(n, n) - G.transpose()) * D.asDiagonal();

  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  const Eigen::VectorXd p = lu.solve(rhs);
  const double res = (A * p - rhs).cwiseAbs().maxCoeff();
  const double scale = 1.0 + rhs.cwiseAbs().maxCoeff();
  if (!p.allFinite() || res > 1e-8 * scale)
    throw NumericalError("solve_adjoints: linear system residual " + std::to_string(res));
  if (residual) *residual = res;
  return Field(p);
}

} // namespace

AdjointPair solve_adjoints(const ControlProblem& prob, double rho, const Field& /*f*/,
                           const Field& y, const Field& z) {
  const DiscreteSpace& s = *prob.space;
  if (!prob.map->deriv_is_linear())
    throw ConfigError("solve_adjoints: obstacle-map derivative must be linear");
  const int n = s.n_interior;

  const Field r(Eigen::VectorXd(prob.a * y.values + prob.b * z.values - prob.y_d.values));
  const Eigen::VectorXd Jr = s.mass.apply(r.values);

  AdjointPair adj;
  if (prob.a == 0.0) {
    adj.p = Field(n);
  } else {
    adj.p = dense_adjoint_solve(s, rho, *prob.map, y, Eigen::VectorXd(-prob.a * Jr),
                                &adj.residual_p);
  }
  if (prob.b == 0.0) {
    adj.q = Field(n);
  } else {
    adj.q = dense_adjoint_solve(s, rho, *prob.map, z, Eigen::VectorXd(-prob.b * Jr),
                                &adj.residual_q);
  }
  return adj;
}

namespace {

Field reduced_gradient(const ControlProblem& prob, const Field& f, const AdjointPair& adj,
                       const std::optional<Field>& prox) {
  Eigen::VectorXd g = prob.nu * f.values - adj.p.values - adj.q.values;
  if (prox) g += f.values - prox->values;
  return Field(std::move(g));
}

// Pieces of the reduced Hessian contribution of one extremal branch:
// returns Binv_t * (w * M * S_total + T) with S = B^{-1} M_L the state
// sensitivity, T the penalty-band curvature term, all dense.
struct BranchLinearization {
  Eigen::MatrixXd S;     // dstate/dcontrol
  Eigen::MatrixXd Bt_lu; // unused storage; kept via solver below
};

Eigen::MatrixXd branch_sensitivity(const DiscreteSpace& s, double rho, const ObstacleMap& map,
                                   const Field& state, Eigen::MatrixXd* B_out,
                                   Eigen::VectorXd* band_out) {
  const int n = s.n_interior;
  const Field phi = map.eval(state);
  const Field gap(Eigen::VectorXd(state.values - phi.values));
  const Eigen::VectorXd D = penalty_slope_diag(s, rho, gap);
  const Eigen::MatrixXd G = assemble_deriv_matrix(map, s, state);
  Eigen::MatrixXd B = s.stiffness.dense();
  B += (1.0 / rho) * Eigen::MatrixXd(D.asDiagonal()) *
       (Eigen::MatrixXd::Identity(n, n) - G);
  if (band_out) {
    // Second derivative of the smoothing: 1/rho inside the band.
    band_out->resize(n);
    for (int i = 0; i < n; ++i)
      (*band_out)[i] =
          (gap[i] > 0.0 && gap[i] < rho) ? s.mass_lumped[i] / (rho * rho) : 0.0;
  }
  if (B_out) *B_out = B;
  return Eigen::PartialPivLU<Eigen::MatrixXd>(B).solve(
      Eigen::MatrixXd(s.mass_lumped.asDiagonal()));
}

/// One projected semismooth-Newton step on the stationarity system
/// g(f) = nu f - p - q (+ prox), with the exact penalty-band curvature
/// and the obstacle-map derivative frozen.  Returns the trial control.
Field newton_polish_step(const ControlProblem& prob, double rho, const Field& f,
                         const ReducedEvaluation& ev, const AdjointPair& adj,
                         const Field& grad, bool proximal) {
  const DiscreteSpace& s = *prob.space;
  const int n = s.n_interior;
  const Eigen::MatrixXd M = s.mass.dense();

  Eigen::MatrixXd Sy = Eigen::MatrixXd::Zero(n, n), Sz = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd By, Bz;
  Eigen::VectorXd bandy = Eigen::VectorXd::Zero(n), bandz = Eigen::VectorXd::Zero(n);
  if (prob.a != 0.0) Sy = branch_sensitivity(s, rho, *prob.map, ev.y, &By, &bandy);
  if (prob.b != 0.0) Sz = branch_sensitivity(s, rho, *prob.map, ev.z, &Bz, &bandz);
  const Eigen::MatrixXd Sr = prob.a * Sy + prob.b * Sz; // d(ay+bz)/df

  Eigen::MatrixXd H =
      (prob.nu + (proximal ? 1.0 : 0.0)) * Eigen::MatrixXd::Identity(n, n);
  if (prob.a != 0.0) {
    Eigen::MatrixXd rhs = prob.a * (M * Sr);
    rhs += Eigen::MatrixXd((adj.p.values.array() * bandy.array()).matrix().asDiagonal()) * Sy;
    H += Eigen::PartialPivLU<Eigen::MatrixXd>(By.transpose()).solve(rhs);
  }
  if (prob.b != 0.0) {
    Eigen::MatrixXd rhs = prob.b * (M * Sr);
    rhs += Eigen::MatrixXd((adj.q.values.array() * bandz.array()).matrix().asDiagonal()) * Sz;
    H += Eigen::PartialPivLU<Eigen::MatrixXd>(Bz.transpose()).solve(rhs);
  }

  // Active box set from the projected-gradient prediction.
  std::vector<char> clamped(n, 0);
  for (int i = 0; i < n; ++i) {
    const double pred = f[i] - grad[i];
    if (pred <= prob.lower[i] || pred >= prob.upper[i]) clamped[i] = 1;
  }
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i)
    if (clamped[i])
      delta[i] = (f[i] - grad[i] <= prob.lower[i] ? prob.lower[i] : prob.upper[i]) - f[i];

  std::vector<int> free;
  for (int i = 0; i < n; ++i)
    if (!clamped[i]) free.push_back(i);
  if (!free.empty()) {
    const int m = static_cast<int>(free.size());
    Eigen::MatrixXd Hff(m, m);
    Eigen::VectorXd rhs(m);
    for (int a = 0; a < m; ++a) {
      rhs[a] = -grad[free[a]];
      for (int b = 0; b < m; ++b) Hff(a, b) = H(free[a], free[b]);
      for (int i = 0; i < n; ++i)
        if (clamped[i]) rhs[a] -= H(free[a], i) * delta[i];
    }
    const Eigen::VectorXd df = Eigen::PartialPivLU<Eigen::MatrixXd>(Hff).solve(rhs);
    for (int a = 0; a < m; ++a) delta[free[a]] = df[a];
  }
  return prob.clamp(Field(Eigen::VectorXd(f.values + delta)));
}

} // namespace

OptimizeResult optimize(const ControlProblem& prob, const std::vector<double>& rho_schedule,
                        const Field& f0, const OptimizeOptions& opts, const Tolerances& tols) {
  const DiscreteSpace& s = *prob.space;
  if (rho_schedule.empty()) throw ConfigError("optimize: empty rho schedule");
  for (size_t k = 0; k + 1 < rho_schedule.size(); ++k)
    if (!(rho_schedule[k + 1] < rho_schedule[k]))
      throw ConfigError("optimize: rho schedule must be strictly decreasing");
  if (!prob.admissible(f0, tols.ord)) throw ConfigError("optimize: f0 is outside the box");

  std::mt19937_64 rng(opts.seed);
  std::optional<Field> prox;
  if (opts.proximal) prox = f0;

  OptimizeResult out;
  Field f = prob.clamp(f0);
  ControlWarmState warm;
  int global_iter = 0;
  double step = opts.initial_step;

  for (const double rho : rho_schedule) {
    ReducedEvaluation ev = reduced_objective(prob, rho, f, &warm, tols);
    // Armijo backtracking while decreases are measurable; once the
    // required decrease sinks below the evaluation noise of the inner
    // solves, the tail runs the projected-gradient fixed-point map
    // f <- clamp(f - t grad) with backtracking on the kkt residual
    // itself, which stays measurable all the way down.
    bool tail_mode = false;
    double tail_best = std::numeric_limits<double>::infinity();
    Field tail_best_f;
    ControlWarmState tail_best_warm;
    int explore_budget = 3;
    for (int it = 0; it < opts.max_iterations; ++it) {
      const AdjointPair adj = solve_adjoints(prob, rho, f, ev.y, ev.z);
      const Field grad = reduced_gradient(prob, f, adj, prox);

      const Field probe = prob.clamp(Field(Eigen::VectorXd(f.values - grad.values)));
      const double kkt = lumped_norm(s, Field(Eigen::VectorXd(f.values - probe.values)));

      TrajectoryPoint pt;
      pt.iteration = ++global_iter;
      pt.rho = rho;
      pt.value = ev.value;
      pt.kkt_residual = kkt;
      pt.step = step;
      pt.polish = tail_mode;

      if (global_iter % 10 == 0) {
        // Finite-difference spot check of the adjoint gradient.
        Field h(s.n_interior);
        for (int i = 0; i < h.n(); ++i) {
          std::uniform_real_distribution<double> uni(-1.0, 1.0);
          h[i] = uni(rng);
          if (f[i] <= prob.lower[i] + tols.ord) h[i] = std::abs(h[i]);
          if (f[i] >= prob.upper[i] - tols.ord) h[i] = -std::abs(h[i]);
        }
        const double fd_step = 1e-6;
        Field fh = prob.clamp(Field(Eigen::VectorXd(f.values + fd_step * h.values)));
        ControlWarmState w2 = warm;
        const double val_h = reduced_objective(prob, rho, fh, &w2, tols).value;
        const double directional =
            (s.mass_lumped.array() * grad.values.array() *
             (fh.values - f.values).array()).sum() / fd_step;
        const double fd = (val_h - ev.value) / fd_step;
        pt.gradient_check = std::abs(fd - directional) / std::max(1.0, std::abs(directional));
      }
      out.trajectory.push_back(pt);

      if (kkt <= opts.tol_kkt) break;
      if (it + 1 == opts.max_iterations)
        throw SolverError("optimize: no convergence at rho = " + sci(rho) +
                          ", kkt residual " + sci(kkt));
      if (kkt <= 1e-3) tail_mode = true; // polish takes over near stationarity

      if (!tail_mode) {
        bool accepted = false;
        double t = step;
        for (int ls = 0; ls < 60 && !accepted; ++ls) {
          Field trial = prob.clamp(Field(Eigen::VectorXd(f.values - t * grad.values)));
          const Eigen::VectorXd delta = trial.values - f.values;
          if (delta.cwiseAbs().maxCoeff() == 0.0) break; // pinned by the box
          ControlWarmState warm_trial = warm;
          ReducedEvaluation ev_trial = reduced_objective(prob, rho, trial, &warm_trial, tols);
          const double slope = (s.mass_lumped.array() * grad.values.array() *
                                delta.array()).sum();
          if (ev_trial.value <= ev.value + opts.armijo_slope * slope) {
            f = std::move(trial);
            ev = std::move(ev_trial);
            warm = std::move(warm_trial);
            step = std::min(opts.max_step, 2.0 * t);
            accepted = true;
          }
          t *= 0.5;
        }
        if (accepted) continue;
        // Decreases of order kkt^2 are no longer measurable against the
        // inner-solver noise only when already near stationarity.
        if (kkt > 1e-3)
          throw SolverError("optimize: line search failed at kkt residual " + sci(kkt));
        tail_mode = true;
        step = std::min(step, 1.0 / prob.nu);
      }

      const auto kkt_at = [&](const Field& trial, ControlWarmState& w,
                              ReducedEvaluation& e) {
        e = reduced_objective(prob, rho, trial, &w, tols);
        const AdjointPair adj_t = solve_adjoints(prob, rho, trial, e.y, e.z);
        const Field grad_t = reduced_gradient(prob, trial, adj_t, prox);
        const Field probe_t =
            prob.clamp(Field(Eigen::VectorXd(trial.values - grad_t.values)));
        return lumped_norm(s, Field(Eigen::VectorXd(trial.values - probe_t.values)));
      };

      bool moved = false;
      if (kkt < tail_best) {
        tail_best = kkt;
        tail_best_f = f;
        tail_best_warm = warm;
        explore_budget = 3;
      }

      // Semismooth-Newton polish first: the penalty band makes the
      // reduced problem too ill-conditioned for first-order steps.
      const Field target = newton_polish_step(prob, rho, f, ev, adj, grad, opts.proximal);
      for (double damp : {1.0, 0.5, 0.25, 0.1}) {
        Field trial(Eigen::VectorXd(f.values + damp * (target.values - f.values)));
        ControlWarmState w = warm;
        ReducedEvaluation e;
        const double kkt_t = kkt_at(trial, w, e);
        if (kkt_t < kkt) {
          f = std::move(trial);
          ev = std::move(e);
          warm = std::move(w);
          moved = true;
          break;
        }
      }
      // Fallback: backtracked projected-gradient step on the kkt merit.
      if (!moved) {
        double t = step;
        for (int bt = 0; bt < 50; ++bt) {
          Field trial = prob.clamp(Field(Eigen::VectorXd(f.values - t * grad.values)));
          ControlWarmState w = warm;
          ReducedEvaluation e;
          const double kkt_t = kkt_at(trial, w, e);
          if (kkt_t < kkt) {
            f = std::move(trial);
            ev = std::move(e);
            warm = std::move(w);
            step = std::min(opts.max_step, 1.5 * t);
            moved = true;
            break;
          }
          t *= 0.4;
        }
      }
      // Neither direction improves: the kkt merit has a corner-local
      // minimum (box-clamp manifold).  Take the full polish step anyway,
      // bounded by a watchdog on the best point seen.
      if (!moved) {
        if (explore_budget > 0) {
          --explore_budget;
          f = target;
          ev = reduced_objective(prob, rho, f, &warm, tols);
        } else {
          throw SolverError("optimize: stationarity polish stalled at kkt residual " +
                            sci(tail_best));
        }
      }
    }
    if (tail_mode && tail_best < std::numeric_limits<double>::infinity()) {
      // Hand the best tail point to the next level.
      bool current_better = false;
      {
        const AdjointPair adj = solve_adjoints(prob, rho, f, ev.y, ev.z);
        const Field grad = reduced_gradient(prob, f, adj, prox);
        const Field probe = prob.clamp(Field(Eigen::VectorXd(f.values - grad.values)));
        current_better =
            lumped_norm(s, Field(Eigen::VectorXd(f.values - probe.values))) <= tail_best;
      }
      if (!current_better) {
        f = tail_best_f;
        warm = tail_best_warm;
      }
    }
  }

  out.control = f;
  out.final_value = out.trajectory.empty() ? 0.0 : out.trajectory.back().value;
  out.final_kkt = out.trajectory.empty() ? 0.0 : out.trajectory.back().kkt_residual;
  return out;
}

bool StationarityCertificate::all_passed() const {
  for (const auto& [k, v] : passed)
    if (!v) return false;
  return true;
}

StationarityCertificate certify_stationarity(const ControlProblem& prob, const Field& f_star,
                                             double rho_small, const Tolerances& tols) {
  const DiscreteSpace& s = *prob.space;
  const ObstacleMap& map = *prob.map;
  const int n = s.n_interior;
  const DualField load = lumped_embed(s, f_star);

  StationarityCertificate cert;
  cert.rho = rho_small;

  // Exact branch states and complementarity multipliers (rho = 0).
  ExtremalOptions opts;
  cert.y = iterate_extremal(s, 0.0, load, prob.interval, Branch::Max, map, opts, tols).solution;
  cert.z = iterate_extremal(s, 0.0, load, prob.interval, Branch::Min, map, opts, tols).solution;
  cert.xi1 = DualField(Eigen::VectorXd(load.values - s.stiffness.apply(cert.y.values)));
  cert.xi2 = DualField(Eigen::VectorXd(load.values - s.stiffness.apply(cert.z.values)));

  // Penalized states and adjoints at the terminal rho.
  ExtremalOptions oy, oz;
  oy.start = cert.y;
  oz.start = cert.z;
  const Field y_rho =
      iterate_extremal(s, rho_small, load, prob.interval, Branch::Max, map, oy, tols).solution;
  const Field z_rho =
      iterate_extremal(s, rho_small, load, prob.interval, Branch::Min, map, oz, tols).solution;
  const AdjointPair adj = solve_adjoints(prob, rho_small, f_star, y_rho, z_rho);
  cert.p = adj.p;
  cert.q = adj.q;

  const Field phi_y = map.eval(y_rho);
  const Field phi_z = map.eval(z_rho);
  const Eigen::VectorXd Dy =
      penalty_slope_diag(s, rho_small, Field(Eigen::VectorXd(y_rho.values - phi_y.values)));
  const Eigen::VectorXd Dz =
      penalty_slope_diag(s, rho_small, Field(Eigen::VectorXd(z_rho.values - phi_z.values)));
  cert.lambda = DualField(Eigen::VectorXd((Dy.array() * cert.p.values.array()) / rho_small));
  cert.zeta = DualField(Eigen::VectorXd((Dz.array() * cert.q.values.array()) / rho_small));

  auto check = [&](const std::string& name, double value, double tol) {
    cert.residuals[name] = value;
    cert.passed[name] = value <= tol;
  };

  // State equations and multiplier feasibility.
  const Field phi_y0 = map.eval(cert.y);
  const Field phi_z0 = map.eval(cert.z);
  check("state_feasibility_y", order_violation(cert.y, phi_y0), tols.ord);
  check("state_feasibility_z", order_violation(cert.z, phi_z0), tols.ord);
  check("multiplier_sign_xi1", std::max(0.0, -cert.xi1.values.minCoeff()), tols.ord);
  check("multiplier_sign_xi2", std::max(0.0, -cert.xi2.values.minCoeff()), tols.ord);
  check("state_equation_y",
        (s.stiffness.apply(cert.y.values) + cert.xi1.values - load.values).cwiseAbs().maxCoeff(),
        1e-10);
  check("complementarity_xi1",
        std::abs(cert.xi1.values.dot(cert.y.values - phi_y0.values)), 1e-8);
  check("complementarity_xi2",
        std::abs(cert.xi2.values.dot(cert.z.values - phi_z0.values)), 1e-8);

  // Adjoint equations at the terminal rho.
  check("adjoint_residual_p", adj.residual_p, 1e-8);
  check("adjoint_residual_q", adj.residual_q, 1e-8);

  // Control variational inequality (box structure).
  const Field grad(
      Eigen::VectorXd(prob.nu * f_star.values - cert.p.values - cert.q.values));
  const Field probe = prob.clamp(Field(Eigen::VectorXd(f_star.values - grad.values)));
  check("control_vi", lumped_norm(s, Field(Eigen::VectorXd(f_star.values - probe.values))),
        1e-7);

  // Sign conditions <lambda, p>, <zeta, q> >= 0 (allow -1e-7).
  cert.residuals["sign_lambda_p"] = cert.lambda.pair(cert.p);
  cert.passed["sign_lambda_p"] = cert.residuals["sign_lambda_p"] >= -1e-7;
  cert.residuals["sign_zeta_q"] = cert.zeta.pair(cert.q);
  cert.passed["sign_zeta_q"] = cert.residuals["sign_zeta_q"] >= -1e-7;

  // Orthogonality of the exact multipliers with the adjoint parts.
  check("orth_xi1_p_plus", std::abs(cert.xi1.pair(pos_part(cert.p))), 1e-6);
  check("orth_xi1_p_minus", std::abs(cert.xi1.pair(neg_part(cert.p))), 1e-6);
  check("orth_xi2_q_plus", std::abs(cert.xi2.pair(pos_part(cert.q))), 1e-6);
  check("orth_xi2_q_minus", std::abs(cert.xi2.pair(neg_part(cert.q))), 1e-6);

  // Multiplier support: lambda vanishes where the state is inactive.
  double support_l = 0.0, support_z = 0.0;
  for (int i = 0; i < n; ++i) {
    if (cert.y[i] < phi_y0[i] - 1e-7) support_l = std::max(support_l, std::abs(cert.lambda[i]));
    if (cert.z[i] < phi_z0[i] - 1e-7) support_z = std::max(support_z, std::abs(cert.zeta[i]));
  }
  check("support_lambda", support_l, 1e-6);
  check("support_zeta", support_z, 1e-6);

  // Projection identity of the control VI for the Tikhonov gradient.
  {
    Eigen::VectorXd pq = (cert.p.values + cert.q.values) / prob.nu;
    Eigen::VectorXd ident(n);
    for (int i = 0; i < n; ++i) {
      const double plus_low = std::max(0.0, prob.lower[i] - pq[i]);
      const double plus_up = std::max(0.0, pq[i] - prob.upper[i]);
      ident[i] = pq[i] + plus_low - plus_up - f_star[i];
    }
    check("projection_identity", ident.cwiseAbs().maxCoeff(), 1e-6);
  }

  // Weighted sign diagnostic (reported only).
  {
    const auto weighted = [&](const DualField& mult, const Field& adj_state,
                              const std::function<double(double)>& w) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i) sum += mult[i] * w(s.node(i)) * adj_state[i];
      return sum;
    };
    const double pi = std::numbers::pi;
    cert.diagnostics["weighted_sign_lambda_1"] = weighted(cert.lambda, cert.p, [](double) { return 1.0; });
    cert.diagnostics["weighted_sign_lambda_x"] = weighted(cert.lambda, cert.p, [](double x) { return x; });
    cert.diagnostics["weighted_sign_lambda_1mx"] =
        weighted(cert.lambda, cert.p, [](double x) { return 1.0 - x; });
    cert.diagnostics["weighted_sign_lambda_sin"] =
        weighted(cert.lambda, cert.p, [pi](double x) { return std::sin(pi * x); });
  }

  return cert;
}

double bouligand_residual(const ControlProblem& prob, const Field& f_star, int n_directions,
                          unsigned seed, const Tolerances& tols) {
  const DiscreteSpace& s = *prob.space;
  const ObstacleMap& map = *prob.map;
  const int n = s.n_interior;
  const DualField load = lumped_embed(s, f_star);

  ExtremalOptions opts;
  const Field y = iterate_extremal(s, 0.0, load, prob.interval, Branch::Max, map, opts, tols).solution;
  const Field z = iterate_extremal(s, 0.0, load, prob.interval, Branch::Min, map, opts, tols).solution;
  const DualField xi1(Eigen::VectorXd(load.values - s.stiffness.apply(y.values)));
  const DualField xi2(Eigen::VectorXd(load.values - s.stiffness.apply(z.values)));

  const Field r(Eigen::VectorXd(prob.a * y.values + prob.b * z.values - prob.y_d.values));
  const Eigen::VectorXd Jr = s.mass.apply(r.values);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double worst = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_directions; ++k) {
    Field h(n);
    for (int i = 0; i < n; ++i) {
      h[i] = uni(rng);
      if (f_star[i] <= prob.lower[i] + tols.ord) h[i] = std::abs(h[i]);
      if (f_star[i] >= prob.upper[i] - tols.ord) h[i] = -std::abs(h[i]);
    }
    const DualField dh = lumped_embed(s, h);
    double val =
        prob.nu * (s.mass_lumped.array() * f_star.values.array() * h.values.array()).sum();
    if (prob.a != 0.0) {
      const Field ay = qvi_derivative(s, y, xi1, dh, map, {}, tols).derivative;
      val += prob.a * Jr.dot(ay.values);
    }
    if (prob.b != 0.0) {
      const Field az = qvi_derivative(s, z, xi2, dh, map, {}, tols).derivative;
      val += prob.b * Jr.dot(az.values);
    }
    worst = std::min(worst, val);
  }
  return worst;
}

} // namespace qvi
