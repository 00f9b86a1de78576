#ifndef QVI_CONTROL_HPP
#define QVI_CONTROL_HPP

#include <map>
#include <random>

#include "qvi/sensitivity.hpp"

namespace qvi {

/// Box-constrained control problem
///   min 1/2 |a y + b z - y_d|_H^2 + nu/2 |f|_H^2,
///   y, z the maximal/minimal branch states for the source given by f,
///   u_a <= f <= u_b nodewise.
/// Controls are nodal H-functions; their load vectors feed the solvers.
struct ControlProblem {
  const DiscreteSpace* space = nullptr;
  const ObstacleMap* map = nullptr;
  double a = 1.0;
  double b = 0.0;
  Field y_d;
  double nu = 1e-2;
  Field lower; // u_a
  Field upper; // u_b
  OrderInterval interval; // valid for every admissible source
  DualField bound_F;      // upper bound of the admissible source set

  Field clamp(const Field& f) const;
  bool admissible(const Field& f, double tol) const;
};

/// Problem with the canonical interval built from the box: requires
/// 0 <= u_a <= u_b, takes F as the load of u_b.
ControlProblem make_box_problem(const DiscreteSpace& s, const ObstacleMap& map, double a, double b,
                                Field y_d, double nu, Field lower, Field upper,
                                double rho0 = 1.0, const Tolerances& tols = {});

struct ReducedEvaluation {
  double value = 0.0;
  Field y; // maximal branch state
  Field z; // minimal branch state
};

/// Warm-start bundle threaded through repeated evaluations.
struct ControlWarmState {
  std::optional<Field> y;
  std::optional<Field> z;
};

ReducedEvaluation reduced_objective(const ControlProblem& prob, double rho, const Field& f,
                                    ControlWarmState* warm = nullptr,
                                    const Tolerances& tols = {});

struct AdjointPair {
  Field p; // maximal-branch adjoint
  Field q; // minimal-branch adjoint
  double residual_p = 0.0;
  double residual_q = 0.0;
};

/// Adjoint solves at the (penalized) states y, z:
///   (K' + (1/rho)(I - G') D) p = -a M (a y + b z - y_d)
/// with G the matrix of the obstacle-map derivative at y and D the
/// penalty slope diagonal; mirrored for q at z.  Requires a linear
/// obstacle-map derivative.
AdjointPair solve_adjoints(const ControlProblem& prob, double rho, const Field& f, const Field& y,
                           const Field& z);

struct TrajectoryPoint {
  int iteration = 0;
  double rho = 0.0;
  double value = 0.0;
  double kkt_residual = 0.0;
  double step = 0.0;
  double gradient_check = -1.0; // |fd - directional|/max(1,|directional|) when sampled
  bool polish = false;          // stationarity-polish phase (kkt-driven, not Armijo)
};

struct OptimizeOptions {
  double tol_kkt = 1e-7;
  int max_iterations = 4000; // per rho level
  double armijo_slope = 1e-4;
  double initial_step = 1.0;
  double max_step = 1e6;
  bool proximal = false;     // add 1/2 |f - f_prox|^2 with f_prox = start point
  unsigned seed = 7;         // direction sampling for the gradient spot check
};

struct OptimizeResult {
  Field control;
  std::vector<TrajectoryPoint> trajectory;
  double final_value = 0.0;
  double final_kkt = 0.0;
};

/// Projected gradient with Armijo backtracking on the reduced objective,
/// warm-started across the strictly decreasing rho schedule.
OptimizeResult optimize(const ControlProblem& prob, const std::vector<double>& rho_schedule,
                        const Field& f0, const OptimizeOptions& opts = {},
                        const Tolerances& tols = {});

struct StationarityCertificate {
  Field y, z; // exact extremal branch states at the control
  Field p, q;
  DualField lambda, zeta;
  DualField xi1, xi2;
  double rho = 0.0;
  std::map<std::string, double> residuals;
  std::map<std::string, bool> passed;
  std::map<std::string, double> diagnostics; // reported, not asserted

  bool all_passed() const;
};

/// Assemble and check the first-order stationarity system at f_star:
/// exact branch states and multipliers at rho = 0, adjoint quantities at
/// the terminal penalization rho_small.  Records residuals and pass
/// flags; never throws on a failed check.
StationarityCertificate certify_stationarity(const ControlProblem& prob, const Field& f_star,
                                             double rho_small = 1e-6,
                                             const Tolerances& tols = {});

/// Most negative sampled value of the directional stationarity quantity
///   <J_y, M'(f)(h)> + <J_z, m'(f)(h)> + <J_f, h>
/// over tangent directions h of the box at f_star.
double bouligand_residual(const ControlProblem& prob, const Field& f_star, int n_directions = 50,
                          unsigned seed = 7, const Tolerances& tols = {});

} // namespace qvi

#endif
