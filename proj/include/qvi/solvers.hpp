#ifndef QVI_SOLVERS_HPP
#define QVI_SOLVERS_HPP

#include <optional>
#include <vector>

#include "qvi/obstacle.hpp"
#include "qvi/penalty.hpp"
#include "qvi/space.hpp"

namespace qvi {

/// Shared solver tolerances.  Defaults follow the library-wide scheme:
/// ordering slack far below solver tolerances, complementarity matched
/// to the fixed-point tolerance.
struct Tolerances {
  double ord = 1e-10;        // slack for nodewise inequalities
  double comp = 1e-9;        // complementarity residual
  double newton_rel = 1e-11; // Newton: |F|_inf <= newton_rel * (1 + |f|_inf)
  double fixed_point = 1e-9; // successive V-difference in fixed-point loops
  double pdas_c = 1.0;       // active-set constant
  int max_newton = 200;
  int max_pdas = 100;
  int max_fixed_point = 200;
};

struct SolveReport {
  Field solution;
  int iterations = 0;
  double final_residual = 0.0;
  DualField multiplier;         // xi = f - K u (VI) or the scaled penalty term
  std::vector<int> active_set;  // nodes where the constraint/penalty is active
};

/// Obstacle problem  K u + xi = f,  xi >= 0,  u <= obstacle,
/// xi' (obstacle - u) = 0, solved by the primal-dual active-set method
/// (semismooth Newton on min(xi, c (obstacle - u)) = 0).
SolveReport solve_vi(const DiscreteSpace& s, const DualField& f, const Field& obstacle,
                     const std::optional<Field>& warm_start = std::nullopt,
                     const Tolerances& tols = {});

/// Penalized equation  K u + (1/rho) * penalty_load(u - phi_obstacle) = f
/// for the fixed obstacle given by obstacle_map.eval(phi), solved by
/// damped Newton with Armijo backtracking on the residual norm.
SolveReport solve_penalized(const DiscreteSpace& s, double rho, const DualField& f,
                            const Field& phi, const ObstacleMap& obstacle_map,
                            const std::optional<Field>& warm_start = std::nullopt,
                            const Tolerances& tols = {});

/// Same equation with the obstacle supplied directly.
SolveReport solve_penalized_obstacle(const DiscreteSpace& s, double rho, const DualField& f,
                                     const Field& obstacle,
                                     const std::optional<Field>& warm_start = std::nullopt,
                                     const Tolerances& tols = {});

} // namespace qvi

#endif
