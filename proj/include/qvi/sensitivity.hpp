#ifndef QVI_SENSITIVITY_HPP
#define QVI_SENSITIVITY_HPP

#include "qvi/extremal.hpp"

namespace qvi {

/// Nodal partition of the constraint state at a converged solution:
/// strongly active (multiplier above tol_mult), biactive (touching with
/// vanishing multiplier) and inactive nodes, plus the current cone shift.
struct CriticalCone {
  std::vector<int> strongly_active;
  std::vector<int> biactive;
  std::vector<int> inactive;
  Field shift; // derivative of the obstacle map in the current direction

  double tol_act = 1e-7;
  double tol_mult = 1e-7;
};

CriticalCone build_critical_cone(const Field& u, const Field& phi_u, const DualField& xi,
                                 double tol_act = 1e-7, double tol_mult = 1e-7);

struct DerivativeResult {
  DualField direction;
  Field derivative;
  int fixed_point_iters = 0;
  double residual = 0.0;                       // defining equation / VI residual
  std::vector<std::pair<double, double>> fd_errors; // (step s, quotient error in V)
  int biactive_ties = 0;                       // PDAS ties broken toward inactivity
};

struct DerivativeOptions {
  double tol_fp = 1e-10;
  double tol_residual = 1e-9;
  int max_outer = 400;
};

/// Directional derivative of the penalized extremal map: alpha solves
///   K alpha + (1/rho) D (alpha - Phi'(u)(alpha)) = d,
/// D the penalty slope diagonal at u - Phi(u), by the contraction
/// iteration with one SPD tridiagonal solve per step.
DerivativeResult penalized_derivative(const DiscreteSpace& s, double rho, const Field& u,
                                      const DualField& d, const ObstacleMap& map,
                                      const DerivativeOptions& opts = {});

/// Directional derivative of the QVI extremal map: alpha solves the
/// inequality on the shifted critical cone
///   alpha = shift on strongly active, alpha <= shift biactive, free inside,
/// iterated over the shift Phi'(u)(alpha).  Inner solves use the same
/// active-set method as the forward problem.
DerivativeResult qvi_derivative(const DiscreteSpace& s, const Field& u, const DualField& xi,
                                const DualField& d, const ObstacleMap& map,
                                const DerivativeOptions& opts = {},
                                const Tolerances& tols = {});

/// Finite-difference verification: fills fd_errors of a computed
/// derivative with |(Z(f+s d) - Z(f))/s - alpha|_V over the given steps
/// (warm-started extremal solves; rho = 0 uses the VI branch).
void fd_check(DerivativeResult& result, const DiscreteSpace& s, double rho, const DualField& f,
              const OrderInterval& interval, Branch branch, const ObstacleMap& map,
              const std::vector<double>& steps, const Tolerances& tols = {});

struct HadamardReport {
  std::vector<std::pair<double, double>> fixed_errors; // direction d held fixed
  std::vector<std::pair<double, double>> sequence_errors; // d_k = d + e/k
  bool pass = false;
};

/// Sequential-direction check of the derivative: quotients along
/// d_k = d + e/k at steps s_k must track the fixed-direction quotients
/// within 10 percent.  All probed sources must stay in {0 <= g <= F}.
HadamardReport hadamard_check(const DiscreteSpace& s, double rho, const DualField& f,
                              const DualField& d, const DualField& e, const DualField& F,
                              const OrderInterval& interval, Branch branch,
                              const ObstacleMap& map, const std::vector<double>& steps,
                              const Tolerances& tols = {});

} // namespace qvi

#endif
