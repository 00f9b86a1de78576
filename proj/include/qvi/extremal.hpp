#ifndef QVI_EXTREMAL_HPP
#define QVI_EXTREMAL_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qvi/solvers.hpp"

namespace qvi {

enum class Branch { Min, Max };

inline const char* branch_name(Branch b) { return b == Branch::Min ? "min" : "max"; }

/// Ordered interval [sub, sup] carrying the sub-/supersolution
/// certificates under which extremal solutions exist.
struct OrderInterval {
  Field sub;
  Field sup;
  double rho0 = 1.0;           // supersolution certified for all rho <= rho0
  double sub_violation = 0.0;  // recorded certificate slack
  double sup_violation = 0.0;
};

/// Canonical interval for sources 0 <= f <= F: sub = 0, sup = K^{-1} F.
/// Verifies F >= 0, Phi(0) >= 0 and the supersolution inequality
/// sup >= T_rho0(F, sup); violations beyond 1e-8 raise ConfigError,
/// marginal ones are recorded on the interval.
OrderInterval make_interval_from_bound(const DiscreteSpace& s, const ObstacleMap& map,
                                       const DualField& F, double rho0 = 1.0,
                                       const Tolerances& tols = {});

struct ExtremalResult {
  Branch branch = Branch::Max;
  Field solution;
  double rho = 0.0; // 0 means the exact VI / QVI branch
  std::vector<std::pair<int, double>> history; // (n, |u^n - u^{n-1}|_V)
  double fixed_point_residual = 0.0;
  bool monotone = true;
  int iterations = 0;
  /// True when the iteration stagnated at discretization scale instead
  /// of contracting to tol_fp: successive differences bottomed out below
  /// the stall ceiling and then grew.  The returned iterate is the one
  /// with the smallest fixed-point residual.  Happens for obstacle maps
  /// that are expansive at the solution, where the exact branch is a
  /// degenerate fixed point; the residual then sits at the mesh error
  /// level rather than at tol_fp.
  bool stalled = false;
};

struct ExtremalOptions {
  double tol_fp = 1e-9;
  int max_n = 200;
  /// Ceiling for the stall detector, as a multiple of h^2 (the V-norm
  /// scale of mesh-induced perturbations of a smooth state).  Growth of
  /// successive differences beyond best*growth_guard with the best
  /// difference above stall_factor*h^2 is a genuine divergence error.
  double stall_factor = 50.0;
  double growth_guard = 4.0;
  /// Start the iteration here instead of at the interval endpoint
  /// (continuation warm starts).  Endpoint starts assert the branch
  /// monotone direction; custom starts only record it.
  std::optional<Field> start;
  /// Called with (n, u^n) after every step; snapshot hook for plotting.
  std::function<void(int, const Field&)> observer;
};

/// Monotone fixed-point iteration u^n = T_rho(f, u^{n-1}) (S for rho = 0)
/// from the branch endpoint of the interval; converges to the maximal or
/// minimal solution on the interval.
ExtremalResult iterate_extremal(const DiscreteSpace& s, double rho, const DualField& f,
                                const OrderInterval& interval, Branch branch,
                                const ObstacleMap& map, const ExtremalOptions& opts = {},
                                const Tolerances& tols = {});

struct ContinuationReport {
  std::vector<ExtremalResult> results; // one per rho in the schedule
  ExtremalResult reference;            // rho = 0 run
  std::vector<double> errors_v;        // |Z_rho(f) - Z_0(f)|_V per rho
};

/// Warm-started sweep over a strictly decreasing rho schedule, followed
/// by the exact rho = 0 solve used as the reference.
ContinuationReport rho_continuation(const DiscreteSpace& s, const DualField& f,
                                    const OrderInterval& interval, Branch branch,
                                    const ObstacleMap& map, const std::vector<double>& rho_schedule,
                                    const ExtremalOptions& opts = {}, const Tolerances& tols = {});

/// Constants of the contraction estimate
///   |T_rho(f,phi) - T_rho(g,psi)|_V <= C_hat |f-g|_* + c_hat |phi-psi|_V
/// derived from C = C_a/2 and c_tilde = C_b C_L / C_a.  Requires
/// C_L < C_a/C_b; `valid` is false otherwise and the bound is infinite.
struct ContractionConstants {
  double c_tilde = 0.0;
  double C_hat = 0.0;
  double c_hat = 0.0;
  bool valid = false;
  double lipschitz_bound() const; // C_hat / (1 - c_hat)
};

ContractionConstants contraction_constants(double C_a, double C_b, double C_L);

struct LipschitzProbeReport {
  std::vector<double> ratios;    // |Z(g)-Z(f)|_V / |g-f|_*, skipped probes omitted
  double max_ratio = 0.0;
  double lipschitz_constant = 0.0; // C_L estimate used
  ContractionConstants constants;
  double bound = 0.0;  // C_hat / (1 - c_hat), infinite when !constants.valid
  bool violated = false;
  int skipped = 0;     // zero perturbations
};

/// Empirical Lipschitz diagnostic for the extremal map at f: solves the
/// perturbed problems for g = f + delta and compares the worst ratio
/// against the theoretical bound.  Each g must stay in {0 <= g <= F}.
LipschitzProbeReport lipschitz_probe(const DiscreteSpace& s, const DualField& f,
                                     const std::vector<DualField>& perturbations,
                                     const DualField& F, double rho,
                                     const OrderInterval& interval, Branch branch,
                                     const ObstacleMap& map, const ExtremalOptions& opts = {},
                                     const Tolerances& tols = {});

/// Membership test for the admissible set W = {0 <= g <= F}, nodewise on
/// load vectors.
bool in_admissible_set(const DualField& g, const DualField& F, double tol);

} // namespace qvi

#endif
