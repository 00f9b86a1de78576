#ifndef QVI_PENALTY_HPP
#define QVI_PENALTY_HPP

#include "qvi/space.hpp"

namespace qvi {

struct PenaltyParams {
  double rho = 1.0;
  explicit PenaltyParams(double r) : rho(r) {
    if (!(rho > 0.0)) throw ConfigError("PenaltyParams: rho must be positive");
  }
};

/// C^1 smoothing of the positive part:
///   0 for r <= 0,  r^2/(2 rho) for 0 < r < rho,  r - rho/2 for r >= rho.
/// Satisfies 0 <= max(0,r) - smoothed_plus(rho,r) <= rho/2.
inline double smoothed_plus(double rho, double r) {
  if (r <= 0.0) return 0.0;
  if (r < rho) return r * r / (2.0 * rho);
  return r - rho / 2.0;
}

/// Derivative in r: 0, r/rho, or 1.  Values lie in [0,1]; Lipschitz
/// with constant 1/rho.
inline double smoothed_plus_prime(double rho, double r) {
  if (r <= 0.0) return 0.0;
  if (r < rho) return r / rho;
  return 1.0;
}

/// Superposition operator as a load vector with lumped-mass weights:
/// entry i is mass_lumped[i] * smoothed_plus(rho, v_i).  Nodal
/// evaluation keeps the operator order preserving on the discrete level.
inline DualField penalty_load(const DiscreteSpace& s, double rho, const Field& v) {
  if (!(rho > 0.0)) throw ConfigError("penalty_load: rho must be positive");
  if (v.n() != s.n_interior) throw ConfigError("penalty_load: dimension mismatch");
  DualField out(v.n());
  for (int i = 0; i < v.n(); ++i)
    out[i] = s.mass_lumped[i] * smoothed_plus(rho, v[i]);
  return out;
}

/// Diagonal of the linearization: entries mass_lumped[i] *
/// smoothed_plus_prime(rho, v_i).
inline Eigen::VectorXd penalty_slope_diag(const DiscreteSpace& s, double rho, const Field& v) {
  if (!(rho > 0.0)) throw ConfigError("penalty_slope_diag: rho must be positive");
  if (v.n() != s.n_interior) throw ConfigError("penalty_slope_diag: dimension mismatch");
  Eigen::VectorXd d(v.n());
  for (int i = 0; i < v.n(); ++i)
    d[i] = s.mass_lumped[i] * smoothed_plus_prime(rho, v[i]);
  return d;
}

} // namespace qvi

#endif
