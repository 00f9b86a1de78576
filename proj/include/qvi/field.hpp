#ifndef QVI_FIELD_HPP
#define QVI_FIELD_HPP

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "qvi/errors.hpp"

namespace qvi {

using Vector = Eigen::VectorXd;

/// Nodal coefficient vector of a P1 function with homogeneous Dirichlet
/// boundary (only interior nodes are stored).
struct Field {
  Vector values;

  Field() = default;
  explicit Field(Vector v) : values(std::move(v)) {}
  explicit Field(int n) : values(Vector::Zero(n)) {}

  int n() const { return static_cast<int>(values.size()); }
  double& operator[](int i) { return values[i]; }
  double operator[](int i) const { return values[i]; }
};

/// Load-vector representation of a functional: entry i is the pairing
/// with the i-th nodal basis function.
struct DualField {
  Vector values;

  DualField() = default;
  explicit DualField(Vector v) : values(std::move(v)) {}
  explicit DualField(int n) : values(Vector::Zero(n)) {}

  int n() const { return static_cast<int>(values.size()); }
  double& operator[](int i) { return values[i]; }
  double operator[](int i) const { return values[i]; }

  /// Duality pairing with a nodal field of matching dimension.
  double pair(const Field& v) const {
    if (v.n() != n()) throw ConfigError("DualField::pair: dimension mismatch");
    return values.dot(v.values);
  }
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

/// Nodewise positive part max(0, v).
inline Field pos_part(const Field& v) {
  return Field(v.values.cwiseMax(0.0));
}

inline Field neg_part(const Field& v) {
  return Field((-v.values).cwiseMax(0.0));
}

/// Lattice operations, nodewise.  inf(x,y) = x - (x-y)^+.
inline Field lattice_inf(const Field& x, const Field& y) {
  if (x.n() != y.n()) throw ConfigError("lattice_inf: dimension mismatch");
  return Field(x.values.cwiseMin(y.values));
}

inline Field lattice_sup(const Field& x, const Field& y) {
  if (x.n() != y.n()) throw ConfigError("lattice_sup: dimension mismatch");
  return Field(x.values.cwiseMax(y.values));
}

/// x <= y nodewise up to slack tol.
inline bool order_leq(const Field& x, const Field& y, double tol) {
  if (x.n() != y.n()) throw ConfigError("order_leq: dimension mismatch");
  return ((x.values - y.values).array() <= tol).all();
}

/// Discrete surrogate of the dual-space order: entrywise on load vectors.
inline bool order_leq(const DualField& x, const DualField& y, double tol) {
  if (x.n() != y.n()) throw ConfigError("order_leq: dimension mismatch");
  return ((x.values - y.values).array() <= tol).all();
}

/// Largest amount by which x exceeds y anywhere (0 when x <= y).
inline double order_violation(const Field& x, const Field& y) {
  return std::max(0.0, (x.values - y.values).maxCoeff());
}

} // namespace qvi

#endif
