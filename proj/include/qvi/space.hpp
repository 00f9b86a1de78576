#ifndef QVI_SPACE_HPP
#define QVI_SPACE_HPP

#include <functional>

#include "qvi/field.hpp"
#include "qvi/tridiag.hpp"

namespace qvi {

/// P1 discretization of the triple H^1_0(0,1) in L^2(0,1) on a uniform
/// mesh.  Holds the operator matrix for A = -(a u')', the mass matrices
/// and the matrices backing the norms:
///
///   |v|_V^2  = v' L v      (L = stiffness of a == 1, the H^1_0 seminorm)
///   |v|_H^2  = v' M v
///   |f|_*^2  = f' L^{-1} f (discrete Riesz map)
///
/// With this V-norm the coefficients give coercivity = min a and
/// boundedness = max a, so a == 1 has both equal to one.
struct DiscreteSpace {
  int n_interior = 0;
  double h = 0.0;
  TriDiag stiffness;            // K, operator matrix of A
  TriDiag norm_stiffness;       // L, stiffness of a == 1 (equals K when a == 1)
  TriDiag mass;                 // consistent mass M
  Eigen::VectorXd mass_lumped;  // diagonal of M_L (h per interior node)
  double coercivity = 1.0;      // C_a
  double boundedness = 1.0;     // C_b
  bool self_adjoint = true;

  /// Interior node coordinate, i = 0..n_interior-1.
  double node(int i) const { return h * (i + 1); }
};

/// Assemble the space for n_interior >= 2 interior nodes and diffusion
/// coefficient a(x) >= a0 > 0 (sampled at element midpoints).
/// Throws ConfigError on bad sizes or a non-positive coefficient, and
/// asserts the M-matrix sign pattern of the stiffness.
DiscreteSpace assemble_space(int n_interior, const std::function<double(double)>& a);

/// Shorthand for the constant-coefficient Laplacian a == 1.
DiscreteSpace assemble_space(int n_interior);

double v_norm(const DiscreteSpace& s, const Field& v);
double h_norm(const DiscreteSpace& s, const Field& v);
double dual_norm(const DiscreteSpace& s, const DualField& f);
double v_inner(const DiscreteSpace& s, const Field& u, const Field& v);
double h_inner(const DiscreteSpace& s, const Field& u, const Field& v);

/// Solve matrix * x = rhs for a tridiagonal system (typically K or a
/// diagonal modification of it).  Guarantees a residual
/// |matrix*x - rhs|_inf <= 1e-12 * |rhs|_inf via one step of iterative
/// refinement; throws NumericalError otherwise.
Field solve_linear(const TriDiag& matrix, const DualField& rhs);

/// Interpolate a function at the interior nodes.
Field interpolate(const DiscreteSpace& s, const std::function<double(double)>& fn);

/// Load vector of a smooth source: per-element two-point Gauss
/// quadrature of f against the hat functions.
DualField load_vector(const DiscreteSpace& s, const std::function<double(double)>& f);

/// Embed a nodal H-function into the dual space: load = M * v.
DualField h_embed(const DiscreteSpace& s, const Field& v);

/// Collocated embedding with lumped-mass weights: load_i = (M_L)_ii v_i.
/// Used for control variables so that the nodewise box projection is the
/// exact H-projection.
DualField lumped_embed(const DiscreteSpace& s, const Field& v);

/// Lumped-mass norm sqrt(sum (M_L)_ii v_i^2).
double lumped_norm(const DiscreteSpace& s, const Field& v);

/// Apply the operator matrix: f = K v.
DualField apply_operator(const DiscreteSpace& s, const Field& v);

} // namespace qvi

#endif
