#include "qvi/space.hpp"

#include <cmath>
#include <string>

namespace qvi {

namespace {

// Stiffness of -(a u')' on interior nodes, a sampled at element midpoints.
TriDiag assemble_stiffness(int n, double h, const std::function<double(double)>& a) {
  TriDiag K(n);
  const int n_elem = n + 1;
  Eigen::VectorXd ae(n_elem);
  for (int e = 0; e < n_elem; ++e) {
    const double mid = h * (e + 0.5);
    ae[e] = a(mid);
    if (!(ae[e] > 0.0))
      throw ConfigError("assemble_space: coefficient a(" + std::to_string(mid) +
                        ") = " + std::to_string(ae[e]) + " is not positive");
  }
  for (int i = 0; i < n; ++i) {
    K.diag[i] = (ae[i] + ae[i + 1]) / h;
    if (i + 1 < n) {
      K.upper[i] = -ae[i + 1] / h;
      K.lower[i] = -ae[i + 1] / h;
    }
  }
  return K;
}

TriDiag assemble_mass(int n, double h) {
  TriDiag M(n);
  for (int i = 0; i < n; ++i) {
    M.diag[i] = 4.0 * h / 6.0;
    if (i + 1 < n) {
      M.upper[i] = h / 6.0;
      M.lower[i] = h / 6.0;
    }
  }
  return M;
}

} // namespace

DiscreteSpace assemble_space(int n_interior, const std::function<double(double)>& a) {
  if (n_interior < 2) throw ConfigError("assemble_space: need n_interior >= 2");
  DiscreteSpace s;
  s.n_interior = n_interior;
  s.h = 1.0 / (n_interior + 1);
  s.stiffness = assemble_stiffness(n_interior, s.h, a);
  s.norm_stiffness = assemble_stiffness(n_interior, s.h, [](double) { return 1.0; });
  s.mass = assemble_mass(n_interior, s.h);
  // Row-sum lumping: conserves the total mass row by row.
  s.mass_lumped.resize(n_interior);
  for (int i = 0; i < n_interior; ++i) {
    double row = s.mass.diag[i];
    if (i > 0) row += s.mass.lower[i - 1];
    if (i + 1 < n_interior) row += s.mass.upper[i];
    s.mass_lumped[i] = row;
  }

  double amin = std::numeric_limits<double>::infinity(), amax = 0.0;
  for (int e = 0; e <= n_interior; ++e) {
    const double v = a(s.h * (e + 0.5));
    amin = std::min(amin, v);
    amax = std::max(amax, v);
  }
  s.coercivity = amin;
  s.boundedness = amax;
  s.self_adjoint = true;

  // M-matrix sign pattern with weak diagonal dominance underpins every
  // discrete comparison principle used downstream.
  for (int i = 0; i < n_interior; ++i) {
    double off = 0.0;
    if (i > 0) off += std::abs(s.stiffness.lower[i - 1]);
    if (i + 1 < n_interior) off += std::abs(s.stiffness.upper[i]);
    if (i > 0 && s.stiffness.lower[i - 1] > 0.0)
      throw NumericalError("assemble_space: stiffness is not an M-matrix (positive off-diagonal)");
    if (i + 1 < n_interior && s.stiffness.upper[i] > 0.0)
      throw NumericalError("assemble_space: stiffness is not an M-matrix (positive off-diagonal)");
    if (s.stiffness.diag[i] < off * (1.0 - 1e-12))
      throw NumericalError("assemble_space: stiffness row " + std::to_string(i) +
                           " is not diagonally dominant");
  }
  return s;
}

DiscreteSpace assemble_space(int n_interior) {
  return assemble_space(n_interior, [](double) { return 1.0; });
}

double v_inner(const DiscreteSpace& s, const Field& u, const Field& v) {
  if (u.n() != s.n_interior || v.n() != s.n_interior)
    throw ConfigError("v_inner: dimension mismatch");
  return u.values.dot(s.norm_stiffness.apply(v.values));
}

double h_inner(const DiscreteSpace& s, const Field& u, const Field& v) {
  if (u.n() != s.n_interior || v.n() != s.n_interior)
    throw ConfigError("h_inner: dimension mismatch");
  return u.values.dot(s.mass.apply(v.values));
}

double v_norm(const DiscreteSpace& s, const Field& v) {
  return std::sqrt(std::max(0.0, v_inner(s, v, v)));
}

double h_norm(const DiscreteSpace& s, const Field& v) {
  return std::sqrt(std::max(0.0, h_inner(s, v, v)));
}

double dual_norm(const DiscreteSpace& s, const DualField& f) {
  if (f.n() != s.n_interior) throw ConfigError("dual_norm: dimension mismatch");
  const Eigen::VectorXd r = s.norm_stiffness.solve(f.values);
  return std::sqrt(std::max(0.0, f.values.dot(r)));
}

Field solve_linear(const TriDiag& matrix, const DualField& rhs) {
  Eigen::VectorXd x = matrix.solve(rhs.values);
  // Backward-stable residual target: |rhs|_inf alone can sit far below
  // eps * |A| |x| for stiff systems, so normalize with both.
  const auto tol_for = [&](const Eigen::VectorXd& sol) {
    double anorm = 0.0;
    for (int i = 0; i < matrix.n(); ++i) {
      double row = std::abs(matrix.diag[i]);
      if (i > 0) row += std::abs(matrix.lower[i - 1]);
      if (i + 1 < matrix.n()) row += std::abs(matrix.upper[i]);
      anorm = std::max(anorm, row);
    }
    const double scale =
        rhs.values.cwiseAbs().maxCoeff() + anorm * sol.cwiseAbs().maxCoeff();
    return 1e-12 * (scale > 0.0 ? scale : 1.0);
  };
  Eigen::VectorXd res = rhs.values - matrix.apply(x);
  if (res.cwiseAbs().maxCoeff() > tol_for(x)) {
    x += matrix.solve(res); // one refinement step
    res = rhs.values - matrix.apply(x);
    if (res.cwiseAbs().maxCoeff() > tol_for(x))
      throw NumericalError("solve_linear: residual " + std::to_string(res.cwiseAbs().maxCoeff()) +
                           " exceeds tolerance after refinement");
  }
  return Field(std::move(x));
}

Field interpolate(const DiscreteSpace& s, const std::function<double(double)>& fn) {
  Field v(s.n_interior);
  for (int i = 0; i < s.n_interior; ++i) v[i] = fn(s.node(i));
  return v;
}

DualField load_vector(const DiscreteSpace& s, const std::function<double(double)>& f) {
  const int n = s.n_interior;
  const double h = s.h;
  DualField b(n);
  // Two-point Gauss per element against the two hats.
  const double g = 0.5 / std::sqrt(3.0);
  for (int e = 0; e <= n; ++e) {
    const double xl = h * e;
    const double xm = xl + 0.5 * h;
    for (const double q : {xm - g * h, xm + g * h}) {
      const double t = (q - xl) / h; // hat of right node; 1-t for left node
      const double w = 0.5 * h * f(q);
      if (e > 0) b[e - 1] += w * (1.0 - t);
      if (e < n) b[e] += w * t;
    }
  }
  return b;
}

DualField h_embed(const DiscreteSpace& s, const Field& v) {
  if (v.n() != s.n_interior) throw ConfigError("h_embed: dimension mismatch");
  return DualField(s.mass.apply(v.values));
}

DualField lumped_embed(const DiscreteSpace& s, const Field& v) {
  if (v.n() != s.n_interior) throw ConfigError("lumped_embed: dimension mismatch");
  return DualField(Eigen::VectorXd(s.mass_lumped.array() * v.values.array()));
}

double lumped_norm(const DiscreteSpace& s, const Field& v) {
  if (v.n() != s.n_interior) throw ConfigError("lumped_norm: dimension mismatch");
  return std::sqrt((s.mass_lumped.array() * v.values.array().square()).sum());
}

DualField apply_operator(const DiscreteSpace& s, const Field& v) {
  if (v.n() != s.n_interior) throw ConfigError("apply_operator: dimension mismatch");
  return DualField(s.stiffness.apply(v.values));
}

} // namespace qvi
