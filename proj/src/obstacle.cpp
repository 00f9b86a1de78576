#include "qvi/obstacle.hpp"

#include <cmath>
#include <numbers>

namespace qvi {

namespace {

constexpr double kPi = std::numbers::pi;

double g_fn(double s) {
  const double m = std::min(0.0, s);
  return 4.0 * m * m;
}

double g_prime(double s) { return 8.0 * std::min(0.0, s); }

// Upper bidiagonal Cholesky factor R of an SPD tridiagonal, R'R = A.
struct BidiagChol {
  Eigen::VectorXd d, e; // R(i,i) = d[i], R(i,i+1) = e[i]

  explicit BidiagChol(const TriDiag& A) {
    const int n = A.n();
    d.resize(n);
    e.resize(n > 0 ? n - 1 : 0);
    double prev_e = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = A.diag[i] - prev_e * prev_e;
      if (!(v > 0.0)) throw NumericalError("BidiagChol: matrix not positive definite");
      d[i] = std::sqrt(v);
      if (i + 1 < n) {
        e[i] = A.upper[i] / d[i];
        prev_e = e[i];
      }
    }
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    const int n = static_cast<int>(d.size());
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i)
      y[i] = d[i] * x[i] + (i + 1 < n ? e[i] * x[i + 1] : 0.0);
    return y;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& y) const { // R x = y
    const int n = static_cast<int>(d.size());
    Eigen::VectorXd x(n);
    for (int i = n - 1; i >= 0; --i)
      x[i] = (y[i] - (i + 1 < n ? e[i] * x[i + 1] : 0.0)) / d[i];
    return x;
  }
};

} // namespace

Eigen::MatrixXd assemble_deriv_matrix(const ObstacleMap& map, const DiscreteSpace& s,
                                      const Field& base) {
  const int n = s.n_interior;
  Eigen::MatrixXd B(n, n);
  Field e(n);
  for (int j = 0; j < n; ++j) {
    e.values.setZero();
    e[j] = 1.0;
    B.col(j) = map.deriv(base, e).values;
  }
  return B;
}

double linear_map_v_norm(const DiscreteSpace& s, const Eigen::MatrixXd& B) {
  const BidiagChol R(s.norm_stiffness);
  const int n = static_cast<int>(B.rows());

  const auto apply_rt = [&](const Eigen::VectorXd& z) { // R^T z
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      double v = R.d[i] * z[i];
      if (i > 0) v += R.e[i - 1] * z[i - 1];
      y[i] = v;
    }
    return y;
  };
  const auto solve_rt = [&](const Eigen::VectorXd& y) { // R^T w = y
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) {
      double v = y[i];
      if (i > 0) v -= R.e[i - 1] * w[i - 1];
      w[i] = v / R.d[i];
    }
    return w;
  };

  // |B|_V = spectral norm of C = R B R^{-1}; power iteration on C^T C.
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(n, 1.0, 2.0).normalized();
  double norm2 = 0.0;
  for (int it = 0; it < 80; ++it) {
    const Eigen::VectorXd cx = R.apply(B * R.solve(x));
    const Eigen::VectorXd z = solve_rt(B.transpose() * apply_rt(cx));
    const double nz = z.norm();
    if (nz == 0.0) return 0.0;
    norm2 = nz;
    x = z / nz;
  }
  return std::sqrt(norm2);
}

// ---------------------------------------------------------------------------
// InverseLaplacianObstacle

Field InverseLaplacianObstacle::eval(const Field& u) const {
  if (u.n() != space_->n_interior) throw ConfigError("InverseLaplacianObstacle: dimension mismatch");
  return solve_linear(space_->norm_stiffness, h_embed(*space_, u));
}

Field InverseLaplacianObstacle::deriv(const Field&, const Field& h) const {
  return solve_linear(space_->norm_stiffness, h_embed(*space_, h));
}

double InverseLaplacianObstacle::lipschitz_estimate(const Field&, double) const {
  std::lock_guard<std::mutex> lock(mutex_);
  if (!cached_norm_) {
    const Field zero(space_->n_interior);
    cached_norm_ = linear_map_v_norm(*space_, assemble_deriv_matrix(*this, *space_, zero));
  }
  return *cached_norm_;
}

// ---------------------------------------------------------------------------
// NeumannSpace

NeumannSpace NeumannSpace::on_grid_of(const DiscreteSpace& s) {
  NeumannSpace ns;
  ns.n_total = s.n_interior + 2;
  ns.h = s.h;
  const int n = ns.n_total;
  ns.stiffness = TriDiag(n);
  for (int i = 0; i < n; ++i) {
    ns.stiffness.diag[i] = (i == 0 || i == n - 1) ? 1.0 / ns.h : 2.0 / ns.h;
    if (i + 1 < n) {
      ns.stiffness.upper[i] = -1.0 / ns.h;
      ns.stiffness.lower[i] = -1.0 / ns.h;
    }
  }
  ns.mass_lumped = Eigen::VectorXd::Constant(n, ns.h);
  ns.mass_lumped[0] = ns.h / 2.0;
  ns.mass_lumped[n - 1] = ns.h / 2.0;
  return ns;
}

// ---------------------------------------------------------------------------
// ThermoformingObstacle

double ThermoformingContraction::lipschitz_bound(double R) {
  return (50.0 / 3.0) * (R + (20.0 * (1.0 + kPi) / (3.0 * kPi)) * R * R);
}

double ThermoformingContraction::state_bound(double R) {
  return 0.5 * R + (10.0 * (1.0 + kPi) / (3.0 * kPi)) * R * R;
}

ThermoformingContraction ThermoformingObstacle::certified_contraction() {
  ThermoformingContraction c{};
  c.radius_star = 3.0 / (10.0 * (1.0 + kPi)) *
                  (std::sqrt((13.0 * kPi * kPi + 8.0 * kPi) / 80.0) - kPi / 4.0);
  return c;
}

ThermoformingObstacle::ThermoformingObstacle(const DiscreteSpace& space)
    : space_(&space), neumann_(NeumannSpace::on_grid_of(space)), k_(kPi * kPi) {
  const int n = neumann_.n_total;
  varphi_.resize(n);
  psi_weight_.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x = neumann_.node(i);
    const double den = 5.0 - std::cos(2.0 * kPi * x);
    varphi_[i] = 10.0 * kPi * kPi * std::sin(kPi * x) / den;
    psi_weight_[i] = 5.0 * kPi * kPi * std::sin(kPi * x) / den;
  }
}

Eigen::VectorXd ThermoformingObstacle::extend(const Field& u) const {
  if (u.n() != space_->n_interior) throw ConfigError("ThermoformingObstacle: dimension mismatch");
  Eigen::VectorXd ue = Eigen::VectorXd::Zero(neumann_.n_total);
  ue.segment(1, u.n()) = u.values;
  return ue;
}

Eigen::VectorXd ThermoformingObstacle::solve_temperature(const Field& u) const {
  const Eigen::VectorXd ue = extend(u);
  const int n = neumann_.n_total;

  Eigen::VectorXd T = Eigen::VectorXd::Zero(n);
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    if (cache_) T = cache_->second; // warm start from the last solve
  }

  const auto residual = [&](const Eigen::VectorXd& t) {
    Eigen::VectorXd r = neumann_.stiffness.apply(t);
    for (int i = 0; i < n; ++i)
      r[i] += neumann_.mass_lumped[i] * (k_ * t[i] - g_fn(psi_weight_[i] * t[i] - ue[i]));
    return r;
  };

  Eigen::VectorXd F = residual(T);
  const double tol = 1e-12 * (1.0 + ue.cwiseAbs().maxCoeff());
  double fnorm = F.cwiseAbs().maxCoeff();
  const int max_iter = 80;
  for (int it = 0; it < max_iter && fnorm > tol; ++it) {
    TriDiag J = neumann_.stiffness;
    for (int i = 0; i < n; ++i) {
      const double gp = g_prime(psi_weight_[i] * T[i] - ue[i]);
      J.diag[i] += neumann_.mass_lumped[i] * (k_ - gp * psi_weight_[i]);
    }
    const Eigen::VectorXd step = J.solve(-F);
    // Armijo backtracking on the residual norm
    double t = 1.0;
    for (int ls = 0; ls < 40; ++ls) {
      Eigen::VectorXd Tn = T + t * step;
      Eigen::VectorXd Fn = residual(Tn);
      const double fn = Fn.cwiseAbs().maxCoeff();
      if (fn <= (1.0 - 1e-4 * t) * fnorm) {
        T = std::move(Tn);
        F = std::move(Fn);
        fnorm = fn;
        break;
      }
      t *= 0.5;
      if (ls == 39)
        throw SolverError("thermoforming temperature solve: line search failed, residual " +
                          std::to_string(fnorm));
    }
  }
  if (fnorm > tol)
    throw SolverError("thermoforming temperature solve: no convergence, residual " +
                      std::to_string(fnorm));

  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    cache_ = std::make_pair(u.values, T);
  }
  return T;
}

Eigen::VectorXd ThermoformingObstacle::temperature(const Field& u) const {
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    if (cache_ && cache_->first.size() == u.values.size() && cache_->first == u.values)
      return cache_->second;
  }
  return solve_temperature(u);
}

Field ThermoformingObstacle::eval(const Field& u) const {
  const Eigen::VectorXd T = temperature(u);
  Field out(space_->n_interior);
  for (int i = 0; i < out.n(); ++i) out[i] = varphi_[i + 1] * T[i + 1];
  return out;
}

Field ThermoformingObstacle::deriv(const Field& u, const Field& h) const {
  const Eigen::VectorXd T = temperature(u);
  const Eigen::VectorXd ue = extend(u);
  const Eigen::VectorXd he = extend(h);
  const int n = neumann_.n_total;

  TriDiag J = neumann_.stiffness;
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) {
    const double gp = g_prime(psi_weight_[i] * T[i] - ue[i]);
    J.diag[i] += neumann_.mass_lumped[i] * (k_ - gp * psi_weight_[i]);
    rhs[i] = -neumann_.mass_lumped[i] * gp * he[i];
  }
  const Eigen::VectorXd xi = J.solve(rhs);

  Field out(space_->n_interior);
  for (int i = 0; i < out.n(); ++i) out[i] = varphi_[i + 1] * xi[i + 1];
  return out;
}

double ThermoformingObstacle::lipschitz_estimate(const Field& center, double radius) const {
  const double reach = v_norm(*space_, center) + radius;
  const auto cert = certified_contraction();
  if (reach < cert.radius_star) return ThermoformingContraction::lipschitz_bound(reach);

  // Outside the certified ball: sample derivative norms across the ball.
  double best = 0.0;
  const int n = space_->n_interior;
  for (int k = -2; k <= 2; ++k) {
    Field u = center;
    const double t = radius * static_cast<double>(k) / 2.0;
    for (int i = 0; i < n; ++i) u[i] += t * std::sin(kPi * space_->node(i));
    const double nb = linear_map_v_norm(*space_, assemble_deriv_matrix(*this, *space_, u));
    best = std::max(best, nb);
  }
  return 1.1 * best;
}

} // namespace qvi
