#ifndef QVI_OBSTACLE_HPP
#define QVI_OBSTACLE_HPP

#include <memory>
#include <mutex>
#include <optional>

#include "qvi/space.hpp"

namespace qvi {

/// Increasing obstacle mapping u -> Phi(u) together with its directional
/// derivative h -> Phi'(u)(h) and local Lipschitz metadata used by the
/// contraction-based solvers.
class ObstacleMap {
public:
  virtual ~ObstacleMap() = default;

  virtual Field eval(const Field& u) const = 0;
  virtual Field deriv(const Field& u, const Field& h) const = 0;
  virtual bool deriv_is_linear() const = 0;

  /// Estimated Lipschitz constant of eval on the V-ball of the given
  /// center and radius.  Sampling based unless a certified bound exists.
  virtual double lipschitz_estimate(const Field& center, double radius) const = 0;
};

/// Phi(u) == psi for all u.
class ConstantObstacle final : public ObstacleMap {
public:
  explicit ConstantObstacle(Field psi) : psi_(std::move(psi)) {}

  Field eval(const Field&) const override { return psi_; }
  Field deriv(const Field&, const Field& h) const override { return Field(h.n()); }
  bool deriv_is_linear() const override { return true; }
  double lipschitz_estimate(const Field&, double) const override { return 0.0; }

  const Field& psi() const { return psi_; }

private:
  Field psi_;
};

/// Phi(w) solves -lap(phi) = w with homogeneous Dirichlet data, i.e.
/// phi = L^{-1} M w on nodal vectors.  Linear, increasing, and smoothing.
class InverseLaplacianObstacle final : public ObstacleMap {
public:
  explicit InverseLaplacianObstacle(const DiscreteSpace& space) : space_(&space) {}

  Field eval(const Field& u) const override;
  Field deriv(const Field& u, const Field& h) const override;
  bool deriv_is_linear() const override { return true; }
  double lipschitz_estimate(const Field& center, double radius) const override;

private:
  const DiscreteSpace* space_;
  mutable std::optional<double> cached_norm_;
  mutable std::mutex mutex_;
};

/// P1 space on [0,1] including both boundary nodes, with homogeneous
/// Neumann boundary conditions.  Used for the mould temperature solve.
struct NeumannSpace {
  int n_total = 0;
  double h = 0.0;
  TriDiag stiffness;           // full-grid stiffness of -u''
  Eigen::VectorXd mass_lumped; // h/2 at the ends, h inside

  static NeumannSpace on_grid_of(const DiscreteSpace& s);
  double node(int i) const { return h * i; }
};

/// Certified contraction data for the thermoforming map near zero:
/// radius_star is the largest ball radius for which the Lipschitz bound
/// stays below one, lipschitz_bound(R) the bound itself, and
/// state_bound(R) the sup-norm reach of the temperature argument.
struct ThermoformingContraction {
  double radius_star;
  static double lipschitz_bound(double R);
  static double state_bound(double R);
};

/// Mould deformation map of the thermoforming model: Phi(u) = phi * T
/// where T solves the semilinear Neumann problem
///   k T - T'' = g(psi T - u),  g(s) = 4 min(0,s)^2,  k = pi^2,
/// with phi, psi fixed profile functions.  Increasing because g is
/// decreasing.
class ThermoformingObstacle final : public ObstacleMap {
public:
  explicit ThermoformingObstacle(const DiscreteSpace& space);

  Field eval(const Field& u) const override;
  Field deriv(const Field& u, const Field& h) const override;
  bool deriv_is_linear() const override { return true; }
  double lipschitz_estimate(const Field& center, double radius) const override;

  static ThermoformingContraction certified_contraction();

  /// Temperature on the full Neumann grid for a given membrane state.
  Eigen::VectorXd temperature(const Field& u) const;

  const NeumannSpace& neumann_space() const { return neumann_; }

private:
  Eigen::VectorXd solve_temperature(const Field& u) const;
  Eigen::VectorXd extend(const Field& u) const;

  const DiscreteSpace* space_;
  NeumannSpace neumann_;
  double k_;
  Eigen::VectorXd varphi_, psi_weight_; // profiles on the full grid

  mutable std::mutex cache_mutex_;
  mutable std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> cache_; // (u nodal, T)
};

/// Dense matrix of h -> deriv(base, h) assembled column by column.
Eigen::MatrixXd assemble_deriv_matrix(const ObstacleMap& map, const DiscreteSpace& s,
                                      const Field& base);

/// V-operator norm |B|_{V->V} of a dense nodal matrix, via the Cholesky
/// factor of the norm stiffness and power iteration.
double linear_map_v_norm(const DiscreteSpace& s, const Eigen::MatrixXd& B);

} // namespace qvi

#endif
