#ifndef QVI_TRIDIAG_HPP
#define QVI_TRIDIAG_HPP

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "qvi/errors.hpp"

namespace qvi {

/// Tridiagonal matrix stored by diagonals.  lower[i] = A(i+1,i),
/// diag[i] = A(i,i), upper[i] = A(i,i+1).
struct TriDiag {
  Eigen::VectorXd lower; // size n-1
  Eigen::VectorXd diag;  // size n
  Eigen::VectorXd upper; // size n-1

  TriDiag() = default;
  explicit TriDiag(int n)
      : lower(Eigen::VectorXd::Zero(n > 0 ? n - 1 : 0)),
        diag(Eigen::VectorXd::Zero(n)),
        upper(Eigen::VectorXd::Zero(n > 0 ? n - 1 : 0)) {}

  int n() const { return static_cast<int>(diag.size()); }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    const int m = n();
    if (static_cast<int>(x.size()) != m) throw ConfigError("TriDiag::apply: dimension mismatch");
    Eigen::VectorXd y(m);
    for (int i = 0; i < m; ++i) {
      double s = diag[i] * x[i];
      if (i > 0) s += lower[i - 1] * x[i - 1];
      if (i + 1 < m) s += upper[i] * x[i + 1];
      y[i] = s;
    }
    return y;
  }

  /// A + alpha*D for a diagonal D given by its entries.
  TriDiag add_diag(const Eigen::VectorXd& d, double alpha = 1.0) const {
    TriDiag out = *this;
    out.diag += alpha * d;
    return out;
  }

  Eigen::MatrixXd dense() const {
    const int m = n();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      A(i, i) = diag[i];
      if (i > 0) A(i, i - 1) = lower[i - 1];
      if (i + 1 < m) A(i, i + 1) = upper[i];
    }
    return A;
  }

  /// Solve A x = b by Gaussian elimination with partial pivoting
  /// (LAPACK dgtsv style).  Throws NumericalError on a zero pivot,
  /// reporting a pivot-ratio condition estimate.
  Eigen::VectorXd solve(Eigen::VectorXd b) const {
    const int m = n();
    if (static_cast<int>(b.size()) != m) throw ConfigError("TriDiag::solve: dimension mismatch");
    Eigen::VectorXd dl = lower, d = diag, du = upper;
    Eigen::VectorXd du2 = Eigen::VectorXd::Zero(m); // fill-in band from row swaps

    double min_piv = std::numeric_limits<double>::infinity();
    double max_piv = 0.0;
    for (int i = 0; i < m - 1; ++i) {
      if (std::abs(d[i]) >= std::abs(dl[i])) {
        if (d[i] == 0.0) throw NumericalError("TriDiag::solve: zero pivot at row " + std::to_string(i));
        const double fac = dl[i] / d[i];
        d[i + 1] -= fac * du[i];
        b[i + 1] -= fac * b[i];
        dl[i] = 0.0;
      } else {
        const double fac = d[i] / dl[i];
        std::swap(d[i], dl[i]); // row swap: pivot row becomes old row i+1
        const double tmp = du[i];
        du[i] = d[i + 1];
        d[i + 1] = tmp - fac * d[i + 1];
        if (i + 2 < m) {
          du2[i] = du[i + 1];
          du[i + 1] = -fac * du[i + 1];
        }
        std::swap(b[i], b[i + 1]);
        b[i + 1] -= fac * b[i];
      }
      min_piv = std::min(min_piv, std::abs(d[i]));
      max_piv = std::max(max_piv, std::abs(d[i]));
    }
    min_piv = std::min(min_piv, std::abs(d[m - 1]));
    max_piv = std::max(max_piv, std::abs(d[m - 1]));
    if (d[m - 1] == 0.0 || min_piv == 0.0)
      throw NumericalError("TriDiag::solve: singular matrix (pivot-ratio estimate " +
                           std::to_string(max_piv / std::max(min_piv, 1e-300)) + ")");

    Eigen::VectorXd x(m);
    x[m - 1] = b[m - 1] / d[m - 1];
    if (m >= 2) x[m - 2] = (b[m - 2] - du[m - 2] * x[m - 1]) / d[m - 2];
    for (int i = m - 3; i >= 0; --i)
      x[i] = (b[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
    return x;
  }
};

} // namespace qvi

#endif
