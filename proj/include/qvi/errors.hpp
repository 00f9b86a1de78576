#ifndef QVI_ERRORS_HPP
#define QVI_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace qvi {

/// Bad user input: invalid mesh sizes, non-positive coefficients,
/// violated interval certificates, inadmissible directions.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Iterative solver failed to converge (Newton, PDAS, fixed point,
/// line search).  Messages carry the last residual / rate estimate.
class SolverError : public std::runtime_error {
public:
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

/// Linear-algebra level failure: singular or severely ill-conditioned
/// matrix.
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace qvi

#endif
