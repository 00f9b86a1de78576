#include "qvi/sources.hpp"

#include <cmath>
#include <numbers>

#include "qvi/errors.hpp"

namespace qvi {

std::function<double(double)> named_source(const std::string& name, double amplitude) {
  const double pi = std::numbers::pi;
  if (name == "sin_pi")
    return [amplitude, pi](double x) { return amplitude * pi * pi * std::sin(pi * x); };
  if (name == "sin")
    return [amplitude, pi](double x) { return amplitude * std::sin(pi * x); };
  if (name == "const")
    return [amplitude](double) { return amplitude; };
  if (name == "bump")
    return [amplitude](double x) {
      const double t = 2.0 * x - 1.0;
      if (std::abs(t) >= 1.0) return 0.0;
      return amplitude * std::exp(1.0 - 1.0 / (1.0 - t * t));
    };
  if (name == "zero") return [](double) { return 0.0; };
  throw ConfigError("named_source: unknown source '" + name + "'");
}

} // namespace qvi
