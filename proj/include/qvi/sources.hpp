#ifndef QVI_SOURCES_HPP
#define QVI_SOURCES_HPP

#include <functional>
#include <string>

namespace qvi {

/// Named analytic functions on (0,1) used by configs and drivers:
///   sin_pi : pi^2 sin(pi x)  (the thermoforming source; A^{-1} of it is sin)
///   sin    : sin(pi x)
///   const  : 1
///   bump   : smooth bump supported in (0,1), normalized to max 1
///   zero   : 0
/// The returned function is amplitude * the named shape.
std::function<double(double)> named_source(const std::string& name, double amplitude = 1.0);

} // namespace qvi

#endif
