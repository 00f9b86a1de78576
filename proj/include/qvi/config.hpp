#ifndef QVI_CONFIG_HPP
#define QVI_CONFIG_HPP

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "qvi/extremal.hpp"
#include "qvi/obstacle.hpp"

namespace qvi {

/// Flat key = value configuration with [section] headers and # comments.
/// Keys are stored as "section.key"; command-line overrides use the same
/// addressing.
class RunConfig {
public:
  RunConfig() = default;

  static RunConfig from_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;

  // Assembled pieces (space must outlive the obstacle map).
  DiscreteSpace build_space() const;
  std::unique_ptr<ObstacleMap> build_obstacle(const DiscreteSpace& s) const;
  DualField build_source(const DiscreteSpace& s) const;
  DualField build_bound(const DiscreteSpace& s) const;
  std::vector<double> rho_schedule() const;
  Branch branch() const;
  std::string out_dir() const;
  unsigned seed() const;
  Tolerances tolerances() const;

private:
  std::map<std::string, std::string> values_;
};

} // namespace qvi

#endif
