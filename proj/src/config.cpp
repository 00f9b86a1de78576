#include "qvi/config.hpp"

#include <filesystem>
#include <fstream>

#include "qvi/sources.hpp"

namespace qvi {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

} // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  RunConfig cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: bad line " + std::to_string(lineno) + " in " + path);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    cfg.set(section.empty() ? key : section + "." + key, val);
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config: key " + key + " is not a number: " + it->second);
  }
}

int RunConfig::get_int(const std::string& key, int fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config: key " + key + " is not an integer: " + it->second);
  }
}

DiscreteSpace RunConfig::build_space() const {
  const int n = get_int("space.n", 128);
  const double a = get_double("space.coefficient", 1.0);
  return assemble_space(n, [a](double) { return a; });
}

std::unique_ptr<ObstacleMap> RunConfig::build_obstacle(const DiscreteSpace& s) const {
  const std::string kind = get("obstacle.kind", "thermoforming");
  if (kind == "constant") {
    const double level = get_double("obstacle.level", 1.0);
    Field psi(s.n_interior);
    psi.values.setConstant(level);
    return std::make_unique<ConstantObstacle>(std::move(psi));
  }
  if (kind == "inverse_laplacian") return std::make_unique<InverseLaplacianObstacle>(s);
  if (kind == "thermoforming") return std::make_unique<ThermoformingObstacle>(s);
  throw ConfigError("config: unknown obstacle kind '" + kind + "'");
}

namespace {

DualField source_from_spec(const RunConfig& cfg, const DiscreteSpace& s,
                           const std::string& section, const std::string& fallback_name,
                           double fallback_amp) {
  const std::string csv = cfg.get(section + ".csv", "");
  if (!csv.empty()) {
    if (!std::filesystem::exists(csv))
      throw ConfigError("config: source file does not exist: " + csv);
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line); // header x,value
    Field nodal(s.n_interior);
    int i = 0;
    while (std::getline(in, line) && i < s.n_interior) {
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw ConfigError("config: bad CSV row in " + csv);
      nodal[i++] = std::stod(line.substr(comma + 1));
    }
    if (i != s.n_interior)
      throw ConfigError("config: CSV " + csv + " has wrong number of rows for n = " +
                        std::to_string(s.n_interior));
    return h_embed(s, nodal);
  }
  const std::string name = cfg.get(section + ".name", fallback_name);
  const double amp = cfg.get_double(section + ".amplitude", fallback_amp);
  return load_vector(s, named_source(name, amp));
}

} // namespace

DualField RunConfig::build_source(const DiscreteSpace& s) const {
  return source_from_spec(*this, s, "source", "sin_pi", 1.0);
}

DualField RunConfig::build_bound(const DiscreteSpace& s) const {
  // Default bound: the source itself (the canonical choice when f >= 0).
  if (!has("bound.name") && !has("bound.csv") && !has("bound.amplitude"))
    return build_source(s);
  return source_from_spec(*this, s, "bound", get("source.name", "sin_pi"),
                          get_double("source.amplitude", 1.0));
}

std::vector<double> RunConfig::rho_schedule() const {
  const double rho0 = get_double("rho.rho0", 1.0);
  const double factor = get_double("rho.factor", 0.5);
  const int steps = get_int("rho.steps", 20);
  if (!(rho0 > 0.0) || !(factor > 0.0) || !(factor < 1.0) || steps < 1)
    throw ConfigError("config: rho schedule needs rho0 > 0, 0 < factor < 1, steps >= 1");
  std::vector<double> sched(steps);
  double r = rho0;
  for (int k = 0; k < steps; ++k) {
    sched[k] = r;
    r *= factor;
  }
  return sched;
}

Branch RunConfig::branch() const {
  const std::string b = get("run.branch", "max");
  if (b == "max") return Branch::Max;
  if (b == "min") return Branch::Min;
  throw ConfigError("config: branch must be 'min' or 'max', got '" + b + "'");
}

std::string RunConfig::out_dir() const { return get("run.out", "out"); }

unsigned RunConfig::seed() const { return static_cast<unsigned>(get_int("run.seed", 7)); }

Tolerances RunConfig::tolerances() const {
  Tolerances t;
  t.ord = get_double("tol.ord", t.ord);
  t.comp = get_double("tol.comp", t.comp);
  t.newton_rel = get_double("tol.newton", t.newton_rel);
  t.fixed_point = get_double("tol.fixed_point", t.fixed_point);
  t.pdas_c = get_double("tol.pdas_c", t.pdas_c);
  if (!(t.ord > 0.0 && t.comp > 0.0 && t.newton_rel > 0.0 && t.fixed_point > 0.0))
    throw ConfigError("config: tolerances must be positive");
  return t;
}

} // namespace qvi
