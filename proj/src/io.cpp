#include "qvi/io.hpp"

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace qvi {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

} // namespace

void write_field_csv(const std::string& path, const DiscreteSpace& s, const Field& v) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_field_csv: cannot open " + path);
  out << "x,value\n";
  for (int i = 0; i < v.n(); ++i) out << fmt(s.node(i)) << "," << fmt(v[i]) << "\n";
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_csv: cannot open " + path);
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << fmt(row[i]);
    out << "\n";
  }
}

nlohmann::json field_to_json(const Field& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < v.n(); ++i) arr.push_back(v[i]);
  return arr;
}

nlohmann::json dual_to_json(const DualField& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < v.n(); ++i) arr.push_back(v[i]);
  return arr;
}

nlohmann::json solve_report_to_json(const SolveReport& rep, const std::string& solution_csv) {
  nlohmann::json j;
  j["solution_csv"] = solution_csv;
  j["iterations"] = rep.iterations;
  j["final_residual"] = rep.final_residual;
  j["active_set"] = rep.active_set;
  return j;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_json: cannot open " + path);
  out << j.dump(2) << "\n";
}

} // namespace qvi
