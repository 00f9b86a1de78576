#ifndef QVI_IO_HPP
#define QVI_IO_HPP

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qvi/solvers.hpp"
#include "qvi/space.hpp"

namespace qvi {

/// Write a field as CSV with columns x,value (interior nodes).
void write_field_csv(const std::string& path, const DiscreteSpace& s, const Field& v);

/// Generic CSV writer: header row then numeric rows.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

nlohmann::json field_to_json(const Field& v);
nlohmann::json dual_to_json(const DualField& v);

/// Solve report with a reference to the solution CSV, iteration count,
/// residual and the active-set indices.
nlohmann::json solve_report_to_json(const SolveReport& rep, const std::string& solution_csv);

/// Serialize with a fixed, locale-independent float format and write to
/// disk; identical inputs yield bit-identical files.
void write_json(const std::string& path, const nlohmann::json& j);

} // namespace qvi

#endif
