#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace oniondos {

/// Renders a result value with 6 significant digits.
std::string format_number(double value);
/// Shortest representation that parses back to the same double.
std::string format_exact(double value);

/// Writes through a temporary file in the same directory and renames it
/// into place; on failure no partial file remains.
void write_file_atomically(const std::filesystem::path& path,
                           const std::function<void(std::ostream&)>& writer);

enum class ReportFormat { Csv, Json, Gnuplot };

/// A rectangular result set with a fixed column order.
struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
};

void write_report(std::ostream& out, const ResultTable& table, ReportFormat format);
void emit_report(const std::filesystem::path& path, const ResultTable& table, ReportFormat format);

/// "csv", "json" or "gnuplot-data".
ReportFormat parse_report_format(const std::string& name);
std::string report_extension(ReportFormat format);

}  // namespace oniondos
