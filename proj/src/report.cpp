#include "oniondos/report.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>
#include <system_error>

#include <nlohmann/json.hpp>

#include "oniondos/error.hpp"

namespace oniondos {

std::string format_number(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

std::string format_exact(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw Error("cannot format number");
  return std::string(buf, end);
}

void write_file_atomically(const std::filesystem::path& path,
                           const std::function<void(std::ostream&)>& writer) {
  namespace fs = std::filesystem;
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  if (!fs::is_directory(dir)) throw Error("output directory does not exist: " + dir.string());

  std::random_device rd;
  const fs::path tmp = dir / ("." + path.filename().string() + ".tmp" + std::to_string(rd()));
  try {
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot open for writing: " + path.string());
      writer(out);
      out.flush();
      if (!out) throw Error("write failed: " + path.string());
    }
    fs::rename(tmp, path);
  } catch (...) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw;
  }
}

void ResultTable::add_row(std::vector<std::string> row) {
  if (row.size() != columns.size()) throw InvalidArgument("row width does not match header");
  rows.push_back(std::move(row));
}

namespace {

bool looks_numeric(const std::string& cell) {
  if (cell.empty()) return false;
  double v;
  auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  return ec == std::errc{} && end == cell.data() + cell.size();
}

void join(std::ostream& out, const std::vector<std::string>& cells, char sep) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << sep;
    out << cells[i];
  }
  out << '\n';
}

}  // namespace

void write_report(std::ostream& out, const ResultTable& table, ReportFormat format) {
  switch (format) {
    case ReportFormat::Csv:
      join(out, table.columns, ',');
      for (const auto& row : table.rows) join(out, row, ',');
      break;
    case ReportFormat::Gnuplot:
      out << "# ";
      join(out, table.columns, ' ');
      for (const auto& row : table.rows) join(out, row, ' ');
      break;
    case ReportFormat::Json: {
      nlohmann::ordered_json rows = nlohmann::ordered_json::array();
      for (const auto& row : table.rows) {
        nlohmann::ordered_json obj = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < row.size(); ++i) {
          if (looks_numeric(row[i]))
            obj[table.columns[i]] = std::stod(row[i]);
          else
            obj[table.columns[i]] = row[i];
        }
        rows.push_back(std::move(obj));
      }
      out << rows.dump(2) << '\n';
      break;
    }
  }
}

void emit_report(const std::filesystem::path& path, const ResultTable& table, ReportFormat format) {
  write_file_atomically(path, [&](std::ostream& out) { write_report(out, table, format); });
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "csv") return ReportFormat::Csv;
  if (name == "json") return ReportFormat::Json;
  if (name == "gnuplot-data" || name == "gnuplot") return ReportFormat::Gnuplot;
  throw InvalidArgument("unknown report format: " + name);
}

std::string report_extension(ReportFormat format) {
  switch (format) {
    case ReportFormat::Csv: return ".csv";
    case ReportFormat::Json: return ".json";
    case ReportFormat::Gnuplot: return ".dat";
  }
  return ".csv";
}

}  // namespace oniondos
