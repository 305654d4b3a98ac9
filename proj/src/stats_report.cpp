#include "tcb/stats_report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tcb/error.hpp"

namespace tcb {

namespace {

struct Centered {
  double mean_x = 0.0, mean_y = 0.0;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
};

Centered center(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::shape_mismatch, "x and y lengths differ");
  if (x.size() < 2) throw Error(ErrorCode::invalid_argument, "need at least two points");
  const double n = static_cast<double>(x.size());
  CompensatedSum sx, sy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx.add(x[i]);
    sy.add(y[i]);
  }
  Centered c;
  c.mean_x = sx.value() / n;
  c.mean_y = sy.value() / n;
  CompensatedSum sxx, syy, sxy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - c.mean_x;
    const double dy = y[i] - c.mean_y;
    sxx.add(dx * dx);
    syy.add(dy * dy);
    sxy.add(dx * dy);
  }
  c.sxx = sxx.value();
  c.syy = syy.value();
  c.sxy = sxy.value();
  return c;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string cell_text(const Cell& cell, TableFormat format) {
  return std::visit(
      [&](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, NotAvailable>) {
          return format == TableFormat::markdown ? "n/a" : "";
        } else if constexpr (std::is_same_v<T, double>) {
          return format_number(v);
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(v);
        } else {
          return format == TableFormat::csv ? csv_escape(v) : v;
        }
      },
      cell);
}

nlohmann::json cell_json(const Cell& cell) {
  return std::visit(
      [](const auto& v) -> nlohmann::json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, NotAvailable>) {
          return nullptr;
        } else if constexpr (std::is_same_v<T, double>) {
          // Round-trip the 6-significant-digit text so json and csv agree.
          if (!std::isfinite(v)) return format_number(v);
          return std::stod(format_number(v));
        } else {
          return v;
        }
      },
      cell);
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  const auto c = center(x, y);
  if (c.sxx == 0.0 || c.syy == 0.0) throw Error(ErrorCode::degenerate, "correlation undefined for constant input");
  const double r = c.sxy / std::sqrt(c.sxx * c.syy);
  return std::clamp(r, -1.0, 1.0);
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  const auto c = center(x, y);
  if (c.sxx == 0.0) throw Error(ErrorCode::degenerate, "linear fit undefined for constant x");
  LinearFit fit;
  fit.n = x.size();
  fit.slope = c.sxy / c.sxx;
  fit.intercept = c.mean_y - fit.slope * c.mean_x;
  if (c.syy == 0.0) {
    fit.r_squared = 0.0;
  } else {
    const double r = std::clamp(c.sxy / std::sqrt(c.sxx * c.syy), -1.0, 1.0);
    fit.r_squared = r * r;
  }
  return fit;
}

ReportTable::ReportTable(std::vector<std::string> columns, std::string caption)
    : columns_(std::move(columns)), caption_(std::move(caption)) {}

void ReportTable::add_row(std::vector<Cell> row) {
  if (row.size() != columns_.size()) {
    throw Error(ErrorCode::invalid_argument, "row has " + std::to_string(row.size()) + " cells, table has " +
                                                 std::to_string(columns_.size()) + " columns");
  }
  rows_.push_back(std::move(row));
}

TableFormat parse_table_format(const std::string& name) {
  if (name == "csv") return TableFormat::csv;
  if (name == "json") return TableFormat::json;
  if (name == "markdown" || name == "md") return TableFormat::markdown;
  throw Error(ErrorCode::invalid_argument, "unknown table format '" + name + "'");
}

TableFormat table_format_for(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".json") return TableFormat::json;
  if (ext == ".md") return TableFormat::markdown;
  return TableFormat::csv;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

std::string render_table(const ReportTable& table, TableFormat format, const std::string& config_json) {
  std::ostringstream out;
  switch (format) {
    case TableFormat::csv: {
      if (!config_json.empty()) out << "# " << config_json << '\n';
      for (std::size_t c = 0; c < table.columns().size(); ++c) {
        out << (c ? "," : "") << csv_escape(table.columns()[c]);
      }
      out << '\n';
      for (const auto& row : table.rows()) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << cell_text(row[c], format);
        out << '\n';
      }
      break;
    }
    case TableFormat::json: {
      nlohmann::ordered_json doc;
      if (!config_json.empty()) doc["config"] = nlohmann::ordered_json::parse(config_json);
      doc["caption"] = table.caption();
      doc["columns"] = table.columns();
      doc["rows"] = nlohmann::ordered_json::array();
      for (const auto& row : table.rows()) {
        nlohmann::ordered_json obj;
        for (std::size_t c = 0; c < row.size(); ++c) obj[table.columns()[c]] = cell_json(row[c]);
        doc["rows"].push_back(std::move(obj));
      }
      out << doc.dump(2) << '\n';
      break;
    }
    case TableFormat::markdown: {
      if (!table.caption().empty()) out << "**" << table.caption() << "**\n\n";
      out << '|';
      for (const auto& c : table.columns()) out << ' ' << c << " |";
      out << "\n|";
      for (std::size_t c = 0; c < table.columns().size(); ++c) out << " --- |";
      out << '\n';
      for (const auto& row : table.rows()) {
        out << '|';
        for (const auto& cell : row) out << ' ' << cell_text(cell, format) << " |";
        out << '\n';
      }
      break;
    }
  }
  return out.str();
}

void emit_table(const ReportTable& table, TableFormat format, const std::filesystem::path& path,
                const std::string& config_json) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << render_table(table, format, config_json);
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

const std::vector<std::string>& snapshot_columns() {
  static const std::vector<std::string> columns{"step",  "top1_id", "top1_prob", "top2_id", "top2_prob",
                                                "gamma_z", "v_eff", "s2",        "s3",      "s4",
                                                "jnorm_sq", "delta_tcb", "saturated"};
  return columns;
}

std::vector<Cell> snapshot_row(std::int64_t step, const StabilitySnapshot& s) {
  return {step,
          static_cast<std::int64_t>(s.top1_id),
          s.top1_prob,
          static_cast<std::int64_t>(s.top2_id),
          s.top2_prob,
          s.gamma_z,
          s.v_eff,
          s.moments.s2,
          s.moments.s3,
          s.moments.s4,
          s.jnorm_sq,
          s.delta_tcb,
          static_cast<std::int64_t>(s.saturated ? 1 : 0)};
}

}  // namespace tcb
