#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tcb/stability_core.hpp"

namespace tcb {

double pearson(std::span<const double> x, std::span<const double> y);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t n = 0;
};

LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

struct NotAvailable {
  friend bool operator==(NotAvailable, NotAvailable) { return true; }
};

using Cell = std::variant<NotAvailable, double, std::int64_t, std::string>;

class ReportTable {
 public:
  ReportTable() = default;
  ReportTable(std::vector<std::string> columns, std::string caption = {});

  // Throws Error(invalid_argument) when the row length differs from the column count.
  void add_row(std::vector<Cell> row);

  const std::vector<std::string>& columns() const noexcept { return columns_; }
  const std::vector<std::vector<Cell>>& rows() const noexcept { return rows_; }
  const std::string& caption() const noexcept { return caption_; }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<Cell>> rows_;
  std::string caption_;
};

enum class TableFormat { csv, json, markdown };
TableFormat parse_table_format(const std::string& name);
// Format from the path extension (.csv, .json, .md); csv otherwise.
TableFormat table_format_for(const std::filesystem::path& path);

// Floats use 6 significant digits. n/a renders as "" (csv), null (json),
// "n/a" (markdown). `config_json`, when non-empty, is written as a leading
// "# " comment line in csv and as a "config" member in json.
std::string render_table(const ReportTable& table, TableFormat format, const std::string& config_json = {});
void emit_table(const ReportTable& table, TableFormat format, const std::filesystem::path& path,
                const std::string& config_json = {});

std::string format_number(double value);

// Fixed snapshot field order shared by every subcommand.
const std::vector<std::string>& snapshot_columns();
std::vector<Cell> snapshot_row(std::int64_t step, const StabilitySnapshot& s);

}  // namespace tcb
