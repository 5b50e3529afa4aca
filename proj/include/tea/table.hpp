#pragma once

// Result tables shared by the experiments and the writers: named columns of
// doubles, NaN marking an empty cell.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace tea {

inline constexpr double missing = std::numeric_limits<double>::quiet_NaN();

enum class ColumnKind { value, db };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::value;
};

struct PlotSpec {
  std::string x;               ///< abscissa column
  std::vector<std::string> y;  ///< ordinate columns, one series each
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  std::vector<std::string> ci_low;   ///< optional error-bar columns, parallel to y ("" for none)
  std::vector<std::string> ci_high;
};

struct Table {
  std::vector<Column> columns;
  std::vector<std::vector<double>> rows;
  PlotSpec plot;

  std::size_t index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].name == name) return i;
    throw std::out_of_range("no column named " + name);
  }

  std::vector<double> column(const std::string& name) const {
    const std::size_t i = index(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[i]);
    return out;
  }

  void add_row(std::vector<double> row) {
    if (row.size() != columns.size()) throw std::logic_error("row width does not match the table");
    rows.push_back(std::move(row));
  }
};

}  // namespace tea
