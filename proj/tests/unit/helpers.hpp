#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iotguard/flowdata.hpp"

namespace testing_helpers {

using iotguard::ColumnKind;
using iotguard::ColumnSpec;
using iotguard::FlowDataset;

/// Numeric dataset from dense rows; columns are named f0, f1, ...
inline FlowDataset numeric(const std::vector<std::vector<double>>& rows, const std::vector<std::uint8_t>& labels) {
  std::vector<ColumnSpec> cols;
  const std::size_t d = rows.empty() ? 0 : rows.front().size();
  for (std::size_t j = 0; j < d; ++j) cols.push_back({"f" + std::to_string(j), ColumnKind::continuous, {}});
  cols.push_back(iotguard::make_label_column());
  std::vector<FlowDataset::Cell> cells;
  for (const auto& r : rows)
    for (double v : r) cells.emplace_back(v);
  return FlowDataset(cols, std::move(cells), labels, "test");
}

inline std::vector<std::vector<double>> dense(const FlowDataset& ds) {
  std::vector<std::vector<double>> out;
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    std::vector<double> row;
    for (std::size_t j = 0; j < ds.n_features(); ++j) row.push_back(*ds.cell(r, j));
    out.push_back(row);
  }
  return out;
}

}  // namespace testing_helpers
