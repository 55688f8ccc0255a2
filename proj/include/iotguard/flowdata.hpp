#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "iotguard/csv.hpp"
#include "iotguard/error.hpp"
#include "iotguard/feature_mask.hpp"
#include "iotguard/matrix.hpp"
#include "iotguard/random.hpp"

namespace iotguard {

enum class ColumnKind { continuous, categorical, label };

inline std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::label: return "label";
  }
  return "continuous";
}

inline ColumnKind column_kind_from_string(std::string_view s) {
  if (s == "continuous") return ColumnKind::continuous;
  if (s == "categorical") return ColumnKind::categorical;
  if (s == "label") return ColumnKind::label;
  throw Error(ErrorKind::schema, "unknown column kind '" + std::string(s) + "'");
}

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  /// Categorical columns only; a cell holds an index into this list.
  std::vector<std::string> categories;

  friend bool operator==(const ColumnSpec&, const ColumnSpec&) = default;
};

struct Provenance {
  std::string source;
  std::size_t n_rows = 0;
  std::size_t n_normal = 0;
  std::size_t n_attack = 0;
};

inline constexpr std::uint8_t kNormal = 0;
inline constexpr std::uint8_t kAttack = 1;

/// Labeled flow records. Columns are the feature columns followed by exactly one
/// label column. Absent cells are std::nullopt; categorical cells store the
/// category index. Immutable once constructed.
class FlowDataset {
 public:
  using Cell = std::optional<double>;

  FlowDataset() = default;

  FlowDataset(std::vector<ColumnSpec> columns, std::vector<Cell> cells, std::vector<std::uint8_t> labels,
              std::string source = {})
      : columns_(std::move(columns)), cells_(std::move(cells)), labels_(std::move(labels)) {
    validate();
    provenance_.source = std::move(source);
    provenance_.n_rows = labels_.size();
    for (auto y : labels_) (y == kAttack ? provenance_.n_attack : provenance_.n_normal)++;
  }

  std::size_t n_rows() const noexcept { return labels_.size(); }
  std::size_t n_features() const noexcept { return columns_.empty() ? 0 : columns_.size() - 1; }

  const std::vector<ColumnSpec>& columns() const noexcept { return columns_; }
  const ColumnSpec& feature(std::size_t j) const { return columns_.at(j); }
  const ColumnSpec& label_column() const { return columns_.back(); }

  Cell cell(std::size_t r, std::size_t j) const { return cells_[r * n_features() + j]; }
  std::span<const Cell> row(std::size_t r) const { return {cells_.data() + r * n_features(), n_features()}; }
  const std::vector<Cell>& cells() const noexcept { return cells_; }

  std::uint8_t label(std::size_t r) const { return labels_[r]; }
  const std::vector<std::uint8_t>& labels() const noexcept { return labels_; }

  /// (normal, attack)
  std::pair<std::size_t, std::size_t> class_counts() const { return {provenance_.n_normal, provenance_.n_attack}; }
  const Provenance& provenance() const noexcept { return provenance_; }

  std::vector<std::string> feature_names() const {
    std::vector<std::string> names;
    for (std::size_t j = 0; j < n_features(); ++j) names.push_back(columns_[j].name);
    return names;
  }

  std::size_t missing_count() const {
    return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::nullopt));
  }

  bool has_categorical() const {
    for (std::size_t j = 0; j < n_features(); ++j)
      if (columns_[j].kind == ColumnKind::categorical) return true;
    return false;
  }

  /// Dense copy for model training. Requires no absent cells.
  Matrix to_matrix() const {
    Matrix m(n_rows(), n_features());
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      if (!cells_[i]) throw Error(ErrorKind::domain, "dataset still contains absent cells");
      m(i / n_features(), i % n_features()) = *cells_[i];
    }
    return m;
  }

  FlowDataset subset(std::span<const std::size_t> rows) const {
    std::vector<Cell> cells;
    cells.reserve(rows.size() * n_features());
    std::vector<std::uint8_t> labels;
    labels.reserve(rows.size());
    for (std::size_t r : rows) {
      if (r >= n_rows()) throw Error(ErrorKind::shape, "row index out of range");
      auto src = row(r);
      cells.insert(cells.end(), src.begin(), src.end());
      labels.push_back(labels_[r]);
    }
    return FlowDataset(columns_, std::move(cells), std::move(labels), provenance_.source);
  }

  /// Keeps only the masked feature columns, in their original order.
  FlowDataset select_features(const FeatureMask& mask) const {
    if (mask.size() != n_features()) throw Error(ErrorKind::shape, "mask length does not match feature count");
    const auto keep = mask.indices();
    std::vector<ColumnSpec> columns;
    for (std::size_t j : keep) columns.push_back(columns_[j]);
    columns.push_back(label_column());
    std::vector<Cell> cells;
    cells.reserve(n_rows() * keep.size());
    for (std::size_t r = 0; r < n_rows(); ++r)
      for (std::size_t j : keep) cells.push_back(cell(r, j));
    return FlowDataset(std::move(columns), std::move(cells), labels_, provenance_.source);
  }

 private:
  void validate() const {
    if (columns_.empty() || columns_.back().kind != ColumnKind::label)
      throw Error(ErrorKind::schema, "the last column must be the label column");
    std::set<std::string> names;
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      const auto& c = columns_[j];
      if (j + 1 < columns_.size() && c.kind == ColumnKind::label)
        throw Error(ErrorKind::schema, "more than one label column");
      if (!names.insert(c.name).second) throw Error(ErrorKind::schema, "duplicate column name '" + c.name + "'");
      std::set<std::string> cats(c.categories.begin(), c.categories.end());
      if (cats.size() != c.categories.size())
        throw Error(ErrorKind::schema, "duplicate category in column '" + c.name + "'");
    }
    if (cells_.size() != labels_.size() * n_features())
      throw Error(ErrorKind::shape, "cell count does not match rows x features");
    for (auto y : labels_)
      if (y > 1) throw Error(ErrorKind::domain, "labels must be 0 or 1");
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      const auto& spec = columns_[i % n_features()];
      if (spec.kind == ColumnKind::categorical && cells_[i]) {
        const double v = *cells_[i];
        if (v < 0 || v >= static_cast<double>(spec.categories.size()) || v != std::floor(v))
          throw Error(ErrorKind::domain, "categorical cell out of range in '" + spec.name + "'");
      }
    }
  }

  std::vector<ColumnSpec> columns_;
  std::vector<Cell> cells_;
  std::vector<std::uint8_t> labels_;
  Provenance provenance_;
};

inline ColumnSpec make_label_column(std::string name = "label") {
  return ColumnSpec{std::move(name), ColumnKind::label, {"normal", "attack"}};
}

// ---------------------------------------------------------------------------
// Schema mapping and CSV I/O

struct SchemaMapping {
  std::string label_column = "label";
  std::set<std::string> positive_labels = {"attack", "1"};
  /// Unlisted columns are continuous, unless no cell parses as a number, in
  /// which case they are categorical.
  std::map<std::string, ColumnKind> column_kinds;
};

inline SchemaMapping schema_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::config, "schema mapping must be a JSON object");
  SchemaMapping m;
  for (const auto& [key, value] : j.items()) {
    if (key == "label_column") {
      m.label_column = value.get<std::string>();
    } else if (key == "positive_labels") {
      m.positive_labels.clear();
      for (const auto& v : value) m.positive_labels.insert(v.get<std::string>());
    } else if (key == "column_kinds") {
      for (const auto& [name, kind] : value.items()) m.column_kinds[name] = column_kind_from_string(kind.get<std::string>());
    } else {
      throw Error(ErrorKind::config, "unknown schema key '" + key + "'");
    }
  }
  if (m.positive_labels.empty()) throw Error(ErrorKind::schema, "positive_labels must not be empty");
  return m;
}

inline nlohmann::json to_json(const SchemaMapping& m) {
  nlohmann::json kinds = nlohmann::json::object();
  for (const auto& [name, kind] : m.column_kinds) kinds[name] = std::string(to_string(kind));
  return {{"label_column", m.label_column},
          {"positive_labels", std::vector<std::string>(m.positive_labels.begin(), m.positive_labels.end())},
          {"column_kinds", kinds}};
}

/// The mapping under which write_csv output loads back to the same dataset.
inline SchemaMapping schema_for(const FlowDataset& ds) {
  SchemaMapping m;
  m.label_column = ds.label_column().name;
  m.positive_labels = {ds.label_column().categories.at(kAttack)};
  for (std::size_t j = 0; j < ds.n_features(); ++j)
    if (ds.feature(j).kind == ColumnKind::categorical) m.column_kinds[ds.feature(j).name] = ColumnKind::categorical;
  return m;
}

namespace detail {

/// True when column j has present text but not a single numeric cell.
inline bool all_text(const std::vector<csv::Record>& records, std::size_t j) {
  bool any_text = false;
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (j >= records[r].size()) continue;
    const auto text = csv::trim(records[r][j]);
    if (text.empty()) continue;
    if (csv::parse_number(text)) return false;
    any_text = true;
  }
  return any_text;
}

}  // namespace detail

inline FlowDataset parse_csv(std::string_view text, const SchemaMapping& mapping, const std::string& source = {}) {
  if (mapping.positive_labels.empty()) throw Error(ErrorKind::schema, "positive_labels must not be empty");
  const auto records = csv::parse(text);
  if (records.empty()) throw Error(ErrorKind::schema, "missing header row");
  const auto& header = records.front();
  std::size_t label_index = header.size();
  for (std::size_t j = 0; j < header.size(); ++j)
    if (csv::trim(header[j]) == mapping.label_column) label_index = j;
  if (label_index == header.size())
    throw Error(ErrorKind::schema, "header lacks label column '" + mapping.label_column + "'");
  for (const auto& [name, kind] : mapping.column_kinds) {
    if (std::find_if(header.begin(), header.end(), [&](const std::string& h) { return csv::trim(h) == name; }) ==
        header.end())
      throw Error(ErrorKind::schema, "column_kinds names unknown column '" + name + "'");
  }
  if (records.size() < 2) throw Error(ErrorKind::empty_input, "CSV has no data rows");

  std::vector<ColumnSpec> columns;
  std::vector<std::size_t> source_index;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j == label_index) continue;
    ColumnSpec spec{std::string(csv::trim(header[j])), ColumnKind::continuous, {}};
    if (auto it = mapping.column_kinds.find(spec.name); it != mapping.column_kinds.end()) {
      if (it->second == ColumnKind::label) throw Error(ErrorKind::schema, "only the label column may have kind label");
      spec.kind = it->second;
    } else if (detail::all_text(records, j)) {
      spec.kind = ColumnKind::categorical;
    }
    columns.push_back(std::move(spec));
    source_index.push_back(j);
  }
  const std::size_t n_features = columns.size();
  std::vector<std::unordered_map<std::string, std::size_t>> category_lookup(n_features);

  std::vector<FlowDataset::Cell> cells;
  std::vector<std::uint8_t> labels;
  cells.reserve((records.size() - 1) * n_features);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() != header.size())
      throw Error(ErrorKind::schema, "row " + std::to_string(r + 1) + " has " + std::to_string(rec.size()) +
                                         " fields, header has " + std::to_string(header.size()));
    labels.push_back(mapping.positive_labels.count(std::string(csv::trim(rec[label_index]))) ? kAttack : kNormal);
    for (std::size_t j = 0; j < n_features; ++j) {
      const auto text = csv::trim(rec[source_index[j]]);
      if (columns[j].kind == ColumnKind::categorical) {
        if (text.empty()) {
          cells.emplace_back(std::nullopt);
          continue;
        }
        auto [it, inserted] = category_lookup[j].try_emplace(std::string(text), columns[j].categories.size());
        if (inserted) columns[j].categories.emplace_back(text);
        cells.emplace_back(static_cast<double>(it->second));
      } else {
        cells.push_back(csv::parse_number(text));
      }
    }
  }
  columns.push_back(make_label_column(mapping.label_column));
  return FlowDataset(std::move(columns), std::move(cells), std::move(labels), source);
}

inline FlowDataset load_csv(const std::string& path, const SchemaMapping& mapping) {
  return parse_csv(csv::read_file(path), mapping, path);
}

inline std::string to_csv(const FlowDataset& ds) {
  std::string out;
  csv::Record header;
  for (const auto& c : ds.columns()) header.push_back(c.name);
  out += csv::join(header) + "\n";
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    csv::Record rec;
    for (std::size_t j = 0; j < ds.n_features(); ++j) {
      const auto cell = ds.cell(r, j);
      if (!cell) {
        rec.emplace_back();
      } else if (ds.feature(j).kind == ColumnKind::categorical) {
        rec.push_back(ds.feature(j).categories[static_cast<std::size_t>(*cell)]);
      } else {
        rec.push_back(csv::format_number(*cell));
      }
    }
    rec.push_back(ds.label_column().categories.at(ds.label(r)));
    out += csv::join(rec) + "\n";
  }
  return out;
}

inline void write_csv(const std::string& path, const FlowDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path + "'");
  out << to_csv(ds);
}

// ---------------------------------------------------------------------------
// Synthetic benchmark

/// Shift of the attack-class median relative to the normal class for
/// informative column j.
inline double synth_informative_shift(std::size_t j) { return 1.25 + 0.25 * static_cast<double>(j % 5); }

/// Desk-scale stand-in for a labeled flow capture. Informative columns are
/// Gaussian with class-dependent medians, noise columns share one distribution
/// across classes, and "proto" is a three-category column whose mix differs
/// mildly between classes. Rows are shuffled. Pure function of its arguments.
inline FlowDataset synth_generate(std::size_t n_normal, std::size_t n_attack, std::size_t d_informative,
                                  std::size_t d_noise, std::uint64_t seed) {
  if (n_normal + n_attack == 0) throw Error(ErrorKind::empty_input, "synthetic dataset needs at least one row");
  if (n_normal > 0 && n_attack > 0 && d_informative == 0)
    throw Error(ErrorKind::parameter, "at least one informative column is required when both classes are present");

  std::vector<ColumnSpec> columns;
  for (std::size_t j = 0; j < d_informative; ++j) columns.push_back({"inf_" + std::to_string(j), ColumnKind::continuous, {}});
  for (std::size_t j = 0; j < d_noise; ++j) columns.push_back({"noise_" + std::to_string(j), ColumnKind::continuous, {}});
  columns.push_back({"proto", ColumnKind::categorical, {"tcp", "udp", "icmp"}});
  columns.push_back(make_label_column());

  std::vector<std::uint8_t> labels(n_normal, kNormal);
  labels.insert(labels.end(), n_attack, kAttack);
  Rng rng(derive_seed(seed, {0x5EED}));
  rng.shuffle(labels);

  const std::size_t width = d_informative + d_noise + 1;
  std::vector<FlowDataset::Cell> cells;
  cells.reserve(labels.size() * width);
  for (auto y : labels) {
    for (std::size_t j = 0; j < d_informative; ++j) {
      const double scale = 1.0 + 0.5 * static_cast<double>(j % 3);
      const double median = y == kAttack ? synth_informative_shift(j) : 0.0;
      cells.emplace_back(scale * rng.normal(median, 1.0));
    }
    for (std::size_t j = 0; j < d_noise; ++j) cells.emplace_back(rng.normal(0.0, 1.0 + static_cast<double>(j % 3)));
    const double u = rng.uniform();
    const double p_tcp = y == kAttack ? 0.45 : 0.6;
    const double p_udp = y == kAttack ? 0.35 : 0.3;
    cells.emplace_back(u < p_tcp ? 0.0 : (u < p_tcp + p_udp ? 1.0 : 2.0));
  }
  return FlowDataset(std::move(columns), std::move(cells), std::move(labels), "synthetic");
}

// ---------------------------------------------------------------------------
// Stratified splitting

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per class, shuffles that class's rows and sends round(n_c * fraction) of
/// them (clamped to [1, n_c - 1]) to the training side. Both sides keep the
/// original row order.
inline SplitIndices stratified_split(std::span<const std::uint8_t> labels, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error(ErrorKind::parameter, "train_fraction must lie strictly between 0 and 1");
  if (labels.size() < 2) throw Error(ErrorKind::stratification, "need at least two rows to split");
  SplitIndices out;
  for (std::uint8_t cls : {kNormal, kAttack}) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) rows.push_back(i);
    if (rows.size() < 2)
      throw Error(ErrorKind::stratification,
                  "class " + std::to_string(cls) + " has " + std::to_string(rows.size()) + " rows; at least 2 required");
    Rng rng(derive_seed(seed, {0x5B117, cls}));
    rng.shuffle(rows);
    auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(rows.size()) * train_fraction));
    n_train = std::clamp<std::size_t>(n_train, 1, rows.size() - 1);
    out.train.insert(out.train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.insert(out.test.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

/// Stratified fold assignment: each class's rows are shuffled and dealt
/// round-robin into k folds, the deal continuing across classes so fold sizes
/// differ by at most one.
inline std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::uint8_t> labels, std::size_t k,
                                                              std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::parameter, "need at least two folds");
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (std::uint8_t cls : {kNormal, kAttack}) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) rows.push_back(i);
    if (rows.size() < k)
      throw Error(ErrorKind::stratification, "class " + std::to_string(cls) + " has " + std::to_string(rows.size()) +
                                                 " rows, fewer than " + std::to_string(k) + " folds");
    Rng rng(derive_seed(seed, {0xF01D, cls}));
    rng.shuffle(rows);
    for (std::size_t r : rows) folds[next++ % k].push_back(r);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

inline std::pair<FlowDataset, FlowDataset> split_train_test(const FlowDataset& ds, double train_fraction,
                                                            std::uint64_t seed) {
  const auto idx = stratified_split(ds.labels(), train_fraction, seed);
  return {ds.subset(idx.train), ds.subset(idx.test)};
}

}  // namespace iotguard
