#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "iotguard/error.hpp"
#include "iotguard/flowdata.hpp"
#include "iotguard/random.hpp"

namespace iotguard {

struct PreprocessReport {
  std::size_t rows_dropped = 0;
  std::size_t cells_imputed_mean = 0;
  std::size_t cells_imputed_mode = 0;
  std::size_t columns_added_by_encoding = 0;
  std::size_t unseen_categories = 0;
  std::size_t rows_removed_by_resampling = 0;
  std::size_t synthetic_rows = 0;
  std::pair<std::size_t, std::size_t> class_counts_before{0, 0};
  std::pair<std::size_t, std::size_t> class_counts_after{0, 0};

  void merge(const PreprocessReport& other) {
    rows_dropped += other.rows_dropped;
    cells_imputed_mean += other.cells_imputed_mean;
    cells_imputed_mode += other.cells_imputed_mode;
    columns_added_by_encoding += other.columns_added_by_encoding;
    unseen_categories += other.unseen_categories;
    rows_removed_by_resampling += other.rows_removed_by_resampling;
    synthetic_rows += other.synthetic_rows;
    class_counts_after = other.class_counts_after;
  }
};

inline nlohmann::json to_json(const PreprocessReport& r) {
  auto counts = [](std::pair<std::size_t, std::size_t> c) { return nlohmann::json{{"normal", c.first}, {"attack", c.second}}; };
  return {{"rows_dropped", r.rows_dropped},
          {"cells_imputed_mean", r.cells_imputed_mean},
          {"cells_imputed_mode", r.cells_imputed_mode},
          {"columns_added_by_encoding", r.columns_added_by_encoding},
          {"unseen_categories", r.unseen_categories},
          {"rows_removed_by_resampling", r.rows_removed_by_resampling},
          {"synthetic_rows", r.synthetic_rows},
          {"class_counts_before", counts(r.class_counts_before)},
          {"class_counts_after", counts(r.class_counts_after)}};
}

template <class T>
struct Preprocessed {
  T dataset;
  PreprocessReport report;
};

// ---------------------------------------------------------------------------
// Sparse rows

/// Drops rows whose absent-cell fraction exceeds max_missing_fraction. The
/// boundary is inclusive: a row exactly at the threshold survives.
inline Preprocessed<FlowDataset> drop_sparse_rows(const FlowDataset& ds, double max_missing_fraction = 0.30) {
  if (!(max_missing_fraction >= 0.0 && max_missing_fraction <= 1.0))
    throw Error(ErrorKind::parameter, "max_missing_fraction must lie in [0, 1]");
  PreprocessReport report;
  report.class_counts_before = ds.class_counts();
  std::vector<std::size_t> keep;
  const auto width = static_cast<double>(ds.n_features());
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    const auto row = ds.row(r);
    const auto absent = static_cast<double>(std::count(row.begin(), row.end(), std::nullopt));
    if (width == 0 || absent / width <= max_missing_fraction) keep.push_back(r);
  }
  if (keep.empty()) throw Error(ErrorKind::empty_input, "every row exceeds the missing-value threshold");
  report.rows_dropped = ds.n_rows() - keep.size();
  auto out = keep.size() == ds.n_rows() ? ds : ds.subset(keep);
  report.class_counts_after = out.class_counts();
  return {std::move(out), report};
}

// ---------------------------------------------------------------------------
// Imputation

/// Fill values learned from a training set: column mean for continuous columns,
/// modal category text for categorical ones.
struct ImputerState {
  struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
    std::optional<double> mean;
    std::optional<std::string> mode;
  };
  std::vector<Column> columns;
};

inline ImputerState fit_imputer(const FlowDataset& ds) {
  ImputerState state;
  for (std::size_t j = 0; j < ds.n_features(); ++j) {
    const auto& spec = ds.feature(j);
    ImputerState::Column col{spec.name, spec.kind, std::nullopt, std::nullopt};
    std::size_t present = 0;
    if (spec.kind == ColumnKind::categorical) {
      std::vector<std::size_t> counts(spec.categories.size(), 0);
      for (std::size_t r = 0; r < ds.n_rows(); ++r)
        if (auto c = ds.cell(r, j)) {
          ++counts[static_cast<std::size_t>(*c)];
          ++present;
        }
      if (present > 0) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < counts.size(); ++k) {
          if (counts[k] > counts[best] ||
              (counts[k] == counts[best] && spec.categories[k] < spec.categories[best]))
            best = k;
        }
        col.mode = spec.categories[best];
      }
    } else {
      double sum = 0.0;
      for (std::size_t r = 0; r < ds.n_rows(); ++r)
        if (auto c = ds.cell(r, j)) {
          sum += *c;
          ++present;
        }
      if (present > 0) col.mean = sum / static_cast<double>(present);
    }
    state.columns.push_back(std::move(col));
  }
  return state;
}

inline Preprocessed<FlowDataset> apply_imputer(const FlowDataset& ds, const ImputerState& state) {
  if (state.columns.size() != ds.n_features()) throw Error(ErrorKind::schema, "imputer was fit on a different schema");
  PreprocessReport report;
  report.class_counts_before = report.class_counts_after = ds.class_counts();
  if (ds.missing_count() == 0) return {ds, report};

  auto columns = ds.columns();
  auto cells = ds.cells();
  const std::size_t width = ds.n_features();
  for (std::size_t j = 0; j < width; ++j) {
    const auto& col = state.columns[j];
    if (col.name != columns[j].name) throw Error(ErrorKind::schema, "imputer column mismatch at '" + columns[j].name + "'");
    std::optional<double> fill;
    if (columns[j].kind == ColumnKind::categorical && col.mode) {
      auto& cats = columns[j].categories;
      auto it = std::find(cats.begin(), cats.end(), *col.mode);
      if (it == cats.end()) it = cats.insert(cats.end(), *col.mode);
      fill = static_cast<double>(it - cats.begin());
    } else if (columns[j].kind != ColumnKind::categorical) {
      fill = col.mean;
    }
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
      auto& cell = cells[r * width + j];
      if (cell) continue;
      if (!fill) throw Error(ErrorKind::unimputable_column, "column '" + col.name + "' has no present values");
      cell = fill;
      (columns[j].kind == ColumnKind::categorical ? report.cells_imputed_mode : report.cells_imputed_mean)++;
    }
  }
  return {FlowDataset(std::move(columns), std::move(cells), ds.labels(), ds.provenance().source), report};
}

/// Mean imputation for continuous columns, mode imputation (ties to the
/// lexicographically smallest category) for categorical columns.
inline Preprocessed<FlowDataset> impute(const FlowDataset& ds) { return apply_imputer(ds, fit_imputer(ds)); }

// ---------------------------------------------------------------------------
// One-hot encoding

struct EncoderState {
  struct Column {
    std::string name;
    std::vector<std::string> categories;
  };
  std::vector<Column> columns;
  /// Cells whose category was not seen at fit time (transform mode only).
  std::size_t unseen_count = 0;
};

inline std::string one_hot_name(const std::string& column, const std::string& category) { return column + "=" + category; }

/// One-hot encodes every categorical column in place of the original column.
/// Without an encoder the category order is first appearance in `ds`. With an
/// encoder, unseen categories map to the all-zero vector and are counted.
inline std::pair<FlowDataset, EncoderState> encode_categorical(const FlowDataset& ds,
                                                               const std::optional<EncoderState>& enc = std::nullopt) {
  EncoderState state;
  if (enc) {
    state.columns = enc->columns;
    std::size_t n_cat = 0;
    for (std::size_t j = 0; j < ds.n_features(); ++j)
      if (ds.feature(j).kind == ColumnKind::categorical) {
        if (n_cat >= state.columns.size() || state.columns[n_cat].name != ds.feature(j).name)
          throw Error(ErrorKind::schema, "encoder does not cover categorical column '" + ds.feature(j).name + "'");
        ++n_cat;
      }
    if (n_cat != state.columns.size()) throw Error(ErrorKind::schema, "encoder expects more categorical columns");
  } else {
    for (std::size_t j = 0; j < ds.n_features(); ++j) {
      const auto& spec = ds.feature(j);
      if (spec.kind != ColumnKind::categorical) continue;
      EncoderState::Column col{spec.name, {}};
      std::vector<bool> seen(spec.categories.size(), false);
      for (std::size_t r = 0; r < ds.n_rows(); ++r)
        if (auto c = ds.cell(r, j); c && !seen[static_cast<std::size_t>(*c)]) {
          seen[static_cast<std::size_t>(*c)] = true;
          col.categories.push_back(spec.categories[static_cast<std::size_t>(*c)]);
        }
      state.columns.push_back(std::move(col));
    }
  }
  if (state.columns.empty()) return {ds, state};

  // Per source column: either -1 (copied) or the encoder column it expands into,
  // plus for categorical columns the map from dataset category index to slot.
  std::vector<ColumnSpec> columns;
  struct Plan {
    int encoder_column = -1;
    std::vector<int> slot;
  };
  std::vector<Plan> plan(ds.n_features());
  int next = 0;
  for (std::size_t j = 0; j < ds.n_features(); ++j) {
    const auto& spec = ds.feature(j);
    if (spec.kind != ColumnKind::categorical) {
      columns.push_back(spec);
      continue;
    }
    const auto& col = state.columns[static_cast<std::size_t>(next)];
    plan[j].encoder_column = next++;
    for (const auto& cat : spec.categories) {
      auto it = std::find(col.categories.begin(), col.categories.end(), cat);
      plan[j].slot.push_back(it == col.categories.end() ? -1 : static_cast<int>(it - col.categories.begin()));
    }
    for (const auto& cat : col.categories) columns.push_back({one_hot_name(col.name, cat), ColumnKind::continuous, {}});
  }
  columns.push_back(ds.label_column());
  const std::size_t width = columns.size() - 1;

  std::vector<FlowDataset::Cell> cells;
  cells.reserve(ds.n_rows() * width);
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    for (std::size_t j = 0; j < ds.n_features(); ++j) {
      const auto cell = ds.cell(r, j);
      if (plan[j].encoder_column < 0) {
        cells.push_back(cell);
        continue;
      }
      const auto k = state.columns[static_cast<std::size_t>(plan[j].encoder_column)].categories.size();
      if (!cell) {
        cells.insert(cells.end(), k, std::nullopt);
        continue;
      }
      const int slot = plan[j].slot[static_cast<std::size_t>(*cell)];
      if (slot < 0) ++state.unseen_count;
      for (std::size_t s = 0; s < k; ++s) cells.emplace_back(static_cast<int>(s) == slot ? 1.0 : 0.0);
    }
  }
  return {FlowDataset(std::move(columns), std::move(cells), ds.labels(), ds.provenance().source), state};
}

inline nlohmann::json to_json(const EncoderState& e) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : e.columns) cols.push_back({{"name", c.name}, {"categories", c.categories}});
  return {{"columns", cols}};
}

inline EncoderState encoder_from_json(const nlohmann::json& j) {
  EncoderState e;
  for (const auto& c : j.at("columns"))
    e.columns.push_back({c.at("name").get<std::string>(), c.at("categories").get<std::vector<std::string>>()});
  return e;
}

inline nlohmann::json to_json(const ImputerState& s) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : s.columns) {
    nlohmann::json col{{"name", c.name}, {"kind", std::string(to_string(c.kind))}};
    col["mean"] = c.mean ? nlohmann::json(*c.mean) : nlohmann::json(nullptr);
    col["mode"] = c.mode ? nlohmann::json(*c.mode) : nlohmann::json(nullptr);
    cols.push_back(std::move(col));
  }
  return {{"columns", cols}};
}

inline ImputerState imputer_from_json(const nlohmann::json& j) {
  ImputerState s;
  for (const auto& c : j.at("columns")) {
    ImputerState::Column col{c.at("name").get<std::string>(), column_kind_from_string(c.at("kind").get<std::string>()),
                             std::nullopt, std::nullopt};
    if (!c.at("mean").is_null()) col.mean = c.at("mean").get<double>();
    if (!c.at("mode").is_null()) col.mode = c.at("mode").get<std::string>();
    s.columns.push_back(std::move(col));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Resampling

namespace detail {

inline void require_numeric(const FlowDataset& ds, const char* what) {
  if (ds.has_categorical()) throw Error(ErrorKind::domain, std::string(what) + " requires encoded (numeric) data");
  if (ds.missing_count() > 0) throw Error(ErrorKind::domain, std::string(what) + " requires imputed data");
}

/// Appends n_new synthetic rows of class `cls`, each x + g (x_nn - x) for a
/// uniformly chosen real row x of that class, one of its k nearest same-class
/// neighbours x_nn (Euclidean, ties by row order), and g uniform in [0, 1).
inline FlowDataset smote_append(const FlowDataset& ds, std::uint8_t cls, std::size_t n_new, std::size_t k_neighbors,
                                Rng& rng) {
  std::vector<std::size_t> members;
  for (std::size_t r = 0; r < ds.n_rows(); ++r)
    if (ds.label(r) == cls) members.push_back(r);
  if (members.size() < 2)
    throw Error(ErrorKind::insufficient_minority, "SMOTE needs at least 2 rows of the class being oversampled");
  if (k_neighbors < 1) throw Error(ErrorKind::parameter, "k_neighbors must be at least 1");
  const std::size_t k = std::min(k_neighbors, members.size() - 1);
  const std::size_t width = ds.n_features();
  const Matrix x = ds.to_matrix();

  std::vector<std::vector<std::size_t>> neighbour_cache(members.size());
  auto neighbours = [&](std::size_t m) -> const std::vector<std::size_t>& {
    auto& nn = neighbour_cache[m];
    if (!nn.empty()) return nn;
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(members.size() - 1);
    const auto a = x.row(members[m]);
    for (std::size_t o = 0; o < members.size(); ++o) {
      if (o == m) continue;
      const auto b = x.row(members[o]);
      double d2 = 0.0;
      for (std::size_t c = 0; c < width; ++c) d2 += (a[c] - b[c]) * (a[c] - b[c]);
      dist.emplace_back(d2, o);
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    for (std::size_t i = 0; i < k; ++i) nn.push_back(dist[i].second);
    return nn;
  };

  auto cells = ds.cells();
  auto labels = ds.labels();
  cells.reserve(cells.size() + n_new * width);
  for (std::size_t s = 0; s < n_new; ++s) {
    const std::size_t m = rng.index(members.size());
    const auto& nn = neighbours(m);
    const std::size_t other = nn[rng.index(nn.size())];
    const double g = rng.uniform();
    const auto a = x.row(members[m]);
    const auto b = x.row(members[other]);
    for (std::size_t c = 0; c < width; ++c) cells.emplace_back(a[c] + g * (b[c] - a[c]));
    labels.push_back(cls);
  }
  return FlowDataset(ds.columns(), std::move(cells), std::move(labels), ds.provenance().source);
}

/// Keeps `keep` randomly chosen rows of class `cls` and every row of the other
/// class, preserving row order.
inline FlowDataset undersample(const FlowDataset& ds, std::uint8_t cls, std::size_t keep, Rng& rng) {
  std::vector<std::size_t> members;
  for (std::size_t r = 0; r < ds.n_rows(); ++r)
    if (ds.label(r) == cls) members.push_back(r);
  rng.shuffle(members);
  std::vector<bool> kept(ds.n_rows(), true);
  for (std::size_t i = keep; i < members.size(); ++i) kept[members[i]] = false;
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < ds.n_rows(); ++r)
    if (kept[r]) rows.push_back(r);
  return ds.subset(rows);
}

}  // namespace detail

/// Oversamples the minority class with SMOTE until both classes have the same
/// count. k_neighbors is clipped to minority_count - 1.
inline FlowDataset smote_balance(const FlowDataset& ds, std::size_t k_neighbors, std::uint64_t seed) {
  detail::require_numeric(ds, "SMOTE");
  if (k_neighbors < 1) throw Error(ErrorKind::parameter, "k_neighbors must be at least 1");
  const auto [normal, attack] = ds.class_counts();
  if (normal == attack) return ds;
  const std::uint8_t minority = attack < normal ? kAttack : kNormal;
  const std::size_t minority_count = std::min(normal, attack);
  if (minority_count < 2)
    throw Error(ErrorKind::insufficient_minority,
                "minority class has " + std::to_string(minority_count) + " rows; SMOTE needs at least 2");
  Rng rng(derive_seed(seed, {0x5307E}));
  return detail::smote_append(ds, minority, std::max(normal, attack) - minority_count, k_neighbors, rng);
}

/// Resamples so that attack / (attack + normal) = eta within one row. Prefers
/// undersampling the over-represented class; falls back to SMOTE oversampling
/// of the under-represented class when undersampling would empty a class.
inline FlowDataset resample_to_attack_ratio(const FlowDataset& ds, double eta, std::uint64_t seed,
                                            std::size_t k_neighbors = 5) {
  if (!(eta > 0.0 && eta < 1.0)) throw Error(ErrorKind::parameter, "eta must lie strictly between 0 and 1");
  const auto [normal, attack] = ds.class_counts();
  if (normal == 0 || attack == 0) throw Error(ErrorKind::resample, "both classes must be present to reach a target ratio");
  const double a = static_cast<double>(attack);
  const double n = static_cast<double>(normal);
  const auto normal_for_attack = static_cast<std::size_t>(std::llround(a * (1.0 - eta) / eta));
  const auto attack_for_normal = static_cast<std::size_t>(std::llround(n * eta / (1.0 - eta)));
  if (normal_for_attack == normal || attack_for_normal == attack) return ds;

  Rng rng(derive_seed(seed, {0x2E5A}));
  const bool attack_short = a / (a + n) < eta;
  if (attack_short) {
    if (normal_for_attack >= 1) return detail::undersample(ds, kNormal, normal_for_attack, rng);
    detail::require_numeric(ds, "oversampling");
    return detail::smote_append(ds, kAttack, attack_for_normal - attack, k_neighbors, rng);
  }
  if (attack_for_normal >= 1) return detail::undersample(ds, kAttack, attack_for_normal, rng);
  detail::require_numeric(ds, "oversampling");
  return detail::smote_append(ds, kNormal, normal_for_attack - normal, k_neighbors, rng);
}

// ---------------------------------------------------------------------------
// Composite training / evaluation preparation

struct PreprocessOptions {
  double max_missing_fraction = 0.30;
  bool smote = true;
  std::size_t smote_k = 5;
  /// Target attack ratio for the training split; unset leaves the ratio alone.
  std::optional<double> eta;
  /// Order of the two balancing steps when both apply.
  bool resample_before_smote = true;
};

struct FittedPreprocessor {
  ImputerState imputer;
  EncoderState encoder;
};

struct PreparedTraining {
  FlowDataset dataset;
  FittedPreprocessor state;
  PreprocessReport report;
};

/// Imputes and encodes a training split (fitting both steps), then applies the
/// configured balancing.
inline PreparedTraining prepare_training(const FlowDataset& train, const PreprocessOptions& opts, std::uint64_t seed) {
  PreprocessReport report;
  report.class_counts_before = train.class_counts();
  FittedPreprocessor state{fit_imputer(train), {}};
  auto imputed = apply_imputer(train, state.imputer);
  report.merge(imputed.report);
  auto [encoded, encoder] = encode_categorical(imputed.dataset);
  report.columns_added_by_encoding = encoded.n_features() - imputed.dataset.n_features() + encoder.columns.size();
  state.encoder = encoder;

  FlowDataset current = std::move(encoded);
  auto resample = [&] {
    if (!opts.eta) return;
    const auto before = current.n_rows();
    current = resample_to_attack_ratio(current, *opts.eta, derive_seed(seed, {1}), opts.smote_k);
    if (current.n_rows() < before) report.rows_removed_by_resampling += before - current.n_rows();
    else report.synthetic_rows += current.n_rows() - before;
  };
  auto balance = [&] {
    if (!opts.smote) return;
    const auto before = current.n_rows();
    current = smote_balance(current, opts.smote_k, derive_seed(seed, {2}));
    report.synthetic_rows += current.n_rows() - before;
  };
  if (opts.resample_before_smote) {
    resample();
    balance();
  } else {
    balance();
    resample();
  }
  report.class_counts_after = current.class_counts();
  return {std::move(current), std::move(state), report};
}

/// Applies training-time imputation and encoding to held-out rows.
inline Preprocessed<FlowDataset> prepare_evaluation(const FlowDataset& test, const FittedPreprocessor& state) {
  auto imputed = apply_imputer(test, state.imputer);
  auto [encoded, enc] = encode_categorical(imputed.dataset, state.encoder);
  imputed.report.unseen_categories = enc.unseen_count;
  return {std::move(encoded), imputed.report};
}

}  // namespace iotguard
