#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "iotguard/csv.hpp"
#include "iotguard/error.hpp"
#include "iotguard/flowdata.hpp"
#include "iotguard/parallel.hpp"

namespace iotguard {

/// Attack (label 1) is the positive class.
struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

template <class A, class B>
ConfusionMatrix confusion(std::span<const A> predictions, std::span<const B> truth) {
  if (predictions.size() != truth.size())
    throw Error(ErrorKind::shape, "predictions and truth differ in length (" + std::to_string(predictions.size()) +
                                      " vs " + std::to_string(truth.size()) + ")");
  if (predictions.empty()) throw Error(ErrorKind::empty_input, "no predictions to score");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predictions[i] != 0;
    const bool t = truth[i] != 0;
    if (p && t) ++cm.tp;
    else if (!p && !t) ++cm.tn;
    else if (p) ++cm.fp;
    else ++cm.fn;
  }
  return cm;
}

inline ConfusionMatrix confusion(const std::vector<int>& predictions, const std::vector<int>& truth) {
  return confusion(std::span<const int>(predictions), std::span<const int>(truth));
}

/// A metric is nullopt when its denominator is zero.
using Metric = std::optional<double>;

struct MetricsReport {
  Metric accuracy;
  Metric specificity;
  Metric sensitivity;
  Metric precision;
  Metric f_measure;
  Metric fpr;
  Metric fnr;
  Metric mcc;
  Metric detection_rate;
  ConfusionMatrix confusion;
  std::vector<std::string> notes;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline constexpr std::array<std::string_view, 9> kMetricNames{
    "accuracy", "specificity", "sensitivity", "precision", "f_measure", "fpr", "fnr", "mcc", "detection_rate"};

inline Metric metric_by_name(const MetricsReport& r, std::string_view name) {
  if (name == "accuracy") return r.accuracy;
  if (name == "specificity") return r.specificity;
  if (name == "sensitivity") return r.sensitivity;
  if (name == "precision") return r.precision;
  if (name == "f_measure") return r.f_measure;
  if (name == "fpr") return r.fpr;
  if (name == "fnr") return r.fnr;
  if (name == "mcc") return r.mcc;
  if (name == "detection_rate") return r.detection_rate;
  throw Error(ErrorKind::parameter, "unknown metric '" + std::string(name) + "'");
}

inline MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error(ErrorKind::empty_input, "confusion matrix is empty");
  const auto tp = static_cast<double>(cm.tp);
  const auto tn = static_cast<double>(cm.tn);
  const auto fp = static_cast<double>(cm.fp);
  const auto fn = static_cast<double>(cm.fn);

  MetricsReport r;
  r.confusion = cm;
  auto ratio = [&](double num, double den, std::string_view name) -> Metric {
    if (den == 0.0) {
      r.notes.push_back(std::string(name) + " undefined: zero denominator");
      return std::nullopt;
    }
    return num / den;
  };
  r.accuracy = ratio(tp + tn, tp + tn + fp + fn, "accuracy");
  r.specificity = ratio(tn, tn + fp, "specificity");
  r.sensitivity = ratio(tp, tp + fn, "sensitivity");
  r.precision = ratio(tp, tp + fp, "precision");
  if (r.precision && r.sensitivity)
    r.f_measure = ratio(2.0 * *r.precision * *r.sensitivity, *r.precision + *r.sensitivity, "f_measure");
  else
    r.notes.push_back("f_measure undefined: precision or sensitivity undefined");
  r.fpr = ratio(fp, fp + tn, "fpr");
  r.fnr = ratio(fn, fn + tp, "fnr");
  r.mcc = ratio(tp * tn - fp * fn, std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)), "mcc");
  r.detection_rate = ratio(tp, tp + fn, "detection_rate");
  return r;
}

inline nlohmann::json metric_json(const Metric& m) { return m ? nlohmann::json(*m) : nlohmann::json(nullptr); }

inline nlohmann::json to_json(const ConfusionMatrix& cm) {
  return {{"tp", cm.tp}, {"tn", cm.tn}, {"fp", cm.fp}, {"fn", cm.fn}};
}

/// Undefined metrics serialize as null and are listed under "undefined".
inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  nlohmann::json undefined = nlohmann::json::array();
  for (auto name : kMetricNames) {
    const auto m = metric_by_name(r, name);
    j[std::string(name)] = metric_json(m);
    if (!m) undefined.push_back(std::string(name));
  }
  j["confusion"] = to_json(r.confusion);
  j["undefined"] = undefined;
  j["notes"] = r.notes;
  return j;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct MetricStat {
  Metric mean;
  Metric std;
};

struct CvSummary {
  std::vector<MetricsReport> per_fold;
  std::vector<std::pair<std::string, MetricStat>> stats;

  const MetricStat& stat(std::string_view name) const {
    for (const auto& [n, s] : stats)
      if (n == name) return s;
    throw Error(ErrorKind::parameter, "unknown metric '" + std::string(name) + "'");
  }
};

/// Mean and population standard deviation; undefined if any value is.
inline MetricStat mean_std(std::span<const Metric> values) {
  if (values.empty()) return {};
  double sum = 0.0;
  for (const auto& v : values) {
    if (!v) return {};
    sum += *v;
  }
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (const auto& v : values) ss += (*v - mean) * (*v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size()))};
}

inline CvSummary summarize(std::vector<MetricsReport> per_fold) {
  CvSummary s;
  s.per_fold = std::move(per_fold);
  for (auto name : kMetricNames) {
    std::vector<Metric> values;
    for (const auto& r : s.per_fold) values.push_back(metric_by_name(r, name));
    s.stats.emplace_back(std::string(name), mean_std(values));
  }
  return s;
}

/// Stratified k-fold CV. `fold_fn(train, test, fold_index)` runs the whole
/// pipeline for one fold and returns its held-out metrics. Folds may run
/// concurrently; fold_fn must be a pure function of its arguments.
template <class FoldFn>
CvSummary kfold_cv(const FlowDataset& ds, std::size_t k, std::uint64_t seed, FoldFn&& fold_fn, unsigned threads = 1) {
  const auto folds = stratified_folds(ds.labels(), k, seed);
  std::vector<MetricsReport> reports(k);
  parallel_for(k, threads, [&](std::size_t f) {
    std::vector<std::size_t> train;
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
    std::sort(train.begin(), train.end());
    reports[f] = fold_fn(ds.subset(train), ds.subset(folds[f]), f);
  });
  return summarize(std::move(reports));
}

inline nlohmann::json to_json(const CvSummary& s) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& r : s.per_fold) folds.push_back(to_json(r));
  nlohmann::json mean, sd;
  for (const auto& [name, st] : s.stats) {
    mean[name] = metric_json(st.mean);
    sd[name] = metric_json(st.std);
  }
  return {{"folds", s.per_fold.size()}, {"per_fold", folds}, {"mean", mean}, {"std", sd}};
}

inline std::string metric_cell(const Metric& m) { return m ? csv::format_fixed(*m, 4) : "undefined"; }

/// fold,accuracy,detection_rate,fpr with a closing mean±std row.
inline std::string cv_table_csv(const CvSummary& s) {
  static constexpr std::array<std::string_view, 3> cols{"accuracy", "detection_rate", "fpr"};
  std::string out = "fold,accuracy,detection_rate,fpr\n";
  for (std::size_t f = 0; f < s.per_fold.size(); ++f) {
    out += std::to_string(f + 1);
    for (auto c : cols) out += "," + metric_cell(metric_by_name(s.per_fold[f], c));
    out += "\n";
  }
  out += "mean±std";
  for (auto c : cols) {
    const auto& st = s.stat(c);
    out += "," + (st.mean ? metric_cell(st.mean) + "±" + metric_cell(st.std) : std::string("undefined"));
  }
  out += "\n";
  return out;
}

}  // namespace iotguard
