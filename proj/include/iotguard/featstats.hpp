#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "iotguard/error.hpp"
#include "iotguard/feature_mask.hpp"
#include "iotguard/flowdata.hpp"
#include "iotguard/parallel.hpp"

namespace iotguard {

struct MadKsConfig {
  double lambda = 1.0;
  std::size_t min_samples_per_class = 5;
};

struct FeatureScore {
  std::size_t column_index = 0;
  double score = 0.0;
};

namespace detail {

/// Median of an already sorted range; mean of the two middle values for even
/// sizes.
inline double sorted_median(std::span<const double> v) {
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return sorted_median(v);
}

}  // namespace detail

/// Robust two-sample distribution-shift score. Let D(x) = F_a(x) - F_b(x) be
/// the difference of empirical CDFs evaluated at every pooled sample point
/// (duplicates included), and m the median of those values. The score is
/// lambda times the median of |D(x) - m|: the median absolute deviation of the
/// CDF-difference curve around its median.
inline double mad_ks_score(std::span<const double> sample_a, std::span<const double> sample_b,
                           const MadKsConfig& cfg = {}) {
  if (sample_a.empty() || sample_b.empty()) throw Error(ErrorKind::insufficient_data, "MAD-KS needs two non-empty samples");
  if (!(cfg.lambda >= 0.0)) throw Error(ErrorKind::parameter, "lambda must be non-negative");
  std::vector<double> a(sample_a.begin(), sample_a.end());
  std::vector<double> b(sample_b.begin(), sample_b.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<double> pooled;
  pooled.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(pooled));

  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::vector<double> diff;
  diff.reserve(pooled.size());
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (double x : pooled) {
    while (ia < a.size() && a[ia] <= x) ++ia;
    while (ib < b.size() && b[ib] <= x) ++ib;
    diff.push_back(static_cast<double>(ia) / na - static_cast<double>(ib) / nb);
  }
  const double m = detail::median(diff);
  for (double& d : diff) d = std::abs(d - m);
  return cfg.lambda * detail::median(std::move(diff));
}

/// Scores every feature column: normal-class sample against attack-class
/// sample. Sorted by descending score, ties by ascending column index.
inline std::vector<FeatureScore> score_features(const FlowDataset& ds, const MadKsConfig& cfg = {},
                                                unsigned threads = 1) {
  if (ds.has_categorical() || ds.missing_count() > 0)
    throw Error(ErrorKind::domain, "feature scoring requires preprocessed numeric data");
  const auto [normal, attack] = ds.class_counts();
  if (normal < cfg.min_samples_per_class || attack < cfg.min_samples_per_class)
    throw Error(ErrorKind::insufficient_data, "each class needs at least " + std::to_string(cfg.min_samples_per_class) +
                                                  " rows for feature scoring");
  std::vector<FeatureScore> scores(ds.n_features());
  parallel_for(ds.n_features(), threads, [&](std::size_t j) {
    std::vector<double> a, b;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) (ds.label(r) == kNormal ? a : b).push_back(*ds.cell(r, j));
    scores[j] = {j, mad_ks_score(a, b, cfg)};
  });
  std::stable_sort(scores.begin(), scores.end(),
                   [](const FeatureScore& x, const FeatureScore& y) { return x.score > y.score; });
  return scores;
}

/// Mask keeping the keep_top highest-scored columns.
inline FeatureMask prefilter(std::span<const FeatureScore> scores, std::size_t keep_top) {
  if (keep_top < 1 || keep_top > scores.size())
    throw Error(ErrorKind::parameter, "keep_top must lie in [1, " + std::to_string(scores.size()) + "]");
  std::vector<FeatureScore> sorted(scores.begin(), scores.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const FeatureScore& x, const FeatureScore& y) {
    return x.score > y.score || (x.score == y.score && x.column_index < y.column_index);
  });
  std::vector<std::uint8_t> bits(scores.size(), 0);
  for (std::size_t i = 0; i < keep_top; ++i) bits.at(sorted[i].column_index) = 1;
  return FeatureMask(std::move(bits));
}

}  // namespace iotguard
