#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "iotguard/error.hpp"
#include "iotguard/matrix.hpp"

namespace iotguard {

/// Shannon entropy in bits, with 0 log 0 = 0.
inline double entropy(std::span<const double> p) {
  double sum = 0.0;
  double h = 0.0;
  for (double v : p) {
    if (v < 0.0 || !std::isfinite(v)) throw Error(ErrorKind::domain, "probabilities must be finite and non-negative");
    sum += v;
    if (v > 0.0) h -= v * std::log2(v);
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorKind::domain, "probabilities must sum to 1");
  return h;
}

/// Entropy of a count vector (counts need not be normalized).
inline double entropy_of_counts(std::span<const double> counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double c : counts)
    if (c > 0.0) {
      const double p = c / total;
      h -= p * std::log2(p);
    }
  return h;
}

struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  /// Classification leaves.
  std::vector<double> distribution;
  /// Regression leaves.
  double value = 0.0;

  bool is_leaf() const noexcept { return feature < 0; }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Binary tree stored flat; node 0 is the root. A row goes left when
/// x[feature] <= threshold.
struct Tree {
  std::vector<TreeNode> nodes;

  const TreeNode& leaf(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
      const auto& n = nodes[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i];
  }

  int depth() const {
    if (nodes.empty()) return 0;
    std::vector<int> d(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].is_leaf()) continue;
      d[static_cast<std::size_t>(nodes[i].left)] = d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
      deepest = std::max(deepest, d[i] + 1);
    }
    return deepest;
  }

  friend bool operator==(const Tree&, const Tree&) = default;
};

/// Midpoint split threshold between adjacent distinct values lo < hi, nudged
/// so that lo <= t < hi holds in floating point.
inline double split_threshold(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid < hi ? mid : lo;
}

/// Training rows with every feature column presorted once, so that trees can
/// be grown level by level with a single linear scan per feature and level.
/// Holds a reference to the matrix, which must outlive it.
class TrainingSet {
 public:
  TrainingSet(const Matrix& x, std::span<const std::uint8_t> labels, std::vector<std::size_t> rows)
      : x_(&x), labels_(labels), rows_(std::move(rows)), order_(x.cols()) {
    if (rows_.empty()) throw Error(ErrorKind::empty_input, "training set has no rows");
    for (std::size_t f = 0; f < x.cols(); ++f) {
      auto& ord = order_[f];
      ord.assign(rows_.begin(), rows_.end());
      std::stable_sort(ord.begin(), ord.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
    }
  }

  /// All rows of the matrix.
  TrainingSet(const Matrix& x, std::span<const std::uint8_t> labels)
      : TrainingSet(x, labels, iota(x.rows())) {}

  const Matrix& x() const noexcept { return *x_; }
  std::span<const std::uint8_t> labels() const noexcept { return labels_; }
  const std::vector<std::size_t>& rows() const noexcept { return rows_; }
  const std::vector<std::uint32_t>& order(std::size_t feature) const { return order_[feature]; }
  std::size_t n_features() const noexcept { return x_->cols(); }

 private:
  static std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
  }

  const Matrix* x_;
  std::span<const std::uint8_t> labels_;
  std::vector<std::size_t> rows_;
  std::vector<std::vector<std::uint32_t>> order_;
};

/// Information-gain criterion over two classes.
struct EntropyCriterion {
  std::span<const std::uint8_t> labels;

  using Stats = std::array<double, 2>;

  Stats zero() const { return {0.0, 0.0}; }
  void add(Stats& s, std::size_t row, double w) const { s[labels[row]] += w; }
  Stats subtract(const Stats& a, const Stats& b) const { return {a[0] - b[0], a[1] - b[1]}; }
  bool splittable(const Stats& s) const { return s[0] > 0.0 && s[1] > 0.0; }

  double gain(const Stats& parent, const Stats& left, const Stats& right) const {
    const double n = parent[0] + parent[1];
    const double nl = left[0] + left[1];
    const double nr = right[0] + right[1];
    return entropy_of_counts(parent) - (nl / n) * entropy_of_counts(left) - (nr / n) * entropy_of_counts(right);
  }

  void make_leaf(TreeNode& node, const Stats& s) const {
    const double n = s[0] + s[1];
    node.distribution = {s[0] / n, s[1] / n};
  }
};

/// Second-order (gradient, hessian) criterion for boosted regression trees.
struct NewtonCriterion {
  std::span<const double> grad;
  std::span<const double> hess;
  double reg_lambda = 1.0;
  double gamma = 0.0;
  double min_child_weight = 1.0;

  struct Stats {
    double g = 0.0;
    double h = 0.0;
  };

  Stats zero() const { return {}; }
  void add(Stats& s, std::size_t row, double w) const {
    s.g += w * grad[row];
    s.h += w * hess[row];
  }
  Stats subtract(const Stats& a, const Stats& b) const { return {a.g - b.g, a.h - b.h}; }
  bool splittable(const Stats& s) const { return s.h >= 2.0 * min_child_weight; }

  double score(const Stats& s) const { return s.g * s.g / (s.h + reg_lambda); }

  double gain(const Stats& parent, const Stats& left, const Stats& right) const {
    if (left.h < min_child_weight || right.h < min_child_weight) return -std::numeric_limits<double>::infinity();
    return 0.5 * (score(left) + score(right) - score(parent)) - gamma;
  }

  void make_leaf(TreeNode& node, const Stats& s) const { node.value = -s.g / (s.h + reg_lambda); }
};

/// Per-node candidate-feature sampler: given a node id, fills `allowed` (one
/// flag per entry of the feature list) with the features that node may split on.
using FeatureSampler = std::function<void(std::size_t node_id, std::vector<std::uint8_t>& allowed)>;

inline constexpr double kMinSplitGain = 1e-12;

/// Exact greedy tree growth, level by level. `weights` holds a multiplicity per
/// matrix row (0 excludes the row, bootstrap counts above 1 repeat it); an empty
/// span means every training row has weight 1. Splits are considered at
/// midpoints between consecutive distinct values present in a node; among equal
/// gains the lowest feature and lowest threshold win. Growth stops at max_depth,
/// on unsplittable nodes, or when no split gains more than kMinSplitGain.
template <class Criterion>
Tree grow_tree(const TrainingSet& data, std::span<const std::size_t> features, const Criterion& crit, int max_depth,
               std::span<const double> weights = {}, const FeatureSampler& sampler = {}) {
  using Stats = typename Criterion::Stats;
  const Matrix& x = data.x();
  std::vector<double> unit;
  if (weights.empty()) {
    unit.assign(x.rows(), 0.0);
    for (std::size_t r : data.rows()) unit[r] = 1.0;
    weights = unit;
  }

  std::vector<std::size_t> active;
  for (std::size_t r : data.rows())
    if (weights[r] > 0.0) active.push_back(r);
  if (active.empty()) throw Error(ErrorKind::empty_input, "no rows with positive weight");

  Tree tree;
  std::vector<Stats> node_stats;
  std::vector<int> node_of(x.rows(), -1);
  Stats root = crit.zero();
  for (std::size_t r : active) {
    crit.add(root, r, weights[r]);
    node_of[r] = 0;
  }
  tree.nodes.emplace_back();
  node_stats.push_back(root);

  struct Best {
    double gain = -std::numeric_limits<double>::infinity();
    int feature = -1;
    double threshold = 0.0;
    Stats left{};
    Stats right{};
  };

  std::vector<std::size_t> frontier{0};
  for (int depth = 0; !frontier.empty(); ++depth) {
    std::vector<std::size_t> open;
    for (std::size_t id : frontier) {
      if (depth < max_depth && crit.splittable(node_stats[id])) open.push_back(id);
      else crit.make_leaf(tree.nodes[id], node_stats[id]);
    }
    if (open.empty()) break;

    std::vector<int> slot_of(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < open.size(); ++s) slot_of[open[s]] = static_cast<int>(s);
    std::vector<std::vector<std::uint8_t>> allowed(open.size(), std::vector<std::uint8_t>(features.size(), 1));
    if (sampler)
      for (std::size_t s = 0; s < open.size(); ++s) sampler(open[s], allowed[s]);

    std::vector<Best> best(open.size());
    std::vector<Stats> running(open.size());
    std::vector<double> last(open.size());
    std::vector<std::uint8_t> has_last(open.size());
    for (std::size_t fi = 0; fi < features.size(); ++fi) {
      const std::size_t f = features[fi];
      std::fill(running.begin(), running.end(), crit.zero());
      std::fill(has_last.begin(), has_last.end(), 0);
      for (std::uint32_t r : data.order(f)) {
        const int node = node_of[r];
        if (node < 0) continue;
        const int slot = slot_of[static_cast<std::size_t>(node)];
        if (slot < 0) continue;
        const auto s = static_cast<std::size_t>(slot);
        if (!allowed[s][fi]) continue;
        const double v = x(r, f);
        if (has_last[s] && v > last[s]) {
          const Stats& parent = node_stats[open[s]];
          const Stats right = crit.subtract(parent, running[s]);
          const double g = crit.gain(parent, running[s], right);
          if (g > best[s].gain) best[s] = {g, static_cast<int>(f), split_threshold(last[s], v), running[s], right};
        }
        crit.add(running[s], r, weights[r]);
        last[s] = v;
        has_last[s] = 1;
      }
    }

    std::vector<std::size_t> next;
    for (std::size_t s = 0; s < open.size(); ++s) {
      const std::size_t id = open[s];
      if (!(best[s].gain > kMinSplitGain)) {
        crit.make_leaf(tree.nodes[id], node_stats[id]);
        slot_of[id] = -1;
        continue;
      }
      const auto left = tree.nodes.size();
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      node_stats.push_back(best[s].left);
      node_stats.push_back(best[s].right);
      auto& node = tree.nodes[id];
      node.feature = best[s].feature;
      node.threshold = best[s].threshold;
      node.left = static_cast<int>(left);
      node.right = static_cast<int>(left + 1);
      next.push_back(left);
      next.push_back(left + 1);
    }
    for (std::size_t r : active) {
      const int node = node_of[r];
      if (node < 0) continue;
      const auto& n = tree.nodes[static_cast<std::size_t>(node)];
      if (n.is_leaf()) {
        node_of[r] = -1;
        continue;
      }
      if (slot_of[static_cast<std::size_t>(node)] < 0) continue;
      node_of[r] = x(r, static_cast<std::size_t>(n.feature)) <= n.threshold ? n.left : n.right;
    }
    frontier = std::move(next);
  }
  return tree;
}

}  // namespace iotguard
