#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "iotguard/models.hpp"
#include "helpers.hpp"

using namespace iotguard;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::io;
}

double training_accuracy(const DecisionTreeModel& m, const FlowDataset& ds) {
  const Matrix x = ds.to_matrix();
  std::size_t ok = 0;
  for (std::size_t r = 0; r < ds.n_rows(); ++r) ok += m.predict(x.row(r)) == ds.label(r);
  return static_cast<double>(ok) / static_cast<double>(ds.n_rows());
}

double impurity(const std::vector<std::uint8_t>& ys, double (*log_fn)(double)) {
  if (ys.empty()) return 0.0;
  double p1 = 0.0;
  for (auto y : ys) p1 += y;
  p1 /= static_cast<double>(ys.size());
  double h = 0.0;
  for (double p : {p1, 1.0 - p1})
    if (p > 0) h -= p * log_fn(p);
  return h;
}

struct Split {
  std::size_t feature;
  double threshold;
  double gain;
};

/// Exhaustive root split search with a chosen logarithm.
Split best_root_split(const std::vector<std::vector<double>>& rows, const std::vector<std::uint8_t>& ys,
                      double (*log_fn)(double)) {
  Split best{0, 0.0, -1.0};
  const double parent = impurity(ys, log_fn);
  for (std::size_t f = 0; f < rows[0].size(); ++f) {
    std::set<double> values;
    for (const auto& r : rows) values.insert(r[f]);
    for (auto it = values.begin(); std::next(it) != values.end(); ++it) {
      const double t = (*it + *std::next(it)) / 2.0;
      std::vector<std::uint8_t> l, r;
      for (std::size_t i = 0; i < rows.size(); ++i) (rows[i][f] <= t ? l : r).push_back(ys[i]);
      const double n = static_cast<double>(ys.size());
      const double g = parent - l.size() / n * impurity(l, log_fn) - r.size() / n * impurity(r, log_fn);
      if (g > best.gain + 1e-12) best = {f, t, g};
    }
  }
  return best;
}

double ln(double x) { return std::log(x); }
double lg2(double x) { return std::log2(x); }

}  // namespace

TEST(Entropy, Examples) {
  const std::vector<double> half{0.5, 0.5}, pure{1.0, 0.0}, skew{0.25, 0.75};
  EXPECT_DOUBLE_EQ(entropy(half), 1.0);
  EXPECT_EQ(entropy(pure), 0.0);
  EXPECT_NEAR(entropy(skew), 0.8113, 1e-4);
  EXPECT_NEAR(entropy(skew), -(0.25 * std::log2(0.25) + 0.75 * std::log2(0.75)), 1e-15);
}

TEST(Entropy, MaximizedAtUniform) {
  Rng rng(1);
  for (std::size_t k : {2, 3, 5}) {
    const std::vector<double> uniform(k, 1.0 / static_cast<double>(k));
    for (int t = 0; t < 50; ++t) {
      std::vector<double> p(k);
      double s = 0;
      for (auto& v : p) s += v = rng.uniform();
      for (auto& v : p) v /= s;
      EXPECT_LE(entropy(p), entropy(uniform) + 1e-12);
      EXPECT_GT(entropy(p), 0.0);
    }
  }
}

TEST(Entropy, Errors) {
  const std::vector<double> neg{-0.1, 1.1}, bad_sum{0.2, 0.2};
  EXPECT_EQ(kind_of([&] { entropy(neg); }), ErrorKind::domain);
  EXPECT_EQ(kind_of([&] { entropy(bad_sum); }), ErrorKind::domain);
}

TEST(DecisionTree, SingleThresholdGivesDepthOne) {
  const auto ds = testing_helpers::numeric({{1, 5}, {2, 1}, {3, 4}, {10, 2}, {11, 3}, {12, 0}}, {0, 0, 0, 1, 1, 1});
  const auto m = fit_decision_tree(ds, FeatureMask::all(2), 8);
  EXPECT_EQ(m.tree.depth(), 1);
  EXPECT_EQ(m.tree.nodes[0].feature, 0);
  EXPECT_DOUBLE_EQ(m.tree.nodes[0].threshold, 6.5);
  EXPECT_EQ(training_accuracy(m, ds), 1.0);
}

TEST(DecisionTree, SingleClassIsLoneLeaf) {
  const auto ds = testing_helpers::numeric({{1}, {2}, {3}}, {1, 1, 1});
  const auto m = fit_decision_tree(ds, FeatureMask::all(1), 5);
  ASSERT_EQ(m.tree.nodes.size(), 1u);
  EXPECT_EQ(m.tree.nodes[0].distribution, (std::vector<double>{0.0, 1.0}));
}

TEST(DecisionTree, XorNeedsDepthTwo) {
  const std::vector<std::vector<double>> rows{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  const std::vector<std::uint8_t> ys{0, 1, 1, 0};
  const auto ds = testing_helpers::numeric(rows, ys);
  // No single split on XOR gains anything.
  EXPECT_NEAR(best_root_split(rows, ys, lg2).gain, 0.0, 1e-12);
  // Duplicated XOR points plus one tie-breaking row make the root split informative.
  std::vector<std::vector<double>> rows2;
  std::vector<std::uint8_t> ys2;
  for (int rep = 0; rep < 3; ++rep)
    for (std::size_t i = 0; i < 4; ++i) rows2.push_back(rows[i]), ys2.push_back(ys[i]);
  rows2.push_back({0, 0});
  ys2.push_back(0);
  const auto ds2 = testing_helpers::numeric(rows2, ys2);
  const auto m = fit_decision_tree(ds2, FeatureMask::all(2), 2);
  EXPECT_EQ(training_accuracy(m, ds2), 1.0);
  EXPECT_LE(m.tree.depth(), 2);
  EXPECT_LT(training_accuracy(fit_decision_tree(ds2, FeatureMask::all(2), 1), ds2), 1.0);
}

TEST(DecisionTree, DepthBoundAndPositiveGain) {
  const auto ds = synth_generate(300, 100, 3, 3, 5);
  const auto enc = testing_helpers::numeric(testing_helpers::dense(ds), ds.labels());
  for (int depth : {0, 1, 2, 4, 7}) {
    const auto m = fit_decision_tree(enc, FeatureMask::all(enc.n_features()), depth);
    EXPECT_LE(m.tree.depth(), depth);
    for (const auto& n : m.tree.nodes) {
      if (!n.is_leaf()) continue;
      EXPECT_NEAR(n.distribution[0] + n.distribution[1], 1.0, 1e-9);
    }
  }
}

TEST(DecisionTree, RootMatchesExhaustiveSearchUnderAnyLogBase) {
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    std::vector<std::vector<double>> rows;
    std::vector<std::uint8_t> ys;
    for (int i = 0; i < 40; ++i) {
      const std::uint8_t y = rng.bernoulli(0.4);
      rows.push_back({std::round(rng.normal() * 4 + y * 3), std::round(rng.normal() * 4 + y), rng.uniform()});
      ys.push_back(y);
    }
    ys[0] = 0, ys[1] = 1;
    const auto ds = testing_helpers::numeric(rows, ys);
    const auto m = fit_decision_tree(ds, FeatureMask::all(3), 3);
    const auto s2 = best_root_split(rows, ys, lg2);
    const auto se = best_root_split(rows, ys, ln);
    EXPECT_EQ(s2.feature, se.feature);
    EXPECT_EQ(s2.threshold, se.threshold);
    EXPECT_EQ(static_cast<std::size_t>(m.tree.nodes[0].feature), s2.feature);
    EXPECT_DOUBLE_EQ(m.tree.nodes[0].threshold, s2.threshold);
  }
}

TEST(DecisionTree, MaskRestrictsFeatures) {
  const auto ds = testing_helpers::numeric({{1, 5}, {2, 6}, {3, 7}, {10, 1}, {11, 2}, {12, 3}}, {0, 0, 0, 1, 1, 1});
  const auto m = fit_decision_tree(ds, FeatureMask({0, 1}), 3);
  EXPECT_EQ(m.tree.nodes[0].feature, 1);
  EXPECT_EQ(kind_of([&] { fit_decision_tree(ds, FeatureMask({1, 1, 1}), 3); }), ErrorKind::shape);
}

TEST(DecisionTree, Errors) {
  const FlowDataset empty({{"x", ColumnKind::continuous, {}}, make_label_column()}, {}, {});
  EXPECT_EQ(kind_of([&] { fit_decision_tree(empty, FeatureMask::all(1), 2); }), ErrorKind::empty_input);
  const auto ds = testing_helpers::numeric({{1}, {2}}, {0, 1});
  const auto m = fit_decision_tree(ds, FeatureMask::all(1), 2);
  const std::vector<double> wrong{1.0, 2.0};
  EXPECT_EQ(kind_of([&] { m.predict(wrong); }), ErrorKind::shape);
}
