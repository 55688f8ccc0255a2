#include <gtest/gtest.h>

#include <cmath>

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

FlowDataset blobs(std::size_t n, double gap, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> rows;
  std::vector<std::uint8_t> ys;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t y = i % 3 == 0;
    rows.push_back({rng.normal() + gap * y, rng.normal() - gap * y, rng.normal()});
    ys.push_back(y);
  }
  return testing_helpers::numeric(rows, ys);
}

}  // namespace

TEST(Voting, HardVote) {
  EXPECT_EQ(hard_vote(std::vector<int>{1, 1, 0}), 1);
  EXPECT_EQ(hard_vote(std::vector<int>{0, 1}), 0);
  EXPECT_EQ(hard_vote(std::vector<int>{1, 1, 1}), 1);
  EXPECT_EQ(hard_vote(std::vector<int>{2, 1, 2, 1}), 1);
  EXPECT_EQ(kind_of([] { hard_vote(std::vector<int>{}); }), ErrorKind::shape);
}

TEST(Voting, SoftVote) {
  const std::vector<std::vector<double>> a{{0.6, 0.4}, {0.3, 0.7}, {0.4, 0.6}};
  const auto sa = soft_vote(a);
  EXPECT_EQ(sa.label, 1);
  EXPECT_NEAR(sa.probabilities[0], (0.6 + 0.3 + 0.4) / 3.0, 1e-15);
  EXPECT_NEAR(sa.probabilities[1], (0.4 + 0.7 + 0.6) / 3.0, 1e-15);
  EXPECT_NEAR(sa.probabilities[0], 0.4333, 1e-4);

  const std::vector<std::vector<double>> b{{1, 0}, {0.5, 0.5}, {0.5, 0.5}};
  const auto sb = soft_vote(b);
  EXPECT_EQ(sb.label, 0);
  EXPECT_NEAR(sb.probabilities[0], 2.0 / 3.0, 1e-15);

  const std::vector<std::vector<double>> same(3, {0.2, 0.8});
  EXPECT_NEAR(soft_vote(same).probabilities[0], 0.2, 1e-15);
  EXPECT_NEAR(soft_vote(same).probabilities[1], 0.8, 1e-15);
  EXPECT_EQ(soft_vote(same).label, 1);

  const std::vector<std::vector<double>> tie{{0.5, 0.5}};
  EXPECT_EQ(soft_vote(tie).label, 0);
  const std::vector<std::vector<double>> ragged{{0.5, 0.5}, {1.0}};
  EXPECT_EQ(kind_of([&] { soft_vote(ragged); }), ErrorKind::shape);
}

TEST(Voting, SoftSumsToOneAndAgreesWithUnanimousHard) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::vector<double>> probs;
    std::vector<int> labels;
    for (int m = 0; m < 3; ++m) {
      const double p = rng.uniform();
      probs.push_back({1.0 - p, p});
      labels.push_back(argmax(probs.back()));
    }
    const auto sv = soft_vote(probs);
    EXPECT_NEAR(sv.probabilities[0] + sv.probabilities[1], 1.0, 1e-9);
    if (labels[0] == labels[1] && labels[1] == labels[2]) {
      EXPECT_EQ(sv.label, hard_vote(labels));
    }
  }
}

TEST(Voting, CombineBasePredictions) {
  BasePredictions b;
  b.labels = {1, 1, 0};
  b.probabilities = {std::vector<double>{0.6, 0.4}, {0.3, 0.7}, {0.4, 0.6}};
  EXPECT_EQ(combine(b, Voting::hard).label, 1);
  EXPECT_EQ(combine(b, Voting::soft).label, 1);
  b.labels = {0, 0, 0};
  b.probabilities = {std::vector<double>{0.9, 0.1}, {0.8, 0.2}, {0.7, 0.3}};
  EXPECT_EQ(combine(b, Voting::hard).label, 0);
  EXPECT_EQ(combine(b, Voting::soft).label, 0);
}

TEST(RandomForest, DegenerateForestEqualsTree) {
  const auto ds = blobs(200, 1.5, 3);
  const Matrix x = ds.to_matrix();
  const TrainingSet data(x, ds.labels());
  const auto mask = FeatureMask::all(3);
  const auto dt = fit_decision_tree(data, mask, 5, 9);
  const auto rf = fit_random_forest(data, mask, 1, 5, 9, {false, 3});
  ASSERT_EQ(rf.trees.size(), 1u);
  EXPECT_EQ(rf.trees[0], dt.tree);
  const auto test = blobs(100, 1.5, 4).to_matrix();
  for (std::size_t r = 0; r < test.rows(); ++r) {
    EXPECT_EQ(rf.predict(test.row(r)), dt.predict(test.row(r)));
    EXPECT_EQ(rf.predict_proba(test.row(r)), dt.predict_proba(test.row(r)));
  }
}

TEST(RandomForest, SingleClassPredictsThatClass) {
  const auto ds = testing_helpers::numeric({{1, 2}, {3, 4}, {5, 6}, {7, 8}}, {0, 0, 0, 0});
  Hyperparameters hp;
  hp.rf_n_trees = 5;
  const auto rf = fit_random_forest(ds, FeatureMask::all(2), hp, 1);
  for (const auto& row : testing_helpers::dense(ds)) EXPECT_EQ(rf.predict(row), 0);
}

TEST(RandomForest, DeterministicAndThreadInvariant) {
  const auto ds = blobs(150, 1.0, 5);
  Hyperparameters hp;
  hp.rf_n_trees = 12;
  const auto a = fit_random_forest(ds, FeatureMask::all(3), hp, 7, {}, 1);
  const auto b = fit_random_forest(ds, FeatureMask::all(3), hp, 7, {}, 4);
  EXPECT_EQ(a.trees, b.trees);
  EXPECT_EQ(a.feature_subsample, 2u);
  const auto c = fit_random_forest(ds, FeatureMask::all(3), hp, 8, {}, 1);
  EXPECT_NE(a.trees, c.trees);
}

TEST(Gbt, GradientHessian) {
  const auto [g, h] = logistic_grad_hess(0.5, 1);
  EXPECT_EQ(g, -0.5);
  EXPECT_EQ(h, 0.25);
}

TEST(Gbt, SingleLeafAtPriorHasZeroWeight) {
  for (auto labels : {std::vector<std::uint8_t>{1, 1, 1, 0}, std::vector<std::uint8_t>{1, 0, 0, 0}}) {
    const auto ds = testing_helpers::numeric({{0}, {0}, {0}, {0}}, labels);
    Hyperparameters hp;
    hp.gbt_n_rounds = 1;
    hp.gbt_reg_lambda = 0.0;
    // Margins start at the prior log-odds, where the residuals sum to zero.
    const auto m = fit_gbt(ds, FeatureMask::all(1), hp);
    ASSERT_EQ(m.trees.size(), 1u);
    ASSERT_EQ(m.trees[0].nodes.size(), 1u);
    const double p = 1.0 / (1.0 + std::exp(-m.base_score));
    double residual = 0.0;
    for (auto y : labels) residual += y - p;
    EXPECT_NEAR(residual, 0.0, 1e-12);
    EXPECT_NEAR(m.trees[0].nodes[0].value, 0.0, 1e-12);
  }
}

TEST(Gbt, LeafWeightSignMatchesResidualSum) {
  // Rows on either side of a split: each leaf moves its margin toward its own
  // labels, so sign(-G) = sign(sum(y - p)) in both leaves.
  const auto ds = testing_helpers::numeric({{0}, {0}, {0}, {1}, {1}, {1}}, {0, 0, 1, 1, 1, 1});
  Hyperparameters hp;
  hp.gbt_n_rounds = 1;
  hp.gbt_max_depth = 1;
  hp.gbt_reg_lambda = 0.0;
  const auto m = fit_gbt(ds, FeatureMask::all(1), hp, 0, {0.0, 0.0});
  const double p = 1.0 / (1.0 + std::exp(-m.base_score));
  const std::vector<double> left{0.0}, right{1.0};
  const double left_residual = (0 - p) * 2 + (1 - p);
  const double right_residual = 3 * (1 - p);
  EXPECT_EQ(std::signbit(m.trees[0].leaf(left).value), std::signbit(left_residual));
  EXPECT_EQ(std::signbit(m.trees[0].leaf(right).value), std::signbit(right_residual));
  EXPECT_NEAR(m.trees[0].leaf(right).value, right_residual / (3 * p * (1 - p)), 1e-12);
}

TEST(Gbt, LogLossNonIncreasing) {
  const auto ds = blobs(200, 3.0, 6);
  Hyperparameters hp;
  hp.gbt_n_rounds = 40;
  const auto m = fit_gbt(ds, FeatureMask::all(3), hp);
  ASSERT_EQ(m.training_loss.size(), 41u);
  // Independent recomputation of the loss after every round.
  const Matrix x = ds.to_matrix();
  for (std::size_t k = 0; k <= m.trees.size(); ++k) {
    double loss = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      double z = m.base_score;
      for (std::size_t t = 0; t < k; ++t) z += m.learning_rate * m.trees[t].leaf(x.row(r)).value;
      const double p = 1.0 / (1.0 + std::exp(-z));
      loss -= ds.label(r) ? std::log(p) : std::log(1.0 - p);
    }
    loss /= static_cast<double>(x.rows());
    EXPECT_NEAR(loss, m.training_loss[k], 1e-9);
    if (k > 0) {
      EXPECT_LE(m.training_loss[k], m.training_loss[k - 1] + 1e-9);
    }
  }
  for (const auto& row : testing_helpers::dense(ds)) {
    const auto p = m.predict_proba(row);
    EXPECT_GT(p[1], 0.0);
    EXPECT_LT(p[1], 1.0);
  }
}

TEST(Gbt, Errors) {
  const auto one_class = testing_helpers::numeric({{1}, {2}}, {1, 1});
  EXPECT_EQ(kind_of([&] { fit_gbt(one_class, FeatureMask::all(1), Hyperparameters{}); }), ErrorKind::degenerate_labels);
  const auto ds = testing_helpers::numeric({{1}, {2}}, {0, 1});
  Hyperparameters hp;
  hp.gbt_n_rounds = 0;
  EXPECT_EQ(kind_of([&] { fit_gbt(ds, FeatureMask::all(1), hp); }), ErrorKind::parameter);
}

TEST(Ensemble, UnanimousAndDeterministic) {
  const auto ds = blobs(300, 4.0, 7);
  Hyperparameters hp;
  hp.rf_n_trees = 10;
  const auto a = fit_ensemble(ds, FeatureMask::all(3), hp, 5);
  const auto b = fit_ensemble(ds, FeatureMask::all(3), hp, 5);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  const std::vector<double> far_attack{8, -8, 0}, far_normal{-4, 4, 0};
  for (auto v : {Voting::hard, Voting::soft}) {
    EXPECT_EQ(a.predict(far_attack, v).label, 1);
    EXPECT_EQ(a.predict(far_normal, v).label, 0);
  }
  const std::vector<double> short_row{1.0};
  EXPECT_EQ(kind_of([&] { a.predict(short_row); }), ErrorKind::shape);
}

TEST(Ensemble, JsonRoundTripPredictsIdentically) {
  const auto ds = blobs(300, 1.0, 8);
  Hyperparameters hp;
  hp.rf_n_trees = 8;
  hp.voting = Voting::hard;
  const auto m = fit_ensemble(ds, FeatureMask({1, 0, 1}), hp, 2);
  const auto back = ensemble_from_json(nlohmann::json::parse(to_json(m).dump()));
  EXPECT_EQ(back.dt.tree, m.dt.tree);
  EXPECT_EQ(back.rf.trees, m.rf.trees);
  EXPECT_EQ(back.gbt.trees, m.gbt.trees);
  EXPECT_EQ(back.mask, m.mask);
  EXPECT_EQ(back.hp.voting, Voting::hard);
  for (const auto& row : testing_helpers::dense(blobs(50, 1.0, 9)))
    for (auto v : {Voting::hard, Voting::soft}) {
      EXPECT_EQ(back.predict(row, v).label, m.predict(row, v).label);
      EXPECT_EQ(back.predict(row, v).probabilities, m.predict(row, v).probabilities);
    }
  EXPECT_EQ(kind_of([] { ensemble_from_json({{"format", "other"}}); }), ErrorKind::schema);
}

TEST(Hyperparameters, JsonAndValidation) {
  Hyperparameters hp;
  hp.gbt_learning_rate = 0.1;
  hp.voting = Voting::hard;
  const auto back = hyperparameters_from_json(to_json(hp));
  EXPECT_EQ(to_json(back), to_json(hp));
  hp.gbt_learning_rate = 1.5;
  EXPECT_EQ(kind_of([&] { hp.validate(); }), ErrorKind::parameter);
  EXPECT_EQ(kind_of([] { voting_from_string("majority"); }), ErrorKind::config);
}
