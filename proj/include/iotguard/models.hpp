#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "iotguard/error.hpp"
#include "iotguard/feature_mask.hpp"
#include "iotguard/flowdata.hpp"
#include "iotguard/parallel.hpp"
#include "iotguard/random.hpp"
#include "iotguard/tree.hpp"

namespace iotguard {

enum class Voting { hard, soft };

inline std::string_view to_string(Voting v) { return v == Voting::hard ? "hard" : "soft"; }

inline Voting voting_from_string(std::string_view s) {
  if (s == "hard") return Voting::hard;
  if (s == "soft") return Voting::soft;
  throw Error(ErrorKind::config, "voting must be 'hard' or 'soft', got '" + std::string(s) + "'");
}

struct Hyperparameters {
  int dt_max_depth = 8;
  int rf_n_trees = 40;
  int rf_max_depth = 10;
  int gbt_n_rounds = 50;
  int gbt_max_depth = 3;
  double gbt_learning_rate = 0.3;
  double gbt_reg_lambda = 1.0;
  Voting voting = Voting::soft;

  void validate() const {
    if (dt_max_depth < 1 || rf_n_trees < 1 || rf_max_depth < 1 || gbt_n_rounds < 1 || gbt_max_depth < 1)
      throw Error(ErrorKind::parameter, "tree counts and depths must be at least 1");
    if (!(gbt_learning_rate > 0.0 && gbt_learning_rate <= 1.0))
      throw Error(ErrorKind::parameter, "gbt_learning_rate must lie in (0, 1]");
    if (!(gbt_reg_lambda >= 0.0)) throw Error(ErrorKind::parameter, "gbt_reg_lambda must be non-negative");
  }

  friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

inline nlohmann::json to_json(const Hyperparameters& hp) {
  return {{"dt_max_depth", hp.dt_max_depth},           {"rf_n_trees", hp.rf_n_trees},
          {"rf_max_depth", hp.rf_max_depth},           {"gbt_n_rounds", hp.gbt_n_rounds},
          {"gbt_max_depth", hp.gbt_max_depth},         {"gbt_learning_rate", hp.gbt_learning_rate},
          {"gbt_reg_lambda", hp.gbt_reg_lambda},       {"voting", std::string(to_string(hp.voting))}};
}

/// Overlays the keys present in `j` onto `hp`; unknown keys are errors.
inline Hyperparameters hyperparameters_from_json(const nlohmann::json& j, Hyperparameters hp = {}) {
  for (const auto& [key, value] : j.items()) {
    if (key == "dt_max_depth") hp.dt_max_depth = value.get<int>();
    else if (key == "rf_n_trees") hp.rf_n_trees = value.get<int>();
    else if (key == "rf_max_depth") hp.rf_max_depth = value.get<int>();
    else if (key == "gbt_n_rounds") hp.gbt_n_rounds = value.get<int>();
    else if (key == "gbt_max_depth") hp.gbt_max_depth = value.get<int>();
    else if (key == "gbt_learning_rate") hp.gbt_learning_rate = value.get<double>();
    else if (key == "gbt_reg_lambda") hp.gbt_reg_lambda = value.get<double>();
    else if (key == "voting") hp.voting = voting_from_string(value.get<std::string>());
    else throw Error(ErrorKind::config, "unknown hyperparameter '" + key + "'");
  }
  hp.validate();
  return hp;
}

// ---------------------------------------------------------------------------
// Voting

inline int argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<int>(best);
}

/// Most frequent label; ties go to the lowest label.
inline int hard_vote(std::span<const int> votes) {
  if (votes.empty()) throw Error(ErrorKind::shape, "hard_vote needs at least one vote");
  const int top = *std::max_element(votes.begin(), votes.end());
  if (*std::min_element(votes.begin(), votes.end()) < 0) throw Error(ErrorKind::domain, "labels must be non-negative");
  std::vector<int> counts(static_cast<std::size_t>(top) + 1, 0);
  for (int v : votes) ++counts[static_cast<std::size_t>(v)];
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

struct SoftVote {
  int label = 0;
  std::vector<double> probabilities;
};

/// Component-wise mean of the probability vectors; label is its argmax with
/// ties to the lowest class.
inline SoftVote soft_vote(std::span<const std::vector<double>> probs) {
  if (probs.empty()) throw Error(ErrorKind::shape, "soft_vote needs at least one probability vector");
  const std::size_t k = probs.front().size();
  std::vector<double> mean(k, 0.0);
  for (const auto& p : probs) {
    if (p.size() != k) throw Error(ErrorKind::shape, "probability vectors differ in length");
    const double sum = std::accumulate(p.begin(), p.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorKind::domain, "probability vector does not sum to 1");
    for (std::size_t c = 0; c < k; ++c) mean[c] += p[c];
  }
  for (double& m : mean) m /= static_cast<double>(probs.size());
  return {argmax(mean), std::move(mean)};
}

// ---------------------------------------------------------------------------
// Decision tree

namespace detail {

inline void check_mask(const FeatureMask& mask, std::size_t n_features) {
  if (mask.size() != n_features) throw Error(ErrorKind::shape, "mask length does not match feature count");
}

inline void check_row(std::span<const double> row, std::size_t n_features) {
  if (row.size() != n_features)
    throw Error(ErrorKind::shape, "feature vector has " + std::to_string(row.size()) + " entries, model expects " +
                                      std::to_string(n_features));
}

}  // namespace detail

struct DecisionTreeModel {
  Tree tree;
  std::size_t n_features = 0;

  std::vector<double> predict_proba(std::span<const double> row) const {
    detail::check_row(row, n_features);
    return tree.leaf(row).distribution;
  }
  int predict(std::span<const double> row) const { return argmax(predict_proba(row)); }
};

/// Entropy-split classification tree over the masked features. The seed is
/// accepted for interface symmetry; exact greedy growth uses no randomness.
inline DecisionTreeModel fit_decision_tree(const TrainingSet& data, const FeatureMask& mask, int max_depth,
                                           std::uint64_t /*seed*/ = 0) {
  detail::check_mask(mask, data.n_features());
  if (max_depth < 0) throw Error(ErrorKind::parameter, "max_depth must be non-negative");
  const auto features = mask.indices();
  return {grow_tree(data, features, EntropyCriterion{data.labels()}, max_depth), data.n_features()};
}

inline DecisionTreeModel fit_decision_tree(const FlowDataset& ds, const FeatureMask& mask, int max_depth,
                                           std::uint64_t seed = 0) {
  if (ds.n_rows() == 0) throw Error(ErrorKind::empty_input, "cannot fit a tree on an empty dataset");
  const Matrix x = ds.to_matrix();
  return fit_decision_tree(TrainingSet(x, ds.labels()), mask, max_depth, seed);
}

// ---------------------------------------------------------------------------
// Random forest

struct ForestOptions {
  bool bootstrap = true;
  /// Candidate features per split; 0 selects ceil(sqrt(masked feature count)).
  std::size_t feature_subsample = 0;
};

struct ForestModel {
  std::vector<Tree> trees;
  std::size_t feature_subsample = 0;
  bool bootstrap = true;
  std::size_t n_features = 0;

  /// Mean of the trees' leaf distributions.
  std::vector<double> predict_proba(std::span<const double> row) const {
    detail::check_row(row, n_features);
    std::vector<double> mean(2, 0.0);
    for (const auto& t : trees) {
      const auto& d = t.leaf(row).distribution;
      for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += d[c];
    }
    for (double& m : mean) m /= static_cast<double>(trees.size());
    return mean;
  }

  /// Majority vote of the trees' labels.
  int predict(std::span<const double> row) const {
    detail::check_row(row, n_features);
    std::vector<int> votes;
    votes.reserve(trees.size());
    for (const auto& t : trees) votes.push_back(argmax(t.leaf(row).distribution));
    return hard_vote(votes);
  }
};

/// Bagged entropy trees. Tree t draws its bootstrap sample and its per-node
/// feature subsets from streams derived from (seed, t), so the forest does not
/// depend on the thread count.
inline ForestModel fit_random_forest(const TrainingSet& data, const FeatureMask& mask, int n_trees, int max_depth,
                                     std::uint64_t seed, const ForestOptions& opts = {}, unsigned threads = 1) {
  detail::check_mask(mask, data.n_features());
  if (n_trees < 1) throw Error(ErrorKind::parameter, "rf_n_trees must be at least 1");
  const auto features = mask.indices();
  const std::size_t m = opts.feature_subsample == 0
                            ? static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(features.size()))))
                            : std::min(opts.feature_subsample, features.size());

  ForestModel model;
  model.feature_subsample = m;
  model.bootstrap = opts.bootstrap;
  model.n_features = data.n_features();
  model.trees.resize(static_cast<std::size_t>(n_trees));
  const EntropyCriterion crit{data.labels()};
  parallel_for(model.trees.size(), threads, [&](std::size_t t) {
    std::vector<double> weights(data.x().rows(), 0.0);
    const auto& rows = data.rows();
    if (opts.bootstrap) {
      Rng rng(derive_seed(seed, {0xB007, t}));
      for (std::size_t i = 0; i < rows.size(); ++i) weights[rows[rng.index(rows.size())]] += 1.0;
    } else {
      for (std::size_t r : rows) weights[r] = 1.0;
    }
    FeatureSampler sampler;
    if (m < features.size()) {
      sampler = [&, t](std::size_t node, std::vector<std::uint8_t>& allowed) {
        Rng rng(derive_seed(seed, {0xFEA7, t, node}));
        std::vector<std::size_t> pick(features.size());
        std::iota(pick.begin(), pick.end(), std::size_t{0});
        for (std::size_t i = 0; i < m; ++i) std::swap(pick[i], pick[i + rng.index(pick.size() - i)]);
        std::fill(allowed.begin(), allowed.end(), 0);
        for (std::size_t i = 0; i < m; ++i) allowed[pick[i]] = 1;
      };
    }
    model.trees[t] = grow_tree(data, features, crit, max_depth, weights, sampler);
  });
  return model;
}

inline ForestModel fit_random_forest(const FlowDataset& ds, const FeatureMask& mask, const Hyperparameters& hp,
                                     std::uint64_t seed, const ForestOptions& opts = {}, unsigned threads = 1) {
  if (ds.n_rows() == 0) throw Error(ErrorKind::empty_input, "cannot fit a forest on an empty dataset");
  const Matrix x = ds.to_matrix();
  return fit_random_forest(TrainingSet(x, ds.labels()), mask, hp.rf_n_trees, hp.rf_max_depth, seed, opts, threads);
}

// ---------------------------------------------------------------------------
// Gradient-boosted trees (logistic loss, second-order splits)

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Mean binary log-loss of margins against labels, computed stably.
inline double log_loss_from_margins(std::span<const double> margins, std::span<const std::uint8_t> labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < margins.size(); ++i) {
    const double z = labels[i] ? margins[i] : -margins[i];
    total += z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
  }
  return total / static_cast<double>(margins.size());
}

struct GbtOptions {
  double gamma = 0.0;
  double min_child_weight = 1.0;
};

struct BoostedModel {
  double base_score = 0.0;
  std::vector<Tree> trees;
  double learning_rate = 0.3;
  double reg_lambda = 1.0;
  double gamma = 0.0;
  std::size_t n_features = 0;
  /// Training log-loss before the first round and after each round. Not persisted.
  std::vector<double> training_loss;

  double margin(std::span<const double> row) const {
    detail::check_row(row, n_features);
    double m = base_score;
    for (const auto& t : trees) m += learning_rate * t.leaf(row).value;
    return m;
  }
  std::vector<double> predict_proba(std::span<const double> row) const {
    const double p = sigmoid(margin(row));
    return {1.0 - p, p};
  }
  int predict(std::span<const double> row) const { return argmax(predict_proba(row)); }
};

/// Gradient and hessian of the logistic loss at margin-probability p for label y.
inline std::pair<double, double> logistic_grad_hess(double p, std::uint8_t y) { return {p - y, p * (1.0 - p)}; }

inline BoostedModel fit_gbt(const TrainingSet& data, const FeatureMask& mask, int n_rounds, int max_depth,
                            double learning_rate, double reg_lambda, const GbtOptions& opts = {}) {
  detail::check_mask(mask, data.n_features());
  if (n_rounds < 1) throw Error(ErrorKind::parameter, "gbt_n_rounds must be at least 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw Error(ErrorKind::parameter, "learning_rate must lie in (0, 1]");
  if (!(reg_lambda >= 0.0)) throw Error(ErrorKind::parameter, "reg_lambda must be non-negative");
  const auto& rows = data.rows();
  const auto labels = data.labels();
  std::size_t positives = 0;
  for (std::size_t r : rows) positives += labels[r];
  if (positives == 0 || positives == rows.size())
    throw Error(ErrorKind::degenerate_labels, "boosting needs both classes in the training data");

  BoostedModel model;
  const double prior = static_cast<double>(positives) / static_cast<double>(rows.size());
  model.base_score = std::log(prior / (1.0 - prior));
  model.learning_rate = learning_rate;
  model.reg_lambda = reg_lambda;
  model.gamma = opts.gamma;
  model.n_features = data.n_features();

  const auto features = mask.indices();
  const std::size_t n = data.x().rows();
  std::vector<double> margin(n, model.base_score), grad(n, 0.0), hess(n, 0.0);
  std::vector<double> row_margins(rows.size());
  std::vector<std::uint8_t> row_labels(rows.size());
  auto record_loss = [&] {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      row_margins[i] = margin[rows[i]];
      row_labels[i] = labels[rows[i]];
    }
    model.training_loss.push_back(log_loss_from_margins(row_margins, row_labels));
  };
  record_loss();
  for (int round = 0; round < n_rounds; ++round) {
    for (std::size_t r : rows) std::tie(grad[r], hess[r]) = logistic_grad_hess(sigmoid(margin[r]), labels[r]);
    const NewtonCriterion crit{grad, hess, reg_lambda, opts.gamma, opts.min_child_weight};
    Tree tree = grow_tree(data, features, crit, max_depth);
    for (std::size_t r : rows) margin[r] += learning_rate * tree.leaf(data.x().row(r)).value;
    model.trees.push_back(std::move(tree));
    record_loss();
  }
  return model;
}

inline BoostedModel fit_gbt(const FlowDataset& ds, const FeatureMask& mask, const Hyperparameters& hp,
                            std::uint64_t /*seed*/ = 0, const GbtOptions& opts = {}) {
  if (ds.n_rows() == 0) throw Error(ErrorKind::empty_input, "cannot fit boosting on an empty dataset");
  const Matrix x = ds.to_matrix();
  return fit_gbt(TrainingSet(x, ds.labels()), mask, hp.gbt_n_rounds, hp.gbt_max_depth, hp.gbt_learning_rate,
                 hp.gbt_reg_lambda, opts);
}

// ---------------------------------------------------------------------------
// Ensemble

struct BasePredictions {
  std::array<int, 3> labels{};
  std::array<std::vector<double>, 3> probabilities;
};

struct EnsemblePrediction {
  int label = 0;
  std::vector<double> probabilities;
};

inline BasePredictions base_predictions(const DecisionTreeModel& dt, const ForestModel& rf, const BoostedModel& gbt,
                                        std::span<const double> row) {
  BasePredictions b;
  b.probabilities[0] = dt.predict_proba(row);
  b.probabilities[1] = rf.predict_proba(row);
  b.probabilities[2] = gbt.predict_proba(row);
  b.labels[0] = argmax(b.probabilities[0]);
  b.labels[1] = rf.predict(row);
  b.labels[2] = argmax(b.probabilities[2]);
  return b;
}

/// Combines base predictions. Hard voting reports the vote shares as its
/// probability vector.
inline EnsemblePrediction combine(const BasePredictions& b, Voting voting) {
  if (voting == Voting::hard) {
    std::vector<double> shares(2, 0.0);
    for (int l : b.labels) shares[static_cast<std::size_t>(l)] += 1.0 / 3.0;
    return {hard_vote(b.labels), std::move(shares)};
  }
  auto sv = soft_vote(b.probabilities);
  return {sv.label, std::move(sv.probabilities)};
}

inline EnsemblePrediction predict_ensemble(const DecisionTreeModel& dt, const ForestModel& rf, const BoostedModel& gbt,
                                           std::span<const double> row, Voting voting) {
  return combine(base_predictions(dt, rf, gbt, row), voting);
}

struct EnsembleModel {
  DecisionTreeModel dt;
  ForestModel rf;
  BoostedModel gbt;
  FeatureMask mask = FeatureMask::all(1);
  Hyperparameters hp;
  std::vector<std::string> feature_names;

  EnsemblePrediction predict(std::span<const double> row, Voting voting) const {
    return predict_ensemble(dt, rf, gbt, row, voting);
  }
  EnsemblePrediction predict(std::span<const double> row) const { return predict(row, hp.voting); }
};

inline EnsembleModel fit_ensemble(const TrainingSet& data, const FeatureMask& mask, const Hyperparameters& hp,
                                  std::uint64_t seed, unsigned threads = 1) {
  hp.validate();
  EnsembleModel model;
  model.mask = mask;
  model.hp = hp;
  model.dt = fit_decision_tree(data, mask, hp.dt_max_depth, derive_seed(seed, {1}));
  model.rf = fit_random_forest(data, mask, hp.rf_n_trees, hp.rf_max_depth, derive_seed(seed, {2}), {}, threads);
  model.gbt = fit_gbt(data, mask, hp.gbt_n_rounds, hp.gbt_max_depth, hp.gbt_learning_rate, hp.gbt_reg_lambda);
  return model;
}

inline EnsembleModel fit_ensemble(const FlowDataset& ds, const FeatureMask& mask, const Hyperparameters& hp,
                                  std::uint64_t seed, unsigned threads = 1) {
  if (ds.n_rows() == 0) throw Error(ErrorKind::empty_input, "cannot fit an ensemble on an empty dataset");
  const Matrix x = ds.to_matrix();
  auto model = fit_ensemble(TrainingSet(x, ds.labels()), mask, hp, seed, threads);
  model.feature_names = ds.feature_names();
  return model;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json node_to_json(const Tree& tree, std::size_t i) {
  const auto& n = tree.nodes[i];
  if (n.is_leaf()) {
    if (!n.distribution.empty()) return {{"distribution", n.distribution}};
    return {{"value", n.value}};
  }
  return {{"feature", n.feature},
          {"threshold", n.threshold},
          {"left", node_to_json(tree, static_cast<std::size_t>(n.left))},
          {"right", node_to_json(tree, static_cast<std::size_t>(n.right))}};
}

inline nlohmann::json to_json(const Tree& tree) { return node_to_json(tree, 0); }

/// Rebuilds the flat layout in the same breadth-first order the grower uses, so
/// a round trip reproduces node ids exactly.
inline Tree tree_from_json(const nlohmann::json& root) {
  Tree tree;
  std::vector<const nlohmann::json*> queue{&root};
  tree.nodes.emplace_back();
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const auto& j = *queue[head];
    auto& node = tree.nodes[head];
    if (j.contains("feature")) {
      node.feature = j.at("feature").get<int>();
      node.threshold = j.at("threshold").get<double>();
      node.left = static_cast<int>(tree.nodes.size());
      node.right = node.left + 1;
      queue.push_back(&j.at("left"));
      queue.push_back(&j.at("right"));
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
    } else if (j.contains("distribution")) {
      node.distribution = j.at("distribution").get<std::vector<double>>();
    } else {
      node.value = j.at("value").get<double>();
    }
  }
  return tree;
}

inline nlohmann::json to_json(const EnsembleModel& m) {
  nlohmann::json rf_trees = nlohmann::json::array();
  for (const auto& t : m.rf.trees) rf_trees.push_back(to_json(t));
  nlohmann::json gbt_trees = nlohmann::json::array();
  for (const auto& t : m.gbt.trees) gbt_trees.push_back(to_json(t));
  return {{"format", "iotguard-ensemble"},
          {"version", kModelFormatVersion},
          {"feature_names", m.feature_names},
          {"mask", m.mask.to_string()},
          {"hyperparameters", to_json(m.hp)},
          {"decision_tree", to_json(m.dt.tree)},
          {"random_forest",
           {{"feature_subsample", m.rf.feature_subsample}, {"bootstrap", m.rf.bootstrap}, {"trees", rf_trees}}},
          {"gbt",
           {{"base_score", m.gbt.base_score},
            {"learning_rate", m.gbt.learning_rate},
            {"reg_lambda", m.gbt.reg_lambda},
            {"gamma", m.gbt.gamma},
            {"trees", gbt_trees}}}};
}

inline EnsembleModel ensemble_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "iotguard-ensemble") throw Error(ErrorKind::schema, "not an ensemble model document");
  if (j.at("version").get<int>() != kModelFormatVersion) throw Error(ErrorKind::schema, "unsupported model version");
  EnsembleModel m;
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  const auto n = m.feature_names.size();
  const auto bits = j.at("mask").get<std::string>();
  std::vector<std::uint8_t> mask_bits;
  for (char c : bits) mask_bits.push_back(c == '1');
  m.mask = FeatureMask(std::move(mask_bits));
  if (m.mask.size() != n) throw Error(ErrorKind::schema, "mask length does not match feature names");
  m.hp = hyperparameters_from_json(j.at("hyperparameters"));
  m.dt = {tree_from_json(j.at("decision_tree")), n};
  const auto& rf = j.at("random_forest");
  m.rf.feature_subsample = rf.at("feature_subsample").get<std::size_t>();
  m.rf.bootstrap = rf.at("bootstrap").get<bool>();
  m.rf.n_features = n;
  for (const auto& t : rf.at("trees")) m.rf.trees.push_back(tree_from_json(t));
  const auto& gbt = j.at("gbt");
  m.gbt.base_score = gbt.at("base_score").get<double>();
  m.gbt.learning_rate = gbt.at("learning_rate").get<double>();
  m.gbt.reg_lambda = gbt.at("reg_lambda").get<double>();
  m.gbt.gamma = gbt.at("gamma").get<double>();
  m.gbt.n_features = n;
  for (const auto& t : gbt.at("trees")) m.gbt.trees.push_back(tree_from_json(t));
  return m;
}

}  // namespace iotguard
