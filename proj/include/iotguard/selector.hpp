#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "iotguard/error.hpp"
#include "iotguard/feature_mask.hpp"
#include "iotguard/flowdata.hpp"
#include "iotguard/models.hpp"
#include "iotguard/parallel.hpp"
#include "iotguard/random.hpp"
#include "iotguard/tree.hpp"

namespace iotguard {

using Position = std::vector<double>;

struct EagleParams {
  double eta_sel = 2.0;
  double omega = 1.5;
  double phi = 5.0;
  double c1 = 2.0;
  double c2 = 2.0;

  void validate() const {
    if (!(omega >= 0.5 && omega <= 2.0)) throw Error(ErrorKind::parameter, "omega must lie in [0.5, 2]");
    if (!(eta_sel > 0 && phi > 0 && c1 > 0 && c2 > 0))
      throw Error(ErrorKind::parameter, "eagle gains must be positive");
  }
};

struct GaParams {
  std::size_t population_size = 30;
  std::size_t generations = 50;
  std::size_t tournament_k = 3;
  double crossover_rate = 0.9;
  /// Per-gene mutation probability; 0 means 1 / feature count.
  double mutation_rate = 0.0;
  std::size_t elitism = 2;
  double eagle_fraction = 0.2;
  double w1 = 0.9;
  double w2 = 0.1;
  /// Depth of the proxy decision tree used for the error term.
  int proxy_max_depth = 6;
  std::size_t proxy_folds = 3;
  unsigned threads = 1;

  void validate() const {
    if (population_size < 2) throw Error(ErrorKind::parameter, "population_size must be at least 2");
    if (std::abs(w1 + w2 - 1.0) > 1e-9 || w1 < 0 || w2 < 0)
      throw Error(ErrorKind::parameter, "fitness weights must be non-negative and sum to 1");
    if (!(eagle_fraction >= 0.0 && eagle_fraction <= 1.0)) throw Error(ErrorKind::parameter, "eagle_fraction must lie in [0, 1]");
    if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) throw Error(ErrorKind::parameter, "crossover_rate must lie in [0, 1]");
    if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) throw Error(ErrorKind::parameter, "mutation_rate must lie in [0, 1]");
    if (tournament_k < 1) throw Error(ErrorKind::parameter, "tournament_k must be at least 1");
    if (elitism > population_size) throw Error(ErrorKind::parameter, "elitism exceeds population_size");
    if (proxy_folds < 2) throw Error(ErrorKind::parameter, "proxy_folds must be at least 2");
  }
};

/// Population of continuous relaxations in [0,1]^d. mean_position doubles as
/// the "mean eagle" used by the spiral and swoop moves.
struct EagleGaState {
  std::vector<Position> positions;
  Position best_position;
  double best_fitness = std::numeric_limits<double>::infinity();
  Position mean_position;
  std::size_t generation = 0;
  std::uint64_t rng_seed = 0;

  std::size_t size() const noexcept { return positions.size(); }
  std::size_t dims() const noexcept { return positions.empty() ? 0 : positions.front().size(); }

  void refresh_mean() {
    mean_position.assign(dims(), 0.0);
    for (const auto& p : positions)
      for (std::size_t d = 0; d < p.size(); ++d) mean_position[d] += p[d];
    for (double& m : mean_position) m /= static_cast<double>(positions.size());
  }
};

inline void clamp_unit(Position& p) {
  for (double& v : p) v = std::clamp(v, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Eagle operators

/// Select-area move: X_b + eta * delta * (X_mean - X_i) with delta a single
/// {0,1} draw (one uniform, delta = 1 when it is >= 0.5), clamped.
inline Position eagle_select(const EagleGaState& state, std::size_t i, const EagleParams& params, Rng& rng) {
  if (state.positions.empty()) throw Error(ErrorKind::degenerate_population, "empty population");
  const double delta = rng.uniform() < 0.5 ? 0.0 : 1.0;
  const auto& xi = state.positions.at(i);
  Position out(xi.size());
  for (std::size_t d = 0; d < xi.size(); ++d)
    out[d] = state.best_position[d] + params.eta_sel * delta * (state.mean_position[d] - xi[d]);
  clamp_unit(out);
  return out;
}

/// Polar coefficients for every population member. Draws two uniforms per
/// member in member order: theta = phi * pi * u1, r = theta + omega * u2; then
/// (z, y) = (r sin theta, r cos theta) for the spiral, or (r sinh theta,
/// r cosh theta) for the swoop, each divided by its population-wide max |.|.
struct EagleCoefficients {
  std::vector<double> z;
  std::vector<double> y;
};

inline EagleCoefficients eagle_coefficients(std::size_t n, const EagleParams& params, Rng& rng, bool hyperbolic) {
  EagleCoefficients c{std::vector<double>(n), std::vector<double>(n)};
  double max_z = 0.0;
  double max_y = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double theta = params.phi * std::numbers::pi * rng.uniform();
    const double r = theta + params.omega * rng.uniform();
    c.z[j] = r * (hyperbolic ? std::sinh(theta) : std::sin(theta));
    c.y[j] = r * (hyperbolic ? std::cosh(theta) : std::cos(theta));
    max_z = std::max(max_z, std::abs(c.z[j]));
    max_y = std::max(max_y, std::abs(c.y[j]));
  }
  for (std::size_t j = 0; j < n; ++j) {
    c.z[j] = max_z > 0.0 ? c.z[j] / max_z : 0.0;
    c.y[j] = max_y > 0.0 ? c.y[j] / max_y : 0.0;
  }
  return c;
}

/// Spiral move: X_i + y_i (X_i - X_next) + z_i (X_i - X_mean), where X_next is
/// the following member in ring order. Clamped.
inline Position eagle_spiral(const EagleGaState& state, std::size_t i, const EagleParams& params, Rng& rng) {
  const std::size_t n = state.positions.size();
  if (n < 2) throw Error(ErrorKind::degenerate_population, "spiral move needs at least two members");
  const auto c = eagle_coefficients(n, params, rng, false);
  const auto& xi = state.positions.at(i);
  const auto& xn = state.positions[(i + 1) % n];
  Position out(xi.size());
  for (std::size_t d = 0; d < xi.size(); ++d)
    out[d] = xi[d] + c.y[i] * (xi[d] - xn[d]) + c.z[i] * (xi[d] - state.mean_position[d]);
  clamp_unit(out);
  return out;
}

/// Swoop move: u X_b + z_i (X_i - c1 X_mean) + y_i (X_i - c2 X_b), with
/// hyperbolic coefficients and u one further uniform drawn after them. Clamped.
inline Position eagle_swoop(const EagleGaState& state, std::size_t i, const EagleParams& params, Rng& rng) {
  const std::size_t n = state.positions.size();
  if (n < 2) throw Error(ErrorKind::degenerate_population, "swoop move needs at least two members");
  const auto c = eagle_coefficients(n, params, rng, true);
  const double u = rng.uniform();
  const auto& xi = state.positions.at(i);
  Position out(xi.size());
  for (std::size_t d = 0; d < xi.size(); ++d)
    out[d] = u * state.best_position[d] + c.z[i] * (xi[d] - params.c1 * state.mean_position[d]) +
             c.y[i] * (xi[d] - params.c2 * state.best_position[d]);
  clamp_unit(out);
  return out;
}

// ---------------------------------------------------------------------------
// Fitness

/// Bits are positions >= 0.5; an empty result is repaired by setting the bit of
/// the largest position (lowest index on ties).
inline FeatureMask threshold_mask(const Position& p) {
  std::vector<std::uint8_t> bits(p.size(), 0);
  bool any = false;
  for (std::size_t d = 0; d < p.size(); ++d)
    if (p[d] >= 0.5) bits[d] = 1, any = true;
  if (!any) bits[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())] = 1;
  return FeatureMask(std::move(bits));
}

/// Evaluates feature-subset fitness w1 * L + w2 * |S|/|T| on a fixed dataset.
/// L is the mean misclassification rate of a depth-limited entropy tree under
/// stratified k-fold CV. Folds depend only on the seed and every fold's
/// columns are presorted once, so repeated evaluations are cheap and pure.
class SubsetFitness {
 public:
  SubsetFitness(const FlowDataset& ds, const GaParams& params, std::uint64_t seed)
      : x_(ds.to_matrix()), labels_(ds.labels()), params_(params) {
    const auto folds = stratified_folds(labels_, params.proxy_folds, seed);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      std::vector<std::size_t> train;
      for (std::size_t g = 0; g < folds.size(); ++g)
        if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
      std::sort(train.begin(), train.end());
      folds_.push_back({TrainingSet(x_, labels_, std::move(train)), folds[f]});
    }
  }

  SubsetFitness(const SubsetFitness&) = delete;
  SubsetFitness& operator=(const SubsetFitness&) = delete;

  std::size_t n_features() const noexcept { return x_.cols(); }

  double error_rate(const FeatureMask& mask) const {
    double total = 0.0;
    for (const auto& fold : folds_) {
      const auto model = fit_decision_tree(fold.train, mask, params_.proxy_max_depth);
      std::size_t wrong = 0;
      for (std::size_t r : fold.test) wrong += model.predict(x_.row(r)) != labels_[r];
      total += static_cast<double>(wrong) / static_cast<double>(fold.test.size());
    }
    return total / static_cast<double>(folds_.size());
  }

  double operator()(const FeatureMask& mask) const {
    if (mask.size() != n_features()) throw Error(ErrorKind::shape, "mask length does not match feature count");
    return params_.w1 * error_rate(mask) +
           params_.w2 * static_cast<double>(mask.count()) / static_cast<double>(mask.size());
  }

 private:
  struct Fold {
    TrainingSet train;
    std::vector<std::size_t> test;
  };
  Matrix x_;
  std::vector<std::uint8_t> labels_;
  GaParams params_;
  std::vector<Fold> folds_;
};

/// Subset fitness for a single mask (builds the folds; prefer SubsetFitness
/// for repeated evaluation).
inline double fitness(const FeatureMask& mask, const FlowDataset& ds, const GaParams& params, std::uint64_t seed) {
  if (mask.count() == 0) throw Error(ErrorKind::infeasible_mask, "mask selects no columns");
  if (mask.size() != ds.n_features()) throw Error(ErrorKind::shape, "mask length does not match feature count");
  return SubsetFitness(ds, params, seed)(mask);
}

// ---------------------------------------------------------------------------
// GA with eagle refinement

struct GenerationRecord {
  std::size_t generation = 0;
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
  std::size_t selected = 0;
};

struct SelectionResult {
  FeatureMask mask = FeatureMask::all(1);
  double best_fitness = 0.0;
  std::vector<GenerationRecord> history;
  std::size_t evaluations = 0;
};

inline nlohmann::json to_json(const SelectionResult& r) {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : r.history)
    hist.push_back({{"generation", h.generation},
                    {"best_fitness", h.best_fitness},
                    {"mean_fitness", h.mean_fitness},
                    {"selected", h.selected}});
  return {{"mask", r.mask.to_string()},
          {"selected_indices", r.mask.indices()},
          {"best_fitness", r.best_fitness},
          {"evaluations", r.evaluations},
          {"history", hist}};
}

inline std::string history_csv(const SelectionResult& r) {
  std::string out = "generation,best_fitness,mean_fitness,selected\n";
  for (const auto& h : r.history)
    out += std::to_string(h.generation) + "," + csv::format_number(h.best_fitness) + "," +
           csv::format_number(h.mean_fitness) + "," + std::to_string(h.selected) + "\n";
  return out;
}

namespace detail {

/// Memoizes fitness by mask bits; evaluates batches of new masks in parallel.
class FitnessCache {
 public:
  FitnessCache(const SubsetFitness& fn, unsigned threads) : fn_(fn), threads_(threads) {}

  std::vector<double> evaluate(const std::vector<FeatureMask>& masks) {
    std::vector<std::string> keys;
    std::vector<std::size_t> todo;
    std::map<std::string, std::size_t> pending;
    for (const auto& m : masks) keys.push_back(m.to_string());
    for (std::size_t i = 0; i < masks.size(); ++i)
      if (!cache_.count(keys[i]) && pending.emplace(keys[i], i).second) todo.push_back(i);
    std::vector<double> fresh(todo.size());
    parallel_for(todo.size(), threads_, [&](std::size_t t) { fresh[t] = fn_(masks[todo[t]]); });
    for (std::size_t t = 0; t < todo.size(); ++t) cache_[keys[todo[t]]] = fresh[t];
    evaluations_ += todo.size();
    std::vector<double> out;
    for (const auto& k : keys) out.push_back(cache_.at(k));
    return out;
  }

  double evaluate(const FeatureMask& mask) { return evaluate(std::vector<FeatureMask>{mask}).front(); }
  std::size_t evaluations() const noexcept { return evaluations_; }

 private:
  const SubsetFitness& fn_;
  unsigned threads_;
  std::map<std::string, double> cache_;
  std::size_t evaluations_ = 0;
};

}  // namespace detail

/// Genetic feature selection over continuous relaxations. Each generation:
/// elitism, k-tournament selection, uniform crossover, per-gene flip mutation
/// (p -> 1 - p), then greedy eagle refinement (select, spiral, swoop; each move
/// kept only if it lowers fitness) of the top eagle_fraction members. All
/// random draws come from streams keyed by (seed, generation, member).
inline SelectionResult select_features(const FlowDataset& ds, const GaParams& ga, const EagleParams& eagle,
                                       std::uint64_t seed) {
  ga.validate();
  eagle.validate();
  const std::size_t dims = ds.n_features();
  if (dims < 2) throw Error(ErrorKind::parameter, "feature selection needs at least two features");
  if (ds.has_categorical() || ds.missing_count() > 0)
    throw Error(ErrorKind::domain, "feature selection requires preprocessed numeric data");
  const double mutation_rate = ga.mutation_rate > 0.0 ? ga.mutation_rate : 1.0 / static_cast<double>(dims);
  const std::size_t pop = ga.population_size;

  const SubsetFitness fitness_fn(ds, ga, seed);
  detail::FitnessCache cache(fitness_fn, ga.threads);

  EagleGaState state;
  state.rng_seed = seed;
  for (std::size_t i = 0; i < pop; ++i) {
    Rng rng(derive_seed(seed, {0, i, 0x1A17}));
    Position p(dims);
    for (double& v : p) v = rng.uniform();
    state.positions.push_back(std::move(p));
  }
  auto masks_of = [](const std::vector<Position>& ps) {
    std::vector<FeatureMask> ms;
    for (const auto& p : ps) ms.push_back(threshold_mask(p));
    return ms;
  };
  std::vector<double> fit = cache.evaluate(masks_of(state.positions));

  SelectionResult result;
  auto record = [&](std::size_t generation) {
    for (std::size_t i = 0; i < pop; ++i)
      if (fit[i] < state.best_fitness) {
        state.best_fitness = fit[i];
        state.best_position = state.positions[i];
      }
    const double mean = std::accumulate(fit.begin(), fit.end(), 0.0) / static_cast<double>(pop);
    result.history.push_back({generation, state.best_fitness, mean, threshold_mask(state.best_position).count()});
  };
  record(0);

  auto ranking = [&] {
    std::vector<std::size_t> order(pop);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fit[a] < fit[b]; });
    return order;
  };

  for (std::size_t g = 1; g <= ga.generations; ++g) {
    state.generation = g;
    const auto order = ranking();
    std::vector<Position> next;
    std::vector<double> next_fit;
    for (std::size_t e = 0; e < ga.elitism; ++e) {
      next.push_back(state.positions[order[e]]);
      next_fit.push_back(fit[order[e]]);
    }
    std::vector<Position> children;
    for (std::size_t c = next.size(); c < pop; ++c) {
      Rng rng(derive_seed(seed, {g, c, 0xC41D}));
      auto tournament = [&] {
        std::size_t best = rng.index(pop);
        for (std::size_t t = 1; t < ga.tournament_k; ++t) {
          const std::size_t cand = rng.index(pop);
          if (fit[cand] < fit[best] || (fit[cand] == fit[best] && cand < best)) best = cand;
        }
        return best;
      };
      const std::size_t pa = tournament();
      const std::size_t pb = tournament();
      Position child = state.positions[pa];
      if (rng.bernoulli(ga.crossover_rate))
        for (std::size_t d = 0; d < dims; ++d)
          if (rng.bernoulli(0.5)) child[d] = state.positions[pb][d];
      for (std::size_t d = 0; d < dims; ++d)
        if (rng.bernoulli(mutation_rate)) child[d] = 1.0 - child[d];
      children.push_back(std::move(child));
    }
    const auto child_fit = cache.evaluate(masks_of(children));
    for (std::size_t c = 0; c < children.size(); ++c) {
      next.push_back(std::move(children[c]));
      next_fit.push_back(child_fit[c]);
    }
    state.positions = std::move(next);
    fit = std::move(next_fit);
    for (std::size_t i = 0; i < pop; ++i)
      if (fit[i] < state.best_fitness) {
        state.best_fitness = fit[i];
        state.best_position = state.positions[i];
      }
    state.refresh_mean();

    // Eagle refinement of the top members against a snapshot of this generation.
    const auto refine_order = ranking();
    const auto n_refine = static_cast<std::size_t>(std::ceil(ga.eagle_fraction * static_cast<double>(pop)));
    const EagleGaState snapshot = state;
    std::vector<Position> refined(n_refine);
    std::vector<double> refined_fit(n_refine);
    for (std::size_t k = 0; k < n_refine; ++k) {
      const std::size_t i = refine_order[k];
      Rng rng(derive_seed(seed, {g, i, 0xEA61E}));
      EagleGaState local = snapshot;
      double current = fit[i];
      for (auto op : {eagle_select, eagle_spiral, eagle_swoop}) {
        Position cand = op(local, i, eagle, rng);
        const double f = cache.evaluate(threshold_mask(cand));
        if (f < current) {
          current = f;
          local.positions[i] = std::move(cand);
        }
      }
      refined[k] = std::move(local.positions[i]);
      refined_fit[k] = current;
    }
    for (std::size_t k = 0; k < n_refine; ++k) {
      const std::size_t i = refine_order[k];
      state.positions[i] = std::move(refined[k]);
      fit[i] = refined_fit[k];
    }
    record(g);
  }

  result.mask = threshold_mask(state.best_position);
  result.best_fitness = state.best_fitness;
  result.evaluations = cache.evaluations();
  return result;
}

}  // namespace iotguard
