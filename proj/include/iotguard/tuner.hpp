#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"

#include "iotguard/csv.hpp"
#include "iotguard/error.hpp"
#include "iotguard/feature_mask.hpp"
#include "iotguard/flowdata.hpp"
#include "iotguard/models.hpp"
#include "iotguard/parallel.hpp"
#include "iotguard/random.hpp"

namespace iotguard {

using Position = std::vector<double>;

// ---------------------------------------------------------------------------
// Search space

struct Knob {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  bool integer = false;
};

/// Knobs searched by the tuner. Fields of `base` not named by a knob stay fixed.
struct ParamSpace {
  Hyperparameters base;
  std::vector<Knob> knobs;

  static const std::vector<std::string>& knob_names() {
    static const std::vector<std::string> names{"dt_max_depth",  "rf_n_trees",        "rf_max_depth",  "gbt_n_rounds",
                                                "gbt_max_depth", "gbt_learning_rate", "gbt_reg_lambda"};
    return names;
  }

  static ParamSpace defaults() {
    ParamSpace s;
    s.knobs = {{"dt_max_depth", 2, 12, true},         {"rf_n_trees", 10, 60, true},
               {"rf_max_depth", 4, 14, true},         {"gbt_n_rounds", 10, 80, true},
               {"gbt_max_depth", 1, 6, true},         {"gbt_learning_rate", 0.05, 0.5, false},
               {"gbt_reg_lambda", 0.1, 5.0, false}};
    return s;
  }

  std::size_t dims() const noexcept { return knobs.size(); }

  void validate() const {
    if (knobs.empty()) throw Error(ErrorKind::parameter, "parameter space has no knobs");
    const auto& names = knob_names();
    for (std::size_t i = 0; i < knobs.size(); ++i) {
      const auto& k = knobs[i];
      if (std::find(names.begin(), names.end(), k.name) == names.end())
        throw Error(ErrorKind::parameter, "unknown knob '" + k.name + "'");
      for (std::size_t j = 0; j < i; ++j)
        if (knobs[j].name == k.name) throw Error(ErrorKind::parameter, "duplicate knob '" + k.name + "'");
      if (!(k.lower < k.upper)) throw Error(ErrorKind::parameter, "knob '" + k.name + "' needs lower < upper");
      const bool is_int = k.name != "gbt_learning_rate" && k.name != "gbt_reg_lambda";
      if (k.integer != is_int) throw Error(ErrorKind::parameter, "knob '" + k.name + "' has the wrong type");
      if (is_int && k.lower < 1) throw Error(ErrorKind::parameter, "knob '" + k.name + "' must be at least 1");
      if (k.name == "gbt_learning_rate" && !(k.lower > 0.0 && k.upper <= 1.0))
        throw Error(ErrorKind::parameter, "gbt_learning_rate bounds must lie in (0, 1]");
      if (k.name == "gbt_reg_lambda" && k.lower < 0.0) throw Error(ErrorKind::parameter, "gbt_reg_lambda must be >= 0");
    }
    base.validate();
  }
};

namespace detail {

inline void set_knob(Hyperparameters& hp, const std::string& name, double v) {
  const int i = static_cast<int>(v);
  if (name == "dt_max_depth") hp.dt_max_depth = i;
  else if (name == "rf_n_trees") hp.rf_n_trees = i;
  else if (name == "rf_max_depth") hp.rf_max_depth = i;
  else if (name == "gbt_n_rounds") hp.gbt_n_rounds = i;
  else if (name == "gbt_max_depth") hp.gbt_max_depth = i;
  else if (name == "gbt_learning_rate") hp.gbt_learning_rate = v;
  else if (name == "gbt_reg_lambda") hp.gbt_reg_lambda = v;
  else throw Error(ErrorKind::parameter, "unknown knob '" + name + "'");
}

inline double get_knob(const Hyperparameters& hp, const std::string& name) {
  if (name == "dt_max_depth") return hp.dt_max_depth;
  if (name == "rf_n_trees") return hp.rf_n_trees;
  if (name == "rf_max_depth") return hp.rf_max_depth;
  if (name == "gbt_n_rounds") return hp.gbt_n_rounds;
  if (name == "gbt_max_depth") return hp.gbt_max_depth;
  if (name == "gbt_learning_rate") return hp.gbt_learning_rate;
  if (name == "gbt_reg_lambda") return hp.gbt_reg_lambda;
  throw Error(ErrorKind::parameter, "unknown knob '" + name + "'");
}

}  // namespace detail

/// Maps a point of [0,1]^k onto hyperparameters; integer knobs are rounded.
inline Hyperparameters denormalize(const ParamSpace& space, const Position& x) {
  if (x.size() != space.dims()) throw Error(ErrorKind::shape, "position length does not match the parameter space");
  Hyperparameters hp = space.base;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const auto& k = space.knobs[d];
    double v = k.lower + std::clamp(x[d], 0.0, 1.0) * (k.upper - k.lower);
    if (k.integer) v = std::round(v);
    detail::set_knob(hp, k.name, v);
  }
  return hp;
}

inline Position normalize(const ParamSpace& space, const Hyperparameters& hp) {
  Position x(space.dims());
  for (std::size_t d = 0; d < x.size(); ++d) {
    const auto& k = space.knobs[d];
    x[d] = std::clamp((detail::get_knob(hp, k.name) - k.lower) / (k.upper - k.lower), 0.0, 1.0);
  }
  return x;
}

inline nlohmann::json to_json(const ParamSpace& s) {
  nlohmann::json knobs = nlohmann::json::array();
  for (const auto& k : s.knobs)
    knobs.push_back({{"name", k.name}, {"lower", k.lower}, {"upper", k.upper}, {"integer", k.integer}});
  return {{"base", to_json(s.base)}, {"knobs", knobs}};
}

inline ParamSpace param_space_from_json(const nlohmann::json& j, ParamSpace s = ParamSpace::defaults()) {
  if (!j.is_object()) throw Error(ErrorKind::config, "parameter space must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "base") {
      s.base = hyperparameters_from_json(value, s.base);
    } else if (key == "knobs") {
      s.knobs.clear();
      for (const auto& k : value) {
        Knob knob;
        for (const auto& [kk, kv] : k.items()) {
          if (kk == "name") knob.name = kv.get<std::string>();
          else if (kk == "lower") knob.lower = kv.get<double>();
          else if (kk == "upper") knob.upper = kv.get<double>();
          else if (kk == "integer") knob.integer = kv.get<bool>();
          else throw Error(ErrorKind::config, "unknown knob key '" + kk + "'");
        }
        s.knobs.push_back(knob);
      }
    } else {
      throw Error(ErrorKind::config, "unknown parameter-space key '" + key + "'");
    }
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Annealing parameters and swarm state

struct SaParams {
  std::size_t n_agents = 8;
  std::size_t iterations = 40;
  double t0 = 1.0;
  double cooling_alpha = 0.9;
  double radius_start = 0.5;
  double radius_end = 0.1;
  unsigned threads = 1;

  void validate() const {
    if (n_agents < 1) throw Error(ErrorKind::parameter, "n_agents must be at least 1");
    if (!(t0 > 0.0)) throw Error(ErrorKind::parameter, "t0 must be positive");
    if (!(cooling_alpha > 0.0 && cooling_alpha < 1.0)) throw Error(ErrorKind::parameter, "cooling_alpha must lie in (0, 1)");
    if (!(radius_start >= radius_end && radius_end >= 0.0)) throw Error(ErrorKind::parameter, "bad radius schedule");
  }

  /// t_k = t0 * alpha^k.
  double temperature(std::size_t k) const { return t0 * std::pow(cooling_alpha, static_cast<double>(k)); }

  /// Linear shrink from radius_start (first iteration) to radius_end (last).
  double radius(std::size_t iteration) const {
    if (iterations <= 1) return radius_start;
    const double t = static_cast<double>(iteration - 1) / static_cast<double>(iterations - 1);
    return radius_start + (radius_end - radius_start) * t;
  }
};

struct BehaviorWeights {
  double separation = 0.1;
  double alignment = 0.1;
  double cohesion = 0.1;
  double attraction = 0.2;
  double distraction = 0.1;
  double inertia = 0.9;

  /// Annealed weights at progress t in [0,1]: separation, alignment, cohesion
  /// and inertia decay linearly while attraction grows.
  static BehaviorWeights at(double t) {
    t = std::clamp(t, 0.0, 1.0);
    BehaviorWeights w;
    w.separation = w.alignment = w.cohesion = 0.1 * (1.0 - t);
    w.attraction = 0.2 + 0.6 * t;
    w.distraction = 0.1;
    w.inertia = 0.9 - 0.5 * t;
    return w;
  }
};

struct SwarmState {
  std::vector<Position> agents;
  std::vector<Position> steps;
  Position food;
  Position enemy;
  double temperature = 1.0;
  double radius = 0.5;
  std::size_t iteration = 0;
};

inline double distance(const Position& a, const Position& b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
  return std::sqrt(s);
}

inline constexpr double kLevyBeta = 1.5;
inline constexpr double kLevyScale = 0.01;

/// Mantegna's sigma for a Levy-stable step of exponent beta.
inline double levy_sigma(double beta) {
  return std::pow(std::tgamma(1.0 + beta) * std::sin(std::numbers::pi * beta / 2.0) /
                      (std::tgamma((1.0 + beta) / 2.0) * beta * std::pow(2.0, (beta - 1.0) / 2.0)),
                  1.0 / beta);
}

/// One Levy step per dimension: scale * u * sigma / |v|^(1/beta), drawing
/// u then v (standard normals) for each dimension in order.
inline Position levy_step(std::size_t dims, Rng& rng) {
  const double sigma = levy_sigma(kLevyBeta);
  Position s(dims);
  for (double& v : s) {
    const double u = rng.normal();
    const double w = rng.normal();
    v = kLevyScale * u * sigma / std::pow(std::abs(w), 1.0 / kLevyBeta);
  }
  return s;
}

/// Proposed position for one agent. Neighbours are the other agents within
/// state.radius. With neighbours the step is
///   dX = s*S + a*A + c*C + f*F + e*E + w*dX_old,
///   S = -sum_j (X - X_j), A = mean neighbour dX, C = mean neighbour X - X,
///   F = food - X, E = X - enemy,
/// and X_new = X + dX. Without neighbours X_new = X + Levy step. Clamped.
inline Position dragonfly_step(const SwarmState& state, std::size_t agent, const BehaviorWeights& w, Rng& rng) {
  const auto& x = state.agents.at(agent);
  const std::size_t dims = x.size();
  std::vector<std::size_t> neighbours;
  for (std::size_t j = 0; j < state.agents.size(); ++j)
    if (j != agent && distance(x, state.agents[j]) <= state.radius) neighbours.push_back(j);

  Position out(dims);
  if (neighbours.empty()) {
    const auto step = levy_step(dims, rng);
    for (std::size_t d = 0; d < dims; ++d) out[d] = x[d] + step[d];
  } else {
    const double n = static_cast<double>(neighbours.size());
    for (std::size_t d = 0; d < dims; ++d) {
      double sep = 0.0, align = 0.0, coh = 0.0;
      for (std::size_t j : neighbours) {
        sep -= x[d] - state.agents[j][d];
        align += state.steps[j][d];
        coh += state.agents[j][d];
      }
      align /= n;
      coh = coh / n - x[d];
      const double food = state.food[d] - x[d];
      const double enemy = x[d] - state.enemy[d];
      const double dx = w.separation * sep + w.alignment * align + w.cohesion * coh + w.attraction * food +
                        w.distraction * enemy + w.inertia * state.steps[agent][d];
      out[d] = x[d] + dx;
    }
  }
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
  return out;
}

/// Metropolis rule. Improvements are accepted without consuming a draw.
inline bool sa_accept(double delta_fitness, double temperature, Rng& rng) {
  if (!(temperature > 0.0)) throw Error(ErrorKind::parameter, "temperature must be positive");
  if (delta_fitness < 0.0) return true;
  return rng.uniform() < std::exp(-delta_fitness / temperature);
}

// ---------------------------------------------------------------------------
// Objective

inline double misclassification_percentage(std::size_t wrong, std::size_t total) {
  if (total == 0) throw Error(ErrorKind::empty_input, "no rows evaluated");
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(total);
}

/// Percentage of misclassified held-out rows for an ensemble trained under
/// given hyperparameters on a fixed stratified 80/20 inner split.
class TuningObjective {
 public:
  TuningObjective(const FlowDataset& ds, const FeatureMask& mask, std::uint64_t seed)
      : x_(ds.to_matrix()), labels_(ds.labels()), mask_(mask), seed_(seed) {
    if (mask.size() != ds.n_features()) throw Error(ErrorKind::shape, "mask length does not match feature count");
    SplitIndices split;
    try {
      split = stratified_split(labels_, 0.8, derive_seed(seed, {0x1AAE}));
    } catch (const Error& e) {
      throw Error(ErrorKind::insufficient_data, std::string("inner tuning split infeasible: ") + e.what());
    }
    test_ = std::move(split.test);
    train_ = std::make_unique<TrainingSet>(x_, labels_, std::move(split.train));
  }

  TuningObjective(const TuningObjective&) = delete;
  TuningObjective& operator=(const TuningObjective&) = delete;

  double operator()(const Hyperparameters& hp) const {
    const auto model = fit_ensemble(*train_, mask_, hp, derive_seed(seed_, {0x7E57}));
    std::size_t wrong = 0;
    for (std::size_t r : test_) wrong += model.predict(x_.row(r)).label != labels_[r];
    return misclassification_percentage(wrong, test_.size());
  }

 private:
  Matrix x_;
  std::vector<std::uint8_t> labels_;
  FeatureMask mask_;
  std::uint64_t seed_;
  std::vector<std::size_t> test_;
  std::unique_ptr<TrainingSet> train_;
};

inline double sa_fitness(const Hyperparameters& hp, const FlowDataset& ds, const FeatureMask& mask, std::uint64_t seed) {
  return TuningObjective(ds, mask, seed)(hp);
}

// ---------------------------------------------------------------------------
// Tuning loop

struct TracePoint {
  std::size_t iteration = 0;
  double best_fitness = 0.0;
  double temperature = 0.0;
};

struct TuningResult {
  Hyperparameters best;
  double best_fitness = 0.0;
  std::vector<TracePoint> trace;
  std::size_t evaluations = 0;
  std::size_t accepted_worse = 0;
};

inline nlohmann::json to_json(const TuningResult& r) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& t : r.trace)
    trace.push_back({{"iteration", t.iteration}, {"best_fitness", t.best_fitness}, {"temperature", t.temperature}});
  return {{"best", to_json(r.best)},
          {"best_fitness", r.best_fitness},
          {"evaluations", r.evaluations},
          {"accepted_worse", r.accepted_worse},
          {"trace", trace}};
}

inline std::string trace_csv(const TuningResult& r) {
  std::string out = "iteration,best_fitness,temperature\n";
  for (const auto& t : r.trace)
    out += std::to_string(t.iteration) + "," + csv::format_number(t.best_fitness) + "," +
           csv::format_number(t.temperature) + "\n";
  return out;
}

/// Objective-agnostic annealing loop. `objective` maps hyperparameters to a
/// fitness to be minimized and must be safe to call concurrently.
template <class Objective>
TuningResult anneal(const ParamSpace& space, const SaParams& sa, std::uint64_t seed, const Objective& objective) {
  space.validate();
  sa.validate();
  const std::size_t dims = space.dims();
  const std::size_t n = sa.n_agents;

  std::map<std::string, double> cache;
  std::size_t evaluations = 0;
  auto evaluate = [&](const std::vector<Position>& xs) {
    std::vector<Hyperparameters> hps;
    std::vector<std::string> keys;
    for (const auto& x : xs) {
      hps.push_back(denormalize(space, x));
      keys.push_back(to_json(hps.back()).dump());
    }
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (!cache.count(keys[i]) &&
          std::none_of(todo.begin(), todo.end(), [&](std::size_t t) { return keys[t] == keys[i]; }))
        todo.push_back(i);
    std::vector<double> fresh(todo.size());
    parallel_for(todo.size(), sa.threads, [&](std::size_t t) { fresh[t] = objective(hps[todo[t]]); });
    for (std::size_t t = 0; t < todo.size(); ++t) cache[keys[todo[t]]] = fresh[t];
    evaluations += todo.size();
    std::vector<double> out;
    for (const auto& k : keys) out.push_back(cache.at(k));
    return out;
  };

  SwarmState state;
  for (std::size_t a = 0; a < n; ++a) {
    Rng rng(derive_seed(seed, {0xA6E, a}));
    Position x(dims);
    for (double& v : x) v = rng.uniform();
    state.agents.push_back(std::move(x));
  }
  state.steps.assign(n, Position(dims, 0.0));
  std::vector<double> fit = evaluate(state.agents);

  double food_fit = std::numeric_limits<double>::infinity();
  double enemy_fit = -std::numeric_limits<double>::infinity();
  auto observe = [&](const Position& x, double f) {
    if (f < food_fit) food_fit = f, state.food = x;
    if (f > enemy_fit) enemy_fit = f, state.enemy = x;
  };
  for (std::size_t a = 0; a < n; ++a) observe(state.agents[a], fit[a]);

  TuningResult result;
  state.temperature = sa.temperature(0);
  result.trace.push_back({0, food_fit, state.temperature});

  for (std::size_t k = 1; k <= sa.iterations; ++k) {
    state.iteration = k;
    state.radius = sa.radius(k);
    const double progress = sa.iterations <= 1 ? 1.0 : static_cast<double>(k - 1) / static_cast<double>(sa.iterations - 1);
    const auto weights = BehaviorWeights::at(progress);

    std::vector<Rng> rngs;
    std::vector<Position> proposals;
    for (std::size_t a = 0; a < n; ++a) {
      rngs.emplace_back(derive_seed(seed, {k, a, 0xD7A6}));
      proposals.push_back(dragonfly_step(state, a, weights, rngs[a]));
    }
    const auto proposal_fit = evaluate(proposals);

    for (std::size_t a = 0; a < n; ++a) {
      const double delta = proposal_fit[a] - fit[a];
      if (sa_accept(delta, state.temperature, rngs[a])) {
        if (delta > 0.0) ++result.accepted_worse;
        for (std::size_t d = 0; d < dims; ++d) state.steps[a][d] = proposals[a][d] - state.agents[a][d];
        state.agents[a] = proposals[a];
        fit[a] = proposal_fit[a];
      } else {
        std::fill(state.steps[a].begin(), state.steps[a].end(), 0.0);
      }
      observe(proposals[a], proposal_fit[a]);
    }
    state.temperature = sa.temperature(k);
    result.trace.push_back({k, food_fit, state.temperature});
  }

  result.best = denormalize(space, state.food);
  result.best_fitness = food_fit;
  result.evaluations = evaluations;
  return result;
}

/// Tunes the ensemble knobs of `space` by swarm-guided annealing, scoring each
/// candidate with the held-out misclassification percentage.
inline TuningResult tune(const FlowDataset& ds, const FeatureMask& mask, const ParamSpace& space, const SaParams& sa,
                         std::uint64_t seed) {
  const TuningObjective objective(ds, mask, seed);
  return anneal(space, sa, seed, objective);
}

}  // namespace iotguard
