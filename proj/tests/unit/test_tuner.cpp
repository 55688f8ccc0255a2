#include <gtest/gtest.h>

#include <cmath>

#include "iotguard/tuner.hpp"
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

/// Label is the sign agreement of two uniform features; no single threshold helps.
FlowDataset xor_like(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> rows;
  std::vector<std::uint8_t> ys;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
    rows.push_back({a, b});
    ys.push_back(a * b > 0 ? 1 : 0);
  }
  return testing_helpers::numeric(rows, ys);
}

/// Straight-line transcription of the swarm update with neighbours present.
Position reference_step(const SwarmState& s, std::size_t i, const BehaviorWeights& w) {
  const auto& x = s.agents[i];
  Position out(x.size());
  std::vector<std::size_t> nb;
  for (std::size_t j = 0; j < s.agents.size(); ++j) {
    if (j == i) continue;
    double d2 = 0;
    for (std::size_t d = 0; d < x.size(); ++d) d2 += std::pow(x[d] - s.agents[j][d], 2);
    if (std::sqrt(d2) <= s.radius) nb.push_back(j);
  }
  for (std::size_t d = 0; d < x.size(); ++d) {
    double S = 0, A = 0, C = 0;
    for (auto j : nb) {
      S += -(x[d] - s.agents[j][d]);
      A += s.steps[j][d] / nb.size();
      C += s.agents[j][d] / nb.size();
    }
    C -= x[d];
    const double F = s.food[d] - x[d];
    const double E = x[d] - s.enemy[d];
    const double dx = w.separation * S + w.alignment * A + w.cohesion * C + w.attraction * F + w.distraction * E +
                      w.inertia * s.steps[i][d];
    out[d] = std::min(1.0, std::max(0.0, x[d] + dx));
  }
  return out;
}

struct Bowl {
  Position target;
  ParamSpace space;
  double operator()(const Hyperparameters& hp) const {
    const auto x = normalize(space, hp);
    double s = 0;
    for (std::size_t d = 0; d < x.size(); ++d) s += (x[d] - target[d]) * (x[d] - target[d]);
    return s;
  }
};

}  // namespace

TEST(SaFitness, Percentage) {
  EXPECT_EQ(misclassification_percentage(5, 100), 5.0);
  EXPECT_EQ(misclassification_percentage(0, 40), 0.0);
  EXPECT_EQ(misclassification_percentage(40, 40), 100.0);
  EXPECT_EQ(kind_of([] { misclassification_percentage(0, 0); }), ErrorKind::empty_input);
}

TEST(SaFitness, MatchesManualHoldout) {
  const auto ds = xor_like(200, 1);
  Hyperparameters hp;
  hp.rf_n_trees = 5;
  const auto mask = FeatureMask::all(2);
  const double got = sa_fitness(hp, ds, mask, 3);
  const auto split = stratified_split(ds.labels(), 0.8, derive_seed(3, {0x1AAE}));
  const auto model = fit_ensemble(ds.subset(split.train), mask, hp, derive_seed(3, {0x7E57}));
  const auto x = ds.to_matrix();
  std::size_t wrong = 0;
  for (auto r : split.test) wrong += model.predict(x.row(r)).label != ds.label(r);
  EXPECT_NEAR(got, 100.0 * wrong / split.test.size(), 1e-12);
}

TEST(SaFitness, InfeasibleInnerSplit) {
  const auto ds = testing_helpers::numeric({{1}, {2}, {3}, {4}}, {0, 0, 0, 1});
  EXPECT_EQ(kind_of([&] { sa_fitness(Hyperparameters{}, ds, FeatureMask::all(1), 1); }), ErrorKind::insufficient_data);
}

TEST(SaAccept, Rules) {
  Rng rng(1);
  for (double t : {1e-9, 0.5, 100.0}) EXPECT_TRUE(sa_accept(-1.0, t, rng));
  std::size_t accepted = 0;
  for (int i = 0; i < 1000; ++i) accepted += sa_accept(10.0, 1e-6, rng);
  EXPECT_EQ(accepted, 0u);
  EXPECT_EQ(kind_of([&] { sa_accept(1.0, 0.0, rng); }), ErrorKind::parameter);
}

TEST(SaAccept, MetropolisFrequency) {
  Rng rng(2024);
  const int n = 10000;
  int accepted = 0;
  for (int i = 0; i < n; ++i) accepted += sa_accept(1.0, 1.0, rng);
  const double p = std::exp(-1.0);
  const double sd = std::sqrt(p * (1 - p) / n);
  EXPECT_NEAR(static_cast<double>(accepted) / n, p, std::min(0.02, 3 * sd));
}

TEST(Dragonfly, LoneAgentTakesLevyFlight) {
  SwarmState s;
  s.agents = {{0.5, 0.5, 0.5}};
  s.steps = {{0, 0, 0}};
  s.food = s.enemy = s.agents[0];
  Rng rng(7), probe(7);
  const auto out = dragonfly_step(s, 0, BehaviorWeights{}, rng);
  EXPECT_NEAR(levy_sigma(1.5), 0.6965745, 1e-6);
  const double sigma = std::pow(std::tgamma(2.5) * std::sin(std::numbers::pi * 0.75) /
                                    (std::tgamma(1.25) * 1.5 * std::pow(2.0, 0.25)),
                                1.0 / 1.5);
  for (std::size_t d = 0; d < 3; ++d) {
    const double u = probe.normal();
    const double v = probe.normal();
    EXPECT_NEAR(out[d], std::clamp(0.5 + 0.01 * u * sigma / std::pow(std::abs(v), 1.0 / 1.5), 0.0, 1.0), 1e-12);
  }
}

TEST(Dragonfly, CoincidentSwarmIsFixedPoint) {
  SwarmState s;
  s.agents = std::vector<Position>(3, Position{0.2, 0.9});
  s.steps = std::vector<Position>(3, Position{0.0, 0.0});
  s.food = s.enemy = s.agents[0];
  Rng rng(1);
  EXPECT_EQ(dragonfly_step(s, 1, BehaviorWeights::at(0.3), rng), s.agents[1]);
}

TEST(Dragonfly, TwoAgentTraceMatchesReference) {
  Rng gen(9);
  for (int t = 0; t < 30; ++t) {
    SwarmState s;
    for (int a = 0; a < 2; ++a) {
      s.agents.push_back({gen.uniform(), gen.uniform(), gen.uniform()});
      s.steps.push_back({gen.uniform(-0.1, 0.1), gen.uniform(-0.1, 0.1), gen.uniform(-0.1, 0.1)});
    }
    s.food = {gen.uniform(), gen.uniform(), gen.uniform()};
    s.enemy = {gen.uniform(), gen.uniform(), gen.uniform()};
    s.radius = 2.0;
    const auto w = BehaviorWeights::at(gen.uniform());
    Rng rng(1);
    const auto got = dragonfly_step(s, t % 2, w, rng);
    const auto want = reference_step(s, t % 2, w);
    for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(got[d], want[d], 1e-12);
  }
}

TEST(Dragonfly, StaysInBounds) {
  Rng gen(10);
  for (int t = 0; t < 200; ++t) {
    SwarmState s;
    for (int a = 0; a < 4; ++a) {
      s.agents.push_back({gen.uniform(), gen.uniform()});
      s.steps.push_back({gen.uniform(-2, 2), gen.uniform(-2, 2)});
    }
    s.food = {gen.uniform(), gen.uniform()};
    s.enemy = {gen.uniform(), gen.uniform()};
    s.radius = gen.uniform();
    for (double v : dragonfly_step(s, gen.index(4), BehaviorWeights::at(gen.uniform()), gen)) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Schedule, TemperatureAndRadius) {
  SaParams sa;
  for (std::size_t k = 0; k < 40; ++k) {
    EXPECT_DOUBLE_EQ(sa.temperature(k), std::pow(0.9, static_cast<double>(k)));
    EXPECT_LT(sa.temperature(k + 1), sa.temperature(k));
  }
  EXPECT_DOUBLE_EQ(sa.radius(1), 0.5);
  EXPECT_DOUBLE_EQ(sa.radius(sa.iterations), 0.1);
  const auto early = BehaviorWeights::at(0.0), late = BehaviorWeights::at(1.0);
  EXPECT_GT(early.separation, late.separation);
  EXPECT_LT(early.attraction, late.attraction);
  sa.cooling_alpha = 1.0;
  EXPECT_EQ(kind_of([&] { sa.validate(); }), ErrorKind::parameter);
}

TEST(ParamSpace, NormalizeRoundTrip) {
  const auto space = ParamSpace::defaults();
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    Position x(space.dims());
    for (auto& v : x) v = rng.uniform();
    const auto back = normalize(space, denormalize(space, x));
    for (std::size_t d = 0; d < x.size(); ++d) {
      const auto& k = space.knobs[d];
      if (k.integer) EXPECT_LE(std::abs(back[d] - x[d]), 0.5 / (k.upper - k.lower) + 1e-12);
      else EXPECT_NEAR(back[d], x[d], 1e-12);
    }
  }
}

TEST(ParamSpace, JsonAndValidation) {
  const auto space = ParamSpace::defaults();
  const auto back = param_space_from_json(to_json(space));
  EXPECT_EQ(to_json(back), to_json(space));
  auto bad = space;
  bad.knobs[0].upper = bad.knobs[0].lower;
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::parameter);
  bad = space;
  bad.knobs.push_back(bad.knobs[0]);
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::parameter);
  bad = space;
  bad.knobs[0].name = "voting";
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::parameter);
}

TEST(Anneal, TraceMonotoneAndDeterministic) {
  Bowl bowl{{0.3, 0.8}, {}};
  bowl.space.knobs = {{"gbt_learning_rate", 0.05, 0.5, false}, {"gbt_reg_lambda", 0.1, 5.0, false}};
  SaParams sa;
  sa.iterations = 30;
  const auto a = anneal(bowl.space, sa, 5, bowl);
  ASSERT_EQ(a.trace.size(), 31u);
  for (std::size_t k = 1; k < a.trace.size(); ++k) {
    EXPECT_LE(a.trace[k].best_fitness, a.trace[k - 1].best_fitness);
    EXPECT_LT(a.trace[k].temperature, a.trace[k - 1].temperature);
    EXPECT_DOUBLE_EQ(a.trace[k].temperature, sa.temperature(k));
  }
  EXPECT_EQ(a.trace.back().best_fitness, a.best_fitness);
  EXPECT_EQ(bowl(a.best), a.best_fitness);
  EXPECT_LT(a.best_fitness, a.trace.front().best_fitness);
  const auto b = anneal(bowl.space, sa, 5, bowl);
  EXPECT_EQ(trace_csv(a), trace_csv(b));
  EXPECT_EQ(to_json(a.best), to_json(b.best));
  sa.threads = 3;
  EXPECT_EQ(trace_csv(anneal(bowl.space, sa, 5, bowl)), trace_csv(a));
}

TEST(Anneal, ZeroIterationsReturnsBestInitialAgent) {
  Bowl bowl{{0.5}, {}};
  bowl.space.knobs = {{"gbt_reg_lambda", 0.1, 5.0, false}};
  SaParams sa;
  sa.iterations = 0;
  const auto r = anneal(bowl.space, sa, 3, bowl);
  ASSERT_EQ(r.trace.size(), 1u);
  double best = INFINITY;
  for (std::size_t a = 0; a < sa.n_agents; ++a) {
    Rng rng(derive_seed(3, {0xA6E, a}));
    const double x = rng.uniform();
    best = std::min(best, (x - 0.5) * (x - 0.5));
  }
  EXPECT_NEAR(r.best_fitness, best, 1e-12);
}

TEST(Tune, DeepBoostingBeatsStumpsOnXor) {
  const auto ds = xor_like(400, 12);
  const auto mask = FeatureMask::all(2);
  ParamSpace space;
  space.base.dt_max_depth = 1;
  space.base.rf_max_depth = 1;
  space.base.rf_n_trees = 5;
  space.base.gbt_n_rounds = 40;
  space.knobs = {{"gbt_max_depth", 1, 3, true}};

  // Grid oracle: depth 1 is strictly worse than deeper boosting.
  std::vector<double> grid;
  for (int depth : {1, 2, 3}) {
    auto hp = space.base;
    hp.gbt_max_depth = depth;
    grid.push_back(sa_fitness(hp, ds, mask, 4));
  }
  EXPECT_GT(grid[0], grid[1]);
  EXPECT_GT(grid[0], grid[2]);

  SaParams sa;
  sa.n_agents = 4;
  sa.iterations = 5;
  const auto r = tune(ds, mask, space, sa, 4);
  EXPECT_GT(r.best.gbt_max_depth, 1);
  EXPECT_EQ(r.best_fitness, std::min(grid[1], grid[2]));
  EXPECT_EQ(to_json(tune(ds, mask, space, sa, 4).best), to_json(r.best));
}
