#pragma once

#include <bit>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "iotguard/csv.hpp"
#include "iotguard/error.hpp"
#include "iotguard/featstats.hpp"
#include "iotguard/feature_mask.hpp"
#include "iotguard/flowdata.hpp"
#include "iotguard/metrics.hpp"
#include "iotguard/models.hpp"
#include "iotguard/preprocess.hpp"
#include "iotguard/random.hpp"
#include "iotguard/selector.hpp"
#include "iotguard/tuner.hpp"

namespace iotguard {

struct PipelineConfig {
  PreprocessOptions preprocess;
  double train_fraction = 0.8;
  bool enable_prefilter = true;
  /// Columns kept by the prefilter; unset keeps every column.
  std::optional<std::size_t> keep_top;
  MadKsConfig madks;
  GaParams ga;
  EagleParams eagle;
  bool enable_tuner = false;
  ParamSpace space = ParamSpace::defaults();
  SaParams sa;
  /// Ensemble settings when the tuner is off; fixed knobs and voting otherwise.
  Hyperparameters hp;
  unsigned threads = 1;

  void validate() const {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw Error(ErrorKind::parameter, "train_fraction must lie strictly between 0 and 1");
    if (!(preprocess.max_missing_fraction >= 0.0 && preprocess.max_missing_fraction <= 1.0))
      throw Error(ErrorKind::parameter, "max_missing_fraction must lie in [0, 1]");
    if (preprocess.eta && !(*preprocess.eta > 0.0 && *preprocess.eta < 1.0))
      throw Error(ErrorKind::parameter, "eta must lie strictly between 0 and 1");
    if (keep_top && *keep_top < 1) throw Error(ErrorKind::parameter, "keep_top must be at least 1");
    if (threads < 1) throw Error(ErrorKind::parameter, "threads must be at least 1");
    ga.validate();
    eagle.validate();
    hp.validate();
    if (enable_tuner) {
      space.validate();
      sa.validate();
    }
  }
};

struct ExperimentConfig {
  std::vector<double> eta_values{0.2, 0.3, 0.4, 0.5};
  std::vector<double> at_risk_fractions{0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  PipelineConfig pipeline;

  void validate() const {
    if (eta_values.empty() || at_risk_fractions.empty()) throw Error(ErrorKind::parameter, "sweep grid is empty");
    for (double v : eta_values)
      if (!(v > 0.0 && v < 1.0)) throw Error(ErrorKind::parameter, "eta values must lie in (0, 1)");
    for (double v : at_risk_fractions)
      if (!(v > 0.0 && v < 1.0)) throw Error(ErrorKind::parameter, "at-risk fractions must lie in (0, 1)");
    if (seeds.empty()) throw Error(ErrorKind::parameter, "seeds must be non-empty");
    pipeline.validate();
  }
};

inline nlohmann::json to_json(const PreprocessOptions& o) {
  return {{"max_missing_fraction", o.max_missing_fraction},
          {"smote", o.smote},
          {"smote_k", o.smote_k},
          {"eta", o.eta ? nlohmann::json(*o.eta) : nlohmann::json(nullptr)},
          {"resample_before_smote", o.resample_before_smote}};
}

inline nlohmann::json to_json(const GaParams& g) {
  return {{"population_size", g.population_size}, {"generations", g.generations},
          {"tournament_k", g.tournament_k},       {"crossover_rate", g.crossover_rate},
          {"mutation_rate", g.mutation_rate},     {"elitism", g.elitism},
          {"eagle_fraction", g.eagle_fraction},   {"w1", g.w1},
          {"w2", g.w2},                           {"proxy_max_depth", g.proxy_max_depth},
          {"proxy_folds", g.proxy_folds}};
}

inline nlohmann::json to_json(const EagleParams& e) {
  return {{"eta_sel", e.eta_sel}, {"omega", e.omega}, {"phi", e.phi}, {"c1", e.c1}, {"c2", e.c2}};
}

inline nlohmann::json to_json(const SaParams& s) {
  return {{"n_agents", s.n_agents},         {"iterations", s.iterations},     {"t0", s.t0},
          {"cooling_alpha", s.cooling_alpha}, {"radius_start", s.radius_start}, {"radius_end", s.radius_end}};
}

inline nlohmann::json to_json(const MadKsConfig& m) {
  return {{"lambda", m.lambda}, {"min_samples_per_class", m.min_samples_per_class}};
}

/// Thread count is left out: results do not depend on it.
inline nlohmann::json to_json(const PipelineConfig& c) {
  return {{"preprocess", to_json(c.preprocess)},
          {"train_fraction", c.train_fraction},
          {"enable_prefilter", c.enable_prefilter},
          {"keep_top", c.keep_top ? nlohmann::json(*c.keep_top) : nlohmann::json(nullptr)},
          {"madks", to_json(c.madks)},
          {"ga", to_json(c.ga)},
          {"eagle", to_json(c.eagle)},
          {"enable_tuner", c.enable_tuner},
          {"space", to_json(c.space)},
          {"sa", to_json(c.sa)},
          {"hyperparameters", to_json(c.hp)}};
}

inline nlohmann::json to_json(const ExperimentConfig& e) {
  return {{"eta_values", e.eta_values},
          {"at_risk_fractions", e.at_risk_fractions},
          {"seeds", e.seeds},
          {"pipeline", to_json(e.pipeline)}};
}

/// The scaled benchmark: 2,000 rows, 20 raw features (5 informative, 14 noise,
/// one categorical protocol), about 19% attack.
inline FlowDataset synth_benchmark(std::uint64_t seed) { return synth_generate(1620, 380, 5, 14, seed); }

// ---------------------------------------------------------------------------
// Phases

namespace detail {

class PhaseTimer {
 public:
  explicit PhaseTimer(std::vector<std::pair<std::string, double>>& sink) : sink_(sink) {}

  template <class Fn>
  auto run(const std::string& phase, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    auto finish = [&] {
      sink_.emplace_back(phase,
                         std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    };
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        finish();
      } else {
        auto out = fn();
        finish();
        return out;
      }
    } catch (const PhaseError&) {
      throw;
    } catch (const Error& e) {
      throw PhaseError(phase, e);
    } catch (const std::exception& e) {
      throw PhaseError(phase, Error(ErrorKind::domain, e.what()));
    }
  }

 private:
  std::vector<std::pair<std::string, double>>& sink_;
};

}  // namespace detail

/// Everything learned from a training split.
struct TrainedPipeline {
  FittedPreprocessor preprocessor;
  PreprocessReport preprocess_report;
  FlowDataset train;
  FeatureMask prefilter_mask = FeatureMask::all(1);
  SelectionResult selection;
  std::optional<TuningResult> tuning;
  EnsembleModel model;
  std::vector<std::pair<std::string, double>> timings;
};

/// Expands a mask over the kept columns back onto all columns.
inline FeatureMask expand_mask(const FeatureMask& outer, const FeatureMask& inner) {
  const auto kept = outer.indices();
  if (inner.size() != kept.size()) throw Error(ErrorKind::shape, "inner mask does not match the outer selection");
  std::vector<std::uint8_t> bits(outer.size(), 0);
  for (std::size_t i = 0; i < kept.size(); ++i) bits[kept[i]] = inner.test(i) ? 1 : 0;
  return FeatureMask(std::move(bits));
}

/// preprocess -> prefilter (optional) -> select -> tune (optional) -> train.
/// `train_raw` must already have had sparse rows removed.
inline TrainedPipeline train_pipeline(const FlowDataset& train_raw, const PipelineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TrainedPipeline out;
  detail::PhaseTimer timer(out.timings);

  auto prepared = timer.run("preprocess", [&] { return prepare_training(train_raw, cfg.preprocess, derive_seed(seed, {0x9E})); });
  out.preprocessor = prepared.state;
  out.preprocess_report = prepared.report;
  out.train = std::move(prepared.dataset);
  const std::size_t d = out.train.n_features();

  out.prefilter_mask = timer.run("prefilter", [&] {
    if (!cfg.enable_prefilter) return FeatureMask::all(d);
    const auto scores = score_features(out.train, cfg.madks, cfg.threads);
    return prefilter(scores, cfg.keep_top ? std::min(*cfg.keep_top, d) : d);
  });

  const FeatureMask mask = timer.run("select", [&] {
    GaParams ga = cfg.ga;
    ga.threads = cfg.threads;
    if (out.prefilter_mask.count() < 2) {
      out.selection.mask = out.prefilter_mask;
      return out.prefilter_mask;
    }
    const auto restricted = out.train.select_features(out.prefilter_mask);
    out.selection = select_features(restricted, ga, cfg.eagle, derive_seed(seed, {0x6A}));
    return expand_mask(out.prefilter_mask, out.selection.mask);
  });

  Hyperparameters hp = cfg.hp;
  timer.run("tune", [&] {
    if (!cfg.enable_tuner) return;
    ParamSpace space = cfg.space;
    space.base = cfg.hp;
    SaParams sa = cfg.sa;
    sa.threads = cfg.threads;
    out.tuning = tune(out.train, mask, space, sa, derive_seed(seed, {0x5A}));
    hp = out.tuning->best;
  });

  out.model = timer.run("train", [&] { return fit_ensemble(out.train, mask, hp, derive_seed(seed, {0x7A}), cfg.threads); });
  return out;
}

inline MetricsReport evaluate_predictions(const std::vector<int>& predictions, std::span<const std::uint8_t> truth) {
  return compute_metrics(confusion(std::span<const int>(predictions), truth));
}

/// Base-model outputs for every row, computed once and shared by both voting modes.
inline std::vector<BasePredictions> base_predictions(const EnsembleModel& model, const FlowDataset& prepared) {
  const Matrix x = prepared.to_matrix();
  std::vector<BasePredictions> out;
  out.reserve(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out.push_back(base_predictions(model.dt, model.rf, model.gbt, x.row(r)));
  return out;
}

inline std::vector<int> vote_all(std::span<const BasePredictions> bases, Voting voting) {
  std::vector<int> labels;
  labels.reserve(bases.size());
  for (const auto& b : bases) labels.push_back(combine(b, voting).label);
  return labels;
}

inline MetricsReport evaluate(const EnsembleModel& model, const FlowDataset& prepared, Voting voting) {
  return evaluate_predictions(vote_all(base_predictions(model, prepared), voting), prepared.labels());
}

/// 64-bit FNV-1a over the serialized model.
inline std::uint64_t model_fingerprint(const EnsembleModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json(model).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

// ---------------------------------------------------------------------------
// Full run

struct RunReport {
  nlohmann::json config;
  std::uint64_t seed = 0;
  Provenance dataset;
  PreprocessReport preprocess;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  std::vector<std::string> feature_names;
  FeatureMask prefilter_mask = FeatureMask::all(1);
  SelectionResult selection;
  FeatureMask mask = FeatureMask::all(1);
  std::optional<TuningResult> tuning;
  Hyperparameters hyperparameters;
  MetricsReport hard;
  MetricsReport soft;
  std::uint64_t model_fingerprint = 0;
  std::vector<std::pair<std::string, double>> timings;

  const MetricsReport& selected() const { return hyperparameters.voting == Voting::hard ? hard : soft; }
};

/// Report JSON. Everything except the "timings" block is a pure function of
/// (dataset, config, seed).
inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json timings = nlohmann::json::object();
  double total = 0.0;
  for (const auto& [phase, secs] : r.timings) {
    timings[phase] = secs;
    total += secs;
  }
  timings["total"] = total;
  std::vector<std::string> selected_names;
  for (std::size_t j : r.mask.indices()) selected_names.push_back(r.feature_names.at(j));
  return {{"config", r.config},
          {"seed", r.seed},
          {"dataset",
           {{"source", r.dataset.source},
            {"rows", r.dataset.n_rows},
            {"normal", r.dataset.n_normal},
            {"attack", r.dataset.n_attack}}},
          {"preprocess", to_json(r.preprocess)},
          {"split", {{"train_rows", r.train_rows}, {"test_rows", r.test_rows}}},
          {"features", r.feature_names},
          {"prefilter_mask", r.prefilter_mask.to_string()},
          {"selection", to_json(r.selection)},
          {"mask", r.mask.to_string()},
          {"selected_features", selected_names},
          {"tuning", r.tuning ? to_json(*r.tuning) : nlohmann::json(nullptr)},
          {"hyperparameters", to_json(r.hyperparameters)},
          {"metrics",
           {{"voting", std::string(to_string(r.hyperparameters.voting))},
            {"selected", to_json(r.selected())},
            {"hard", to_json(r.hard)},
            {"soft", to_json(r.soft)}}},
          {"model_fingerprint", hex64(r.model_fingerprint)},
          {"timings", timings}};
}

struct PipelineRun {
  RunReport report;
  TrainedPipeline trained;
  FlowDataset test;
};

/// Drops sparse rows, splits train/test, trains and evaluates both voting modes
/// on the held-out split from one trained ensemble.
inline PipelineRun run_pipeline_full(const FlowDataset& ds, const PipelineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<std::pair<std::string, double>> timings;
  detail::PhaseTimer timer(timings);
  RunReport report;
  report.config = to_json(cfg);
  report.seed = seed;
  report.dataset = ds.provenance();

  auto [train_raw, test_raw, dropped] = timer.run("split", [&] {
    auto kept = drop_sparse_rows(ds, cfg.preprocess.max_missing_fraction);
    auto [tr, te] = split_train_test(kept.dataset, cfg.train_fraction, derive_seed(seed, {0x5B}));
    return std::tuple{std::move(tr), std::move(te), kept.report.rows_dropped};
  });
  report.train_rows = train_raw.n_rows();
  report.test_rows = test_raw.n_rows();

  TrainedPipeline trained = train_pipeline(train_raw, cfg, seed);
  timings.insert(timings.end(), trained.timings.begin(), trained.timings.end());
  report.preprocess = trained.preprocess_report;
  report.preprocess.rows_dropped += dropped;

  auto test = timer.run("evaluate", [&] {
    auto prepared = prepare_evaluation(test_raw, trained.preprocessor);
    report.preprocess.unseen_categories += prepared.report.unseen_categories;
    const auto bases = base_predictions(trained.model, prepared.dataset);
    report.hard = evaluate_predictions(vote_all(bases, Voting::hard), prepared.dataset.labels());
    report.soft = evaluate_predictions(vote_all(bases, Voting::soft), prepared.dataset.labels());
    return std::move(prepared.dataset);
  });

  report.feature_names = trained.train.feature_names();
  report.prefilter_mask = trained.prefilter_mask;
  report.selection = trained.selection;
  report.mask = trained.model.mask;
  report.tuning = trained.tuning;
  report.hyperparameters = trained.model.hp;
  report.model_fingerprint = model_fingerprint(trained.model);
  report.timings = std::move(timings);
  return {std::move(report), std::move(trained), std::move(test)};
}

inline RunReport run_pipeline(const FlowDataset& ds, const PipelineConfig& cfg, std::uint64_t seed) {
  return run_pipeline_full(ds, cfg, seed).report;
}

/// Model document for persistence: ensemble plus the preprocessing state
/// needed to transform raw rows.
inline nlohmann::json model_document(const EnsembleModel& model, const FittedPreprocessor& pre) {
  auto j = to_json(model);
  j["preprocessor"] = {{"imputer", to_json(pre.imputer)}, {"encoder", to_json(pre.encoder)}};
  return j;
}

inline std::pair<EnsembleModel, FittedPreprocessor> model_from_document(const nlohmann::json& j) {
  auto model = ensemble_from_json(j);
  if (!j.contains("preprocessor")) throw Error(ErrorKind::schema, "model document lacks preprocessing state");
  const auto& p = j.at("preprocessor");
  return {std::move(model), FittedPreprocessor{imputer_from_json(p.at("imputer")), encoder_from_json(p.at("encoder"))}};
}

// ---------------------------------------------------------------------------
// Voting comparison

struct VotingComparison {
  MetricsReport hard;
  MetricsReport soft;
  std::uint64_t fingerprint_hard = 0;
  std::uint64_t fingerprint_soft = 0;
};

/// Trains once, then scores the identical bases under both voting modes.
inline VotingComparison compare_voting(const EnsembleModel& model, const FlowDataset& prepared_test) {
  VotingComparison out;
  const auto bases = base_predictions(model, prepared_test);
  out.fingerprint_hard = model_fingerprint(model);
  out.hard = evaluate_predictions(vote_all(bases, Voting::hard), prepared_test.labels());
  out.fingerprint_soft = model_fingerprint(model);
  out.soft = evaluate_predictions(vote_all(bases, Voting::soft), prepared_test.labels());
  return out;
}

inline VotingComparison compare_voting(const FlowDataset& ds, const PipelineConfig& cfg, std::uint64_t seed) {
  const auto run = run_pipeline_full(ds, cfg, seed);
  return compare_voting(run.trained.model, run.test);
}

/// method,accuracy,detection_rate,fpr; one row per voting mode.
inline std::string voting_table_csv(const VotingComparison& c) {
  std::string out = "method,accuracy,detection_rate,fpr\n";
  for (const auto& [name, r] : {std::pair<std::string, const MetricsReport&>{"Hard Voting", c.hard},
                                std::pair<std::string, const MetricsReport&>{"Soft Voting", c.soft}})
    out += name + "," + metric_cell(r.accuracy) + "," + metric_cell(r.detection_rate) + "," + metric_cell(r.fpr) + "\n";
  return out;
}

inline nlohmann::json to_json(const VotingComparison& c) {
  return {{"hard", to_json(c.hard)},
          {"soft", to_json(c.soft)},
          {"fingerprint_hard", hex64(c.fingerprint_hard)},
          {"fingerprint_soft", hex64(c.fingerprint_soft)}};
}

// ---------------------------------------------------------------------------
// Cross-validation

inline CvSummary cross_validate(const FlowDataset& ds, std::size_t k, const PipelineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto kept = drop_sparse_rows(ds, cfg.preprocess.max_missing_fraction).dataset;
  return kfold_cv(kept, k, derive_seed(seed, {0xC7}), [&](const FlowDataset& train, const FlowDataset& test, std::size_t f) {
    const auto trained = train_pipeline(train, cfg, derive_seed(seed, {0xC7, f}));
    const auto prepared = prepare_evaluation(test, trained.preprocessor);
    return evaluate(trained.model, prepared.dataset, trained.model.hp.voting);
  });
}

// ---------------------------------------------------------------------------
// Detection-rate sweep

/// Marks a fraction of test rows as at-risk devices: each chosen row is pulled
/// toward the training attack centroid, x + u (mu_attack - x) with u uniform in
/// [0.5, 1], and relabeled as attack.
inline FlowDataset inject_at_risk(const FlowDataset& test, const FlowDataset& train, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error(ErrorKind::parameter, "at-risk fraction must lie in [0, 1]");
  if (train.n_features() != test.n_features()) throw Error(ErrorKind::shape, "train and test widths differ");
  const std::size_t d = train.n_features();
  std::vector<double> centroid(d, 0.0);
  std::size_t n_attack = 0;
  for (std::size_t r = 0; r < train.n_rows(); ++r) {
    if (train.label(r) != kAttack) continue;
    ++n_attack;
    for (std::size_t j = 0; j < d; ++j) centroid[j] += *train.cell(r, j);
  }
  if (n_attack == 0) throw Error(ErrorKind::insufficient_data, "training data has no attack rows");
  for (double& c : centroid) c /= static_cast<double>(n_attack);

  Rng rng(seed);
  std::vector<std::size_t> rows(test.n_rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  rng.shuffle(rows);
  const auto n_pick = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rows.size())));
  auto cells = test.cells();
  auto labels = test.labels();
  for (std::size_t i = 0; i < n_pick; ++i) {
    const std::size_t r = rows[i];
    const double u = rng.uniform(0.5, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
      auto& cell = cells[r * d + j];
      cell = *cell + u * (centroid[j] - *cell);
    }
    labels[r] = kAttack;
  }
  return FlowDataset(test.columns(), std::move(cells), std::move(labels), test.provenance().source + "+at-risk");
}

struct SweepCell {
  double eta = 0.0;
  double at_risk_fraction = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> detection_rate;
  std::string error;
};

inline std::uint64_t ratio_tag(double v) { return std::bit_cast<std::uint64_t>(v); }

/// Detection rate over the eta x at-risk grid, for every seed. Training data is
/// resampled to each eta (SMOTE balancing off, since it would undo the ratio);
/// the test split is never resampled. Each cell depends only on (seed, eta,
/// fraction), so cell order does not matter.
inline std::vector<SweepCell> sweep_detection_rate(const FlowDataset& ds, const ExperimentConfig& exp) {
  exp.validate();
  std::vector<SweepCell> cells;
  for (std::uint64_t seed : exp.seeds) {
    std::optional<FlowDataset> train_raw, test_raw;
    std::string split_error;
    try {
      const auto kept = drop_sparse_rows(ds, exp.pipeline.preprocess.max_missing_fraction).dataset;
      auto [tr, te] = split_train_test(kept, exp.pipeline.train_fraction, derive_seed(seed, {0x5B}));
      train_raw = std::move(tr);
      test_raw = std::move(te);
    } catch (const Error& e) {
      split_error = e.what();
    }
    for (double eta : exp.eta_values) {
      std::optional<TrainedPipeline> trained;
      std::optional<FlowDataset> prepared;
      std::string error = split_error;
      if (error.empty()) {
        try {
          PipelineConfig cfg = exp.pipeline;
          cfg.preprocess.eta = eta;
          cfg.preprocess.smote = false;
          trained = train_pipeline(*train_raw, cfg, derive_seed(seed, {0x57E, ratio_tag(eta)}));
          prepared = prepare_evaluation(*test_raw, trained->preprocessor).dataset;
        } catch (const Error& e) {
          error = e.what();
        }
      }
      for (double fraction : exp.at_risk_fractions) {
        SweepCell cell{eta, fraction, seed, std::nullopt, error};
        if (error.empty()) {
          try {
            const auto injected = inject_at_risk(*prepared, trained->train, fraction,
                                                 derive_seed(seed, {0x1A7, ratio_tag(eta), ratio_tag(fraction)}));
            cell.detection_rate = evaluate(trained->model, injected, trained->model.hp.voting).detection_rate;
          } catch (const Error& e) {
            cell.error = e.what();
          }
        }
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

inline std::string sweep_csv(std::span<const SweepCell> cells) {
  std::string out = "eta,at_risk_fraction,seed,detection_rate\n";
  for (const auto& c : cells)
    out += csv::format_number(c.eta) + "," + csv::format_number(c.at_risk_fraction) + "," + std::to_string(c.seed) + "," +
           (c.detection_rate ? csv::format_fixed(*c.detection_rate, 6) : std::string("failed")) + "\n";
  return out;
}

inline nlohmann::json to_json(std::span<const SweepCell> cells) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cells)
    arr.push_back({{"eta", c.eta},
                   {"at_risk_fraction", c.at_risk_fraction},
                   {"seed", c.seed},
                   {"detection_rate", c.detection_rate ? nlohmann::json(*c.detection_rate) : nlohmann::json(nullptr)},
                   {"error", c.error.empty() ? nlohmann::json(nullptr) : nlohmann::json(c.error)}});
  return arr;
}

/// Mean detection rate per eta over all fractions and seeds (failed cells skipped).
inline std::vector<std::pair<double, double>> mean_detection_by_eta(std::span<const SweepCell> cells) {
  std::vector<std::pair<double, double>> out;
  std::vector<std::size_t> counts;
  for (const auto& c : cells) {
    if (!c.detection_rate) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == c.eta; });
    if (it == out.end()) {
      out.emplace_back(c.eta, 0.0);
      counts.push_back(0);
      it = out.end() - 1;
    }
    it->second += *c.detection_rate;
    ++counts[static_cast<std::size_t>(it - out.begin())];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].second /= static_cast<double>(counts[i]);
  return out;
}

}  // namespace iotguard
