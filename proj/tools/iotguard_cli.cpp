// iotguard command-line driver.

#include <openssl/evp.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "iotguard/iotguard.hpp"

namespace fs = std::filesystem;
using namespace iotguard;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

/// Collects every file written under --out and emits manifest.json last.
class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {}

  void write(const std::string& name, const std::string& content) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw Error(ErrorKind::io, "cannot create output directory '" + root_.string() + "'");
    const auto path = root_ / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw Error(ErrorKind::io, "write failed for '" + path.string() + "'");
    files_.push_back({{"path", name}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
  }

  void write_json(const std::string& name, const nlohmann::json& j) { write(name, j.dump(2) + "\n"); }

  void finish(const std::string& command, const std::vector<std::string>& argv, std::uint64_t seed,
              const std::string& seed_source) {
    nlohmann::json manifest{{"tool", "iotguard"},
                            {"command", command},
                            {"argv", argv},
                            {"seed", seed},
                            {"seed_source", seed_source},
                            {"files", files_}};
    std::error_code ec;
    fs::create_directories(root_, ec);
    std::ofstream out(root_ / "manifest.json", std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write manifest");
    out << manifest.dump(2) << "\n";
  }

 private:
  fs::path root_;
  std::vector<nlohmann::json> files_;
};

struct Options {
  std::string input;
  std::string config;
  std::string model;
  std::string mask;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> eta;
  std::size_t folds = 5;
  std::optional<double> train_fraction;
  std::optional<unsigned> threads;
  std::optional<std::size_t> keep_top;
  std::optional<std::string> voting;
  bool no_prefilter = false;
  bool tune = false;
  std::size_t n_seeds = 3;
  std::size_t rows_normal = 1620;
  std::size_t rows_attack = 380;
  std::size_t informative = 5;
  std::size_t noise = 14;
};

FlowDataset load_input(const Options& o, const CliConfig& cfg) {
  if (o.input.empty()) throw UsageError("--input is required");
  return load_csv(o.input, cfg.schema);
}

/// Raw rows made model-ready without resampling: sparse rows dropped, imputed, encoded.
std::pair<FlowDataset, PreprocessReport> model_ready(const FlowDataset& raw, const CliConfig& cfg) {
  PreprocessOptions opts = cfg.pipeline().preprocess;
  opts.smote = false;
  opts.eta.reset();
  auto kept = drop_sparse_rows(raw, opts.max_missing_fraction);
  auto prepared = prepare_training(kept.dataset, opts, 0);
  prepared.report.rows_dropped += kept.report.rows_dropped;
  return {std::move(prepared.dataset), prepared.report};
}

FeatureMask parse_mask(const std::string& bits, std::size_t n) {
  if (bits.empty()) return FeatureMask::all(n);
  std::vector<std::uint8_t> v;
  for (char c : bits) {
    if (c != '0' && c != '1') throw UsageError("--mask must be a string of 0 and 1");
    v.push_back(c == '1');
  }
  if (v.size() != n)
    throw Error(ErrorKind::shape, "--mask has " + std::to_string(v.size()) + " bits, data has " + std::to_string(n) + " features");
  return FeatureMask(std::move(v));
}

int dispatch(const std::string& command, const Options& o, CliConfig cfg, std::uint64_t seed, OutputDir& out) {
  auto& p = cfg.pipeline();

  if (command == "synth") {
    const auto ds = synth_generate(o.rows_normal, o.rows_attack, o.informative, o.noise, seed);
    out.write("dataset.csv", to_csv(ds));
    out.write_json("schema.json", to_json(schema_for(ds)));
    return kExitOk;
  }

  if (command == "preprocess") {
    const auto raw = load_input(o, cfg);
    const auto kept = drop_sparse_rows(raw, p.preprocess.max_missing_fraction);
    auto prepared = prepare_training(kept.dataset, p.preprocess, seed);
    prepared.report.rows_dropped += kept.report.rows_dropped;
    out.write("preprocessed.csv", to_csv(prepared.dataset));
    out.write_json("preprocess_report.json", to_json(prepared.report));
    out.write_json("preprocessor.json",
                   {{"imputer", to_json(prepared.state.imputer)}, {"encoder", to_json(prepared.state.encoder)}});
    return kExitOk;
  }

  if (command == "score") {
    const auto [ds, report] = model_ready(load_input(o, cfg), cfg);
    const auto scores = score_features(ds, p.madks, p.threads);
    std::string table = "rank,column,score\n";
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const auto& name = ds.feature(scores[i].column_index).name;
      table += std::to_string(i + 1) + "," + csv::escape(name) + "," + csv::format_number(scores[i].score) + "\n";
      arr.push_back({{"column", name}, {"score", scores[i].score}});
    }
    nlohmann::json j{{"scores", arr}};
    if (p.keep_top) j["prefilter_mask"] = prefilter(scores, std::min(*p.keep_top, scores.size())).to_string();
    out.write("feature_scores.csv", table);
    out.write_json("feature_scores.json", j);
    return kExitOk;
  }

  if (command == "select") {
    const auto raw = load_input(o, cfg);
    const auto kept = drop_sparse_rows(raw, p.preprocess.max_missing_fraction);
    auto prepared = prepare_training(kept.dataset, p.preprocess, derive_seed(seed, {0x9E}));
    FeatureMask outer = FeatureMask::all(prepared.dataset.n_features());
    if (p.enable_prefilter && p.keep_top)
      outer = prefilter(score_features(prepared.dataset, p.madks, p.threads),
                        std::min(*p.keep_top, prepared.dataset.n_features()));
    GaParams ga = p.ga;
    ga.threads = p.threads;
    const auto result = select_features(prepared.dataset.select_features(outer), ga, p.eagle, derive_seed(seed, {0x6A}));
    const auto mask = expand_mask(outer, result.mask);
    auto j = to_json(result);
    j["mask"] = mask.to_string();
    j["selected_indices"] = mask.indices();
    std::vector<std::string> names;
    for (std::size_t i : mask.indices()) names.push_back(prepared.dataset.feature(i).name);
    j["selected_features"] = names;
    out.write_json("selection.json", j);
    out.write("selection_history.csv", history_csv(result));
    return kExitOk;
  }

  if (command == "tune") {
    const auto raw = load_input(o, cfg);
    const auto kept = drop_sparse_rows(raw, p.preprocess.max_missing_fraction);
    auto prepared = prepare_training(kept.dataset, p.preprocess, derive_seed(seed, {0x9E}));
    const auto mask = parse_mask(o.mask, prepared.dataset.n_features());
    ParamSpace space = p.space;
    space.base = p.hp;
    SaParams sa = p.sa;
    sa.threads = p.threads;
    const auto result = tune(prepared.dataset, mask, space, sa, derive_seed(seed, {0x5A}));
    out.write_json("tuning.json", to_json(result));
    out.write("tuning_trace.csv", trace_csv(result));
    return kExitOk;
  }

  if (command == "train") {
    const auto raw = load_input(o, cfg);
    const auto kept = drop_sparse_rows(raw, p.preprocess.max_missing_fraction);
    const auto trained = train_pipeline(kept.dataset, p, seed);
    out.write_json("model.json", model_document(trained.model, trained.preprocessor));
    out.write_json("training.json", {{"mask", trained.model.mask.to_string()},
                                     {"selection", to_json(trained.selection)},
                                     {"tuning", trained.tuning ? to_json(*trained.tuning) : nlohmann::json(nullptr)},
                                     {"hyperparameters", to_json(trained.model.hp)},
                                     {"preprocess", to_json(trained.preprocess_report)}});
    return kExitOk;
  }

  if (command == "evaluate") {
    if (o.model.empty()) throw UsageError("--model is required");
    std::ifstream in(o.model);
    if (!in) throw Error(ErrorKind::io, "cannot open model '" + o.model + "'");
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::schema, std::string("model is not valid JSON: ") + e.what());
    }
    const auto [model, pre] = model_from_document(doc);
    const auto raw = load_input(o, cfg);
    const auto kept = drop_sparse_rows(raw, p.preprocess.max_missing_fraction);
    const auto prepared = prepare_evaluation(kept.dataset, pre);
    if (prepared.dataset.feature_names() != model.feature_names)
      throw Error(ErrorKind::schema, "input columns do not match the model's features");
    const Voting voting = o.voting ? voting_from_string(*o.voting) : model.hp.voting;
    const auto report = evaluate(model, prepared.dataset, voting);
    out.write_json("metrics.json", {{"voting", std::string(to_string(voting))}, {"metrics", to_json(report)}});
    return kExitOk;
  }

  if (command == "run") {
    const auto raw = load_input(o, cfg);
    const auto run = run_pipeline_full(raw, p, seed);
    out.write_json("run_report.json", to_json(run.report));
    out.write("selection_history.csv", history_csv(run.report.selection));
    if (run.report.tuning) out.write("tuning_trace.csv", trace_csv(*run.report.tuning));
    out.write_json("model.json", model_document(run.trained.model, run.trained.preprocessor));
    return kExitOk;
  }

  if (command == "sweep") {
    const auto raw = load_input(o, cfg);
    ExperimentConfig exp = cfg.experiment;
    if (o.eta) exp.eta_values = {*o.eta};
    if (o.seed || exp.seeds.empty()) {
      exp.seeds.clear();
      for (std::size_t i = 0; i < o.n_seeds; ++i) exp.seeds.push_back(seed + i);
    }
    const auto cells = sweep_detection_rate(raw, exp);
    out.write("sweep.csv", sweep_csv(cells));
    nlohmann::json means = nlohmann::json::array();
    for (const auto& [eta, dr] : mean_detection_by_eta(cells)) means.push_back({{"eta", eta}, {"mean_detection_rate", dr}});
    out.write_json("sweep.json", {{"experiment", to_json(exp)}, {"cells", to_json(cells)}, {"mean_by_eta", means}});
    return kExitOk;
  }

  if (command == "compare-voting") {
    const auto raw = load_input(o, cfg);
    const auto cmp = compare_voting(raw, p, seed);
    out.write("voting.csv", voting_table_csv(cmp));
    out.write_json("voting.json", to_json(cmp));
    return kExitOk;
  }

  if (command == "cv") {
    const auto raw = load_input(o, cfg);
    if (o.folds < 2) throw UsageError("--folds must be at least 2");
    const auto summary = cross_validate(raw, o.folds, p, seed);
    out.write("cv.csv", cv_table_csv(summary));
    out.write_json("cv.json", to_json(summary));
    return kExitOk;
  }

  throw UsageError("unknown subcommand '" + command + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iotguard: botnet flow detection toolkit"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool needs_input) {
    if (needs_input) sub->add_option("--input", o.input, "Flow CSV file")->check(CLI::ExistingFile);
    sub->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Random seed (random and recorded when omitted)");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--threads", o.threads, "Worker thread cap")->check(CLI::PositiveNumber);
  };
  auto pipeline_flags = [&](CLI::App* sub) {
    sub->add_option("--eta", o.eta, "Training attack ratio (disables SMOTE balancing)")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--train-fraction", o.train_fraction, "Training share of the split")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--keep-top", o.keep_top, "Columns kept by the MAD-KS prefilter")->check(CLI::PositiveNumber);
    sub->add_flag("--no-prefilter", o.no_prefilter, "Skip the MAD-KS prefilter");
    sub->add_flag("--tune", o.tune, "Enable hyperparameter tuning");
    sub->add_option("--voting", o.voting, "Voting mode")->check(CLI::IsMember({"hard", "soft"}));
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic flow dataset");
  common(synth, false);
  synth->add_option("--rows-normal", o.rows_normal, "Normal rows");
  synth->add_option("--rows-attack", o.rows_attack, "Attack rows");
  synth->add_option("--informative", o.informative, "Informative numeric columns");
  synth->add_option("--noise", o.noise, "Noise numeric columns");

  for (auto [name, help] : std::vector<std::pair<const char*, const char*>>{
           {"preprocess", "Impute, encode and balance a dataset"},
           {"score", "MAD-KS feature scores"},
           {"select", "GA feature selection"},
           {"tune", "Swarm-guided annealing of ensemble hyperparameters"},
           {"train", "Train the ensemble and save a model"},
           {"evaluate", "Evaluate a saved model"},
           {"run", "Full pipeline with held-out evaluation"},
           {"sweep", "Detection rate over attack ratio and at-risk fraction"},
           {"compare-voting", "Hard versus soft voting on one trained ensemble"},
           {"cv", "Stratified k-fold cross-validation"}}) {
    auto* sub = app.add_subcommand(name, help);
    common(sub, true);
    pipeline_flags(sub);
    if (std::string(name) == "evaluate") sub->add_option("--model", o.model, "Model JSON")->check(CLI::ExistingFile);
    if (std::string(name) == "tune") sub->add_option("--mask", o.mask, "Feature mask bit string");
    if (std::string(name) == "cv") sub->add_option("--folds", o.folds, "Fold count");
    if (std::string(name) == "sweep") sub->add_option("--n-seeds", o.n_seeds, "Seeds derived from --seed");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    CliConfig cfg;
    if (!o.config.empty()) cfg = load_config(o.config);
    auto& p = cfg.pipeline();
    if (!o.out.empty()) cfg.out_dir = o.out;
    if (o.threads) p.threads = *o.threads;
    if (o.train_fraction) p.train_fraction = *o.train_fraction;
    if (o.keep_top) p.keep_top = *o.keep_top;
    if (o.no_prefilter) p.enable_prefilter = false;
    if (o.tune) p.enable_tuner = true;
    if (o.voting) p.hp.voting = voting_from_string(*o.voting);
    if (o.eta) {
      p.preprocess.eta = *o.eta;
      p.preprocess.smote = false;
    }

    std::string seed_source = "flag";
    std::uint64_t seed = 0;
    if (o.seed) {
      seed = *o.seed;
    } else if (cfg.seed) {
      seed = *cfg.seed;
      seed_source = "config";
    } else {
      std::random_device rd;
      seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
      seed_source = "random";
    }

    OutputDir out(cfg.out_dir);
    const int code = dispatch(command, o, cfg, seed, out);
    out.finish(command, args, seed, seed_source);
    return code;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.get_subcommands().front()->help();
    return kExitUsage;
  } catch (const PhaseError& e) {
    std::cerr << "error [" << to_string(e.kind()) << "] in phase '" << e.phase() << "': " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
