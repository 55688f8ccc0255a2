#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

#include "json.hpp"

#include "iotguard/error.hpp"
#include "iotguard/flowdata.hpp"
#include "iotguard/harness.hpp"

namespace iotguard {

inline constexpr int kConfigVersion = 1;

/// Merged run configuration. Precedence: command-line flags, then the config
/// file, then these defaults.
struct CliConfig {
  SchemaMapping schema;
  ExperimentConfig experiment;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "results";

  PipelineConfig& pipeline() { return experiment.pipeline; }
  const PipelineConfig& pipeline() const { return experiment.pipeline; }
};

namespace detail {

template <class Fn>
void for_keys(const nlohmann::json& j, const std::string& section, Fn&& fn) {
  if (!j.is_object()) throw Error(ErrorKind::config, "'" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (!fn(key, value)) throw Error(ErrorKind::config, "unknown key '" + key + "' in '" + section + "'");
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::config, "bad value for '" + section + "." + key + "': " + e.what());
    }
  }
}

}  // namespace detail

inline PreprocessOptions preprocess_from_json(const nlohmann::json& j, PreprocessOptions o) {
  detail::for_keys(j, "preprocess", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "max_missing_fraction") o.max_missing_fraction = v.get<double>();
    else if (k == "smote") o.smote = v.get<bool>();
    else if (k == "smote_k") o.smote_k = v.get<std::size_t>();
    else if (k == "eta") o.eta = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    else if (k == "resample_before_smote") o.resample_before_smote = v.get<bool>();
    else return false;
    return true;
  });
  return o;
}

inline MadKsConfig madks_from_json(const nlohmann::json& j, MadKsConfig m) {
  detail::for_keys(j, "madks", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "lambda") m.lambda = v.get<double>();
    else if (k == "min_samples_per_class") m.min_samples_per_class = v.get<std::size_t>();
    else return false;
    return true;
  });
  return m;
}

inline GaParams ga_from_json(const nlohmann::json& j, GaParams g) {
  detail::for_keys(j, "ga", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "population_size") g.population_size = v.get<std::size_t>();
    else if (k == "generations") g.generations = v.get<std::size_t>();
    else if (k == "tournament_k") g.tournament_k = v.get<std::size_t>();
    else if (k == "crossover_rate") g.crossover_rate = v.get<double>();
    else if (k == "mutation_rate") g.mutation_rate = v.get<double>();
    else if (k == "elitism") g.elitism = v.get<std::size_t>();
    else if (k == "eagle_fraction") g.eagle_fraction = v.get<double>();
    else if (k == "w1") g.w1 = v.get<double>();
    else if (k == "w2") g.w2 = v.get<double>();
    else if (k == "proxy_max_depth") g.proxy_max_depth = v.get<int>();
    else if (k == "proxy_folds") g.proxy_folds = v.get<std::size_t>();
    else return false;
    return true;
  });
  return g;
}

inline EagleParams eagle_from_json(const nlohmann::json& j, EagleParams e) {
  detail::for_keys(j, "eagle", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "eta_sel") e.eta_sel = v.get<double>();
    else if (k == "omega") e.omega = v.get<double>();
    else if (k == "phi") e.phi = v.get<double>();
    else if (k == "c1") e.c1 = v.get<double>();
    else if (k == "c2") e.c2 = v.get<double>();
    else return false;
    return true;
  });
  return e;
}

inline SaParams sa_from_json(const nlohmann::json& j, SaParams s) {
  detail::for_keys(j, "sa", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "n_agents") s.n_agents = v.get<std::size_t>();
    else if (k == "iterations") s.iterations = v.get<std::size_t>();
    else if (k == "t0") s.t0 = v.get<double>();
    else if (k == "cooling_alpha") s.cooling_alpha = v.get<double>();
    else if (k == "radius_start") s.radius_start = v.get<double>();
    else if (k == "radius_end") s.radius_end = v.get<double>();
    else return false;
    return true;
  });
  return s;
}

inline PipelineConfig pipeline_from_json(const nlohmann::json& j, PipelineConfig c) {
  detail::for_keys(j, "pipeline", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "train_fraction") c.train_fraction = v.get<double>();
    else if (k == "enable_prefilter") c.enable_prefilter = v.get<bool>();
    else if (k == "keep_top") c.keep_top = v.is_null() ? std::nullopt : std::optional<std::size_t>(v.get<std::size_t>());
    else if (k == "enable_tuner") c.enable_tuner = v.get<bool>();
    else if (k == "threads") c.threads = v.get<unsigned>();
    else return false;
    return true;
  });
  return c;
}

/// Parses a configuration document. Unknown keys anywhere are errors.
inline CliConfig config_from_json(const nlohmann::json& j, CliConfig c = {}) {
  if (!j.is_object()) throw Error(ErrorKind::config, "configuration must be a JSON object");
  if (!j.contains("version")) throw Error(ErrorKind::config, "configuration lacks a 'version' field");
  if (!j.at("version").is_number_integer() || j.at("version").get<int>() != kConfigVersion)
    throw Error(ErrorKind::config, "unsupported configuration version (expected " + std::to_string(kConfigVersion) + ")");
  auto& p = c.pipeline();
  detail::for_keys(j, "config", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "version") return true;
    if (k == "schema") c.schema = schema_from_json(v);
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else if (k == "out") c.out_dir = v.get<std::string>();
    else if (k == "preprocess") p.preprocess = preprocess_from_json(v, p.preprocess);
    else if (k == "pipeline") p = pipeline_from_json(v, p);
    else if (k == "madks") p.madks = madks_from_json(v, p.madks);
    else if (k == "ga") p.ga = ga_from_json(v, p.ga);
    else if (k == "eagle") p.eagle = eagle_from_json(v, p.eagle);
    else if (k == "sa") p.sa = sa_from_json(v, p.sa);
    else if (k == "space") p.space = param_space_from_json(v, p.space);
    else if (k == "hyperparameters") p.hp = hyperparameters_from_json(v, p.hp);
    else if (k == "experiment") {
      detail::for_keys(v, "experiment", [&](const std::string& ek, const nlohmann::json& ev) {
        if (ek == "eta_values") c.experiment.eta_values = ev.get<std::vector<double>>();
        else if (ek == "at_risk_fractions") c.experiment.at_risk_fractions = ev.get<std::vector<double>>();
        else if (ek == "seeds") c.experiment.seeds = ev.get<std::vector<std::uint64_t>>();
        else return false;
        return true;
      });
    } else {
      return false;
    }
    return true;
  });
  return c;
}

inline CliConfig load_config(const std::string& path, CliConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::config, "config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j, std::move(base));
}

}  // namespace iotguard
