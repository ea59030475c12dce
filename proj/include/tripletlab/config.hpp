#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tripletlab/experiment.hpp"
#include "tripletlab/trainer.hpp"

namespace tripletlab {

using Json = nlohmann::ordered_json;

/// Comparison sweep run by `bench`: one finetune per (seed, cell).
struct BenchConfig {
  std::string sweep = "strategies";  // strategies | pk | methods
  std::vector<Strategy> strategies = {Strategy::All, Strategy::Random, Strategy::MinMin, Strategy::MinMax,
                                      Strategy::Hardest};
  std::vector<std::pair<int, int>> pk = {{12, 2}, {8, 3}, {4, 6}, {2, 12}};
  std::vector<MiningMethod> methods = {MiningMethod::Online, MiningMethod::SemiOnline};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
};

/// Declarative description of one run: data source, evaluation protocol,
/// training parameters and output location.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  // Dataset: a CSV file when `dataset_csv` is set, otherwise `synthetic`, whose
  // seed is derived from `seed`.
  std::string dataset_csv;
  SyntheticSpec synthetic = {};
  int train_identities = 20;

  // Protocol: a CSV file over held-out sample ids when set, otherwise generated.
  std::string protocol_csv;
  int pairs_per_class = 600;
  int folds = 10;

  // Softmax pretraining budget; used by `pretrain` and by `bench` before each finetune.
  int pretrain_iterations = 1000;
  double pretrain_learning_rate = 0.01;

  TrainConfig train;
  BenchConfig bench;

  TrainConfig pretrain_config() const {
    TrainConfig cfg = train;
    cfg.phase = Phase::Pretrain;
    cfg.iterations = pretrain_iterations;
    cfg.learning_rate = pretrain_learning_rate;
    cfg.seed = seed;
    return cfg;
  }

  TrainConfig finetune_config() const {
    TrainConfig cfg = train;
    cfg.phase = Phase::Finetune;
    cfg.seed = seed;
    return cfg;
  }

  ExperimentSetup experiment_setup() const {
    return {synthetic, train_identities, pairs_per_class, folds};
  }

  /// Referenced input files must exist.
  void validate_paths() const {
    auto require = [](const std::string& path, const char* what) {
      if (!path.empty() && !std::filesystem::exists(path)) {
        throw ConfigError(std::string(what) + " not found: " + path);
      }
    };
    require(dataset_csv, "dataset file");
    require(protocol_csv, "protocol file");
    if (train.phase == Phase::Finetune && !train.from_scratch) require(train.init_checkpoint, "checkpoint");
  }

  void validate() const {
    train.validate();
    synthetic.validate();
    if (pretrain_iterations <= 0) throw ConfigError("pretrain_iterations must be > 0");
    if (!(pretrain_learning_rate > 0.0)) throw ConfigError("pretrain_learning_rate must be > 0");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  }
};

namespace detail {

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

template <class T>
void read_key(const Json& j, const char* key, T& value, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    value = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

}  // namespace detail

inline Json to_json(const SyntheticSpec& s) {
  return Json{{"identities", s.identities},
              {"samples_per_identity", s.samples_per_identity},
              {"dim", s.dim},
              {"latent_dim", s.latent_dim},
              {"separation", s.separation},
              {"noise", s.noise},
              {"nuisance", s.nuisance},
              {"warp", s.warp}};
}

inline SyntheticSpec synthetic_from_json(const Json& j) {
  const std::string where = "synthetic";
  detail::reject_unknown_keys(
      j, {"identities", "samples_per_identity", "dim", "latent_dim", "separation", "noise", "nuisance", "warp"},
      where);
  SyntheticSpec s;
  detail::read_key(j, "identities", s.identities, where);
  detail::read_key(j, "samples_per_identity", s.samples_per_identity, where);
  detail::read_key(j, "dim", s.dim, where);
  detail::read_key(j, "latent_dim", s.latent_dim, where);
  detail::read_key(j, "separation", s.separation, where);
  detail::read_key(j, "noise", s.noise, where);
  detail::read_key(j, "nuisance", s.nuisance, where);
  detail::read_key(j, "warp", s.warp, where);
  return s;
}

inline Json to_json(const TrainConfig& c) {
  return Json{{"phase", to_string(c.phase)},
              {"iterations", c.iterations},
              {"P", c.pk.P},
              {"K", c.pk.K},
              {"strategy", to_string(c.mining.strategy)},
              {"margin", c.mining.margin},
              {"method", to_string(c.method)},
              {"pool_window", c.pool_window},
              {"offline_refresh", c.offline_refresh},
              {"learning_rate", c.learning_rate},
              {"eval_interval", c.eval_interval},
              {"init_checkpoint", c.init_checkpoint},
              {"out_checkpoint", c.out_checkpoint},
              {"from_scratch", c.from_scratch},
              {"hidden", c.hidden},
              {"embed_dim", c.embed_dim},
              {"zero_active_warn", c.zero_active_warn}};
}

inline TrainConfig train_from_json(const Json& j) {
  const std::string where = "train";
  detail::reject_unknown_keys(j,
                              {"phase", "iterations", "P", "K", "strategy", "margin", "method", "pool_window",
                               "offline_refresh", "learning_rate", "eval_interval", "init_checkpoint",
                               "out_checkpoint", "from_scratch", "hidden", "embed_dim", "zero_active_warn"},
                              where);
  TrainConfig c;
  std::string text;
  if (j.contains("phase")) {
    detail::read_key(j, "phase", text, where);
    c.phase = parse_phase(text);
  }
  detail::read_key(j, "iterations", c.iterations, where);
  detail::read_key(j, "P", c.pk.P, where);
  detail::read_key(j, "K", c.pk.K, where);
  if (j.contains("strategy")) {
    detail::read_key(j, "strategy", text, where);
    c.mining.strategy = parse_strategy(text);
  }
  detail::read_key(j, "margin", c.mining.margin, where);
  if (j.contains("method")) {
    detail::read_key(j, "method", text, where);
    c.method = parse_method(text);
  }
  detail::read_key(j, "pool_window", c.pool_window, where);
  detail::read_key(j, "offline_refresh", c.offline_refresh, where);
  detail::read_key(j, "learning_rate", c.learning_rate, where);
  detail::read_key(j, "eval_interval", c.eval_interval, where);
  detail::read_key(j, "init_checkpoint", c.init_checkpoint, where);
  detail::read_key(j, "out_checkpoint", c.out_checkpoint, where);
  detail::read_key(j, "from_scratch", c.from_scratch, where);
  detail::read_key(j, "hidden", c.hidden, where);
  detail::read_key(j, "embed_dim", c.embed_dim, where);
  detail::read_key(j, "zero_active_warn", c.zero_active_warn, where);
  return c;
}

inline Json to_json(const BenchConfig& b) {
  Json strategies = Json::array(), methods = Json::array(), pk = Json::array();
  for (auto s : b.strategies) strategies.push_back(to_string(s));
  for (auto m : b.methods) methods.push_back(to_string(m));
  for (const auto& [p, k] : b.pk) pk.push_back(Json::array({p, k}));
  return Json{{"sweep", b.sweep}, {"strategies", strategies}, {"pk", pk}, {"methods", methods}, {"seeds", b.seeds}};
}

inline BenchConfig bench_from_json(const Json& j) {
  const std::string where = "bench";
  detail::reject_unknown_keys(j, {"sweep", "strategies", "pk", "methods", "seeds"}, where);
  BenchConfig b;
  detail::read_key(j, "sweep", b.sweep, where);
  std::vector<std::string> names;
  if (j.contains("strategies")) {
    detail::read_key(j, "strategies", names, where);
    b.strategies.clear();
    for (const auto& n : names) b.strategies.push_back(parse_strategy(n));
  }
  if (j.contains("methods")) {
    detail::read_key(j, "methods", names, where);
    b.methods.clear();
    for (const auto& n : names) b.methods.push_back(parse_method(n));
  }
  if (j.contains("pk")) {
    std::vector<std::vector<int>> pk;
    detail::read_key(j, "pk", pk, where);
    b.pk.clear();
    for (const auto& combo : pk) {
      if (combo.size() != 2) throw ConfigError("bench.pk: each entry must be [P, K]");
      b.pk.emplace_back(combo[0], combo[1]);
    }
  }
  detail::read_key(j, "seeds", b.seeds, where);
  return b;
}

inline Json to_json(const RunConfig& c) {
  return Json{{"seed", c.seed},
              {"output_dir", c.output_dir},
              {"dataset_csv", c.dataset_csv},
              {"synthetic", to_json(c.synthetic)},
              {"train_identities", c.train_identities},
              {"protocol_csv", c.protocol_csv},
              {"pairs_per_class", c.pairs_per_class},
              {"folds", c.folds},
              {"pretrain_iterations", c.pretrain_iterations},
              {"pretrain_learning_rate", c.pretrain_learning_rate},
              {"train", to_json(c.train)},
              {"bench", to_json(c.bench)}};
}

inline RunConfig run_config_from_json(const Json& j) {
  const std::string where = "config";
  detail::reject_unknown_keys(j,
                              {"seed", "output_dir", "dataset_csv", "synthetic", "train_identities", "protocol_csv",
                               "pairs_per_class", "folds", "pretrain_iterations", "pretrain_learning_rate", "train",
                               "bench"},
                              where);
  RunConfig c;
  detail::read_key(j, "seed", c.seed, where);
  detail::read_key(j, "output_dir", c.output_dir, where);
  detail::read_key(j, "dataset_csv", c.dataset_csv, where);
  if (j.contains("synthetic")) c.synthetic = synthetic_from_json(j.at("synthetic"));
  detail::read_key(j, "train_identities", c.train_identities, where);
  detail::read_key(j, "protocol_csv", c.protocol_csv, where);
  detail::read_key(j, "pairs_per_class", c.pairs_per_class, where);
  detail::read_key(j, "folds", c.folds, where);
  detail::read_key(j, "pretrain_iterations", c.pretrain_iterations, where);
  detail::read_key(j, "pretrain_learning_rate", c.pretrain_learning_rate, where);
  if (j.contains("train")) c.train = train_from_json(j.at("train"));
  if (j.contains("bench")) c.bench = bench_from_json(j.at("bench"));
  return c;
}

inline RunConfig parse_run_config(const std::string& text, const std::string& source = "config") {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return run_config_from_json(j);
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path);
}

inline std::string serialize_run_config(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

inline Json to_json(const TrainReport& r) {
  Json records = Json::array();
  for (const auto& rec : r.records) {
    records.push_back(Json{{"iteration", rec.iteration},
                           {"loss", format_metric(rec.loss)},
                           {"active_fraction", format_metric(rec.active_fraction)},
                           {"verif_acc", format_metric(rec.verif_acc)}});
  }
  return Json{{"records", records},
              {"warnings", r.warnings},
              {"triplets_selected", r.triplets_selected},
              {"steps_without_triplets", r.steps_without_triplets}};
}

}  // namespace tripletlab
