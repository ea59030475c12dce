#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tripletlab/checkpoint.hpp"
#include "tripletlab/config.hpp"
#include "tripletlab/experiment.hpp"
#include "tripletlab/trainer.hpp"

namespace tripletlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
  std::optional<std::string> method;
  std::optional<int> pool_window;
  std::optional<double> margin;
  std::optional<double> lr;
  std::optional<std::string> out;
  std::optional<std::string> checkpoint;
  bool from_scratch = false;
};

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

// Training identities, held-out identities and the verification protocol.
inline Experiment load_experiment(const RunConfig& cfg) {
  if (cfg.dataset_csv.empty()) {
    Experiment ex = make_experiment(cfg.experiment_setup(), cfg.seed);
    if (!cfg.protocol_csv.empty()) {
      ex.protocol = load_protocol_csv(cfg.protocol_csv, cfg.folds);
      ex.protocol.validate(ex.heldout.size());
    }
    return ex;
  }
  const LabeledDataset all = load_dataset_csv(cfg.dataset_csv);
  auto [train, heldout] = split_by_identity(all, cfg.train_identities);
  PairProtocol protocol = cfg.protocol_csv.empty()
                              ? make_pair_protocol(heldout, cfg.pairs_per_class, cfg.folds, derive_seed(cfg.seed, "protocol"))
                              : load_protocol_csv(cfg.protocol_csv, cfg.folds);
  protocol.validate(heldout.size());
  return {std::move(train), std::move(heldout), std::move(protocol)};
}

inline RunConfig load_config(const std::string& path, const Overrides& o, Phase phase) {
  RunConfig cfg = load_run_config(path);
  cfg.train.phase = phase;
  if (o.seed) cfg.seed = *o.seed;
  if (o.strategy) cfg.train.mining.strategy = parse_strategy(*o.strategy);
  if (o.method) cfg.train.method = parse_method(*o.method);
  if (o.pool_window) cfg.train.pool_window = *o.pool_window;
  if (o.margin) cfg.train.mining.margin = *o.margin;
  if (o.lr) (phase == Phase::Pretrain ? cfg.pretrain_learning_rate : cfg.train.learning_rate) = *o.lr;
  if (o.out) cfg.output_dir = *o.out;
  if (o.checkpoint) cfg.train.init_checkpoint = *o.checkpoint;
  if (o.from_scratch) cfg.train.from_scratch = true;
  cfg.validate();
  return cfg;
}

inline std::filesystem::path prepare_output(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Json summary(const std::string& command, const RunConfig& cfg) {
  return Json{{"command", command}, {"config", to_json(cfg)}};
}

}  // namespace detail

inline int cmd_pretrain(const std::string& config_path, const Overrides& o, std::ostream& out) {
  RunConfig cfg = detail::load_config(config_path, o, Phase::Pretrain);
  cfg.validate_paths();
  const auto dir = detail::prepare_output(cfg);
  if (cfg.train.out_checkpoint.empty()) cfg.train.out_checkpoint = (dir / "pretrain.ckpt").string();
  const Experiment ex = detail::load_experiment(cfg);

  TrainConfig train = cfg.pretrain_config();
  const auto result = pretrain(ex.train, train, ex.eval_set());
  const double acc = ex.eval_set().accuracy(result.params);

  detail::write_text(dir / "pretrain_report.csv", report_csv(result.report));
  Json s = detail::summary("pretrain", cfg);
  s["metrics"] = Json{{"train_accuracy", format_metric(result.train_accuracy)}, {"verif_acc", format_metric(acc)}};
  s["report"] = to_json(result.report);
  s["checkpoint"] = train.out_checkpoint;
  detail::write_text(dir / "pretrain_summary.json", s.dump(2) + "\n");
  out << "pretrain: train_accuracy=" << format_metric(result.train_accuracy) << " verif_acc=" << format_metric(acc)
      << " checkpoint=" << train.out_checkpoint << '\n';
  return kExitOk;
}

inline int cmd_finetune(const std::string& config_path, const Overrides& o, std::ostream& out) {
  RunConfig cfg = detail::load_config(config_path, o, Phase::Finetune);
  if (!cfg.train.from_scratch && cfg.train.init_checkpoint.empty()) {
    throw ConfigError(
        "finetune needs a pretrained checkpoint (train.init_checkpoint or --checkpoint): triplet training from a "
        "random start performs much worse; run pretrain first or pass --from-scratch");
  }
  if (!cfg.train.from_scratch && !std::filesystem::exists(cfg.train.init_checkpoint)) {
    throw ConfigError("checkpoint not found: " + cfg.train.init_checkpoint +
                      " (run pretrain first, or pass --from-scratch to train without pretraining)");
  }
  cfg.validate_paths();
  const auto dir = detail::prepare_output(cfg);
  if (cfg.train.out_checkpoint.empty()) cfg.train.out_checkpoint = (dir / "finetune.ckpt").string();
  const Experiment ex = detail::load_experiment(cfg);

  std::optional<EmbedderParams> initial;
  if (!cfg.train.from_scratch) initial = load_checkpoint(cfg.train.init_checkpoint).embedder;
  const TrainConfig train = cfg.finetune_config();
  const auto result = finetune(ex.train, train, initial ? &*initial : nullptr, ex.eval_set());
  const double acc = ex.eval_set().accuracy(result.params);

  detail::write_text(dir / "finetune_report.csv", report_csv(result.report));
  Json s = detail::summary("finetune", cfg);
  s["metrics"] = Json{{"verif_acc", format_metric(acc)}, {"triplets_selected", result.report.triplets_selected}};
  s["report"] = to_json(result.report);
  s["checkpoint"] = train.out_checkpoint;
  detail::write_text(dir / "finetune_summary.json", s.dump(2) + "\n");
  for (const auto& w : result.report.warnings) std::cerr << "warning: " << w << '\n';
  out << "finetune: strategy=" << to_string(train.mining.strategy) << " method=" << to_string(train.method)
      << " triplets_selected=" << result.report.triplets_selected << " verif_acc=" << format_metric(acc) << '\n';
  return kExitOk;
}

inline int cmd_eval(const std::string& config_path, const Overrides& o, std::ostream& out) {
  RunConfig cfg = detail::load_config(config_path, o, Phase::Finetune);
  if (cfg.train.init_checkpoint.empty()) throw ConfigError("eval needs --checkpoint or train.init_checkpoint");
  cfg.validate_paths();
  const auto dir = detail::prepare_output(cfg);
  const Experiment ex = detail::load_experiment(cfg);
  const Checkpoint ckpt = load_checkpoint(cfg.train.init_checkpoint);
  const double acc = verification_accuracy(ckpt.embedder, ex.protocol, ex.heldout);
  save_protocol_csv((dir / "protocol.csv").string(), ex.protocol);
  Json s = detail::summary("eval", cfg);
  s["metrics"] = Json{{"verif_acc", format_metric(acc)}, {"pairs", ex.protocol.pairs.size()}};
  detail::write_text(dir / "eval_summary.json", s.dump(2) + "\n");
  out << "eval: verif_acc=" << format_metric(acc) << " pairs=" << ex.protocol.pairs.size() << '\n';
  return kExitOk;
}

struct MineOptions {
  std::string features;
  std::string strategy = "min_max";
  double margin = 0.2;
  std::uint64_t seed = 0;
  bool normalize = false;
  std::string out;
};

/// Mines one feature CSV (`label,x_0,...`) and writes `anchor,positive,negative` rows.
inline int cmd_mine(const MineOptions& m, std::ostream& out) {
  if (m.features.empty()) throw ConfigError("mine needs --features <csv>");
  if (!std::filesystem::exists(m.features)) throw ConfigError("features file not found: " + m.features);
  MiningConfig cfg{parse_strategy(m.strategy), m.margin, m.seed};
  cfg.validate();
  const LabeledDataset ds = load_dataset_csv(m.features);
  const FeatureMatrix f = m.normalize ? l2_normalize(ds.inputs) : ds.inputs;
  const TripletList triplets = mine(pairwise_squared_distances(f), ds.labels, cfg);

  std::ofstream file;
  if (!m.out.empty()) {
    file.open(m.out);
    if (!file) throw Error("cannot write " + m.out);
  }
  std::ostream& sink = m.out.empty() ? out : file;
  sink << "anchor,positive,negative\n";
  for (const auto& t : triplets) sink << t.anchor << ',' << t.positive << ',' << t.negative << '\n';
  if (!m.out.empty()) out << "mine: " << triplets.size() << " triplets -> " << m.out << '\n';
  return kExitOk;
}

/// Runs the configured sweep; each seed pretrains once and finetunes every cell.
inline int cmd_bench(const std::string& config_path, const Overrides& o, std::ostream& out) {
  RunConfig cfg = detail::load_config(config_path, o, Phase::Finetune);
  cfg.train.from_scratch = true;  // bench pretrains in-process
  cfg.validate_paths();
  const auto& b = cfg.bench;
  if (b.seeds.empty()) throw ConfigError("bench: seeds list is empty");
  struct Cell {
    Strategy strategy;
    MiningMethod method;
    int P, K;
  };
  std::vector<Cell> cells;
  const Cell base{cfg.train.mining.strategy, cfg.train.method, cfg.train.pk.P, cfg.train.pk.K};
  if (b.sweep == "strategies") {
    for (auto s : b.strategies) cells.push_back({s, base.method, base.P, base.K});
  } else if (b.sweep == "pk") {
    for (const auto& [p, k] : b.pk) {
      if (p * k != base.P * base.K) {
        throw ConfigError("bench: combo (" + std::to_string(p) + ", " + std::to_string(k) + ") changes the batch size " +
                          std::to_string(base.P * base.K));
      }
      cells.push_back({base.strategy, base.method, p, k});
    }
  } else if (b.sweep == "methods") {
    for (auto m : b.methods) cells.push_back({base.strategy, m, base.P, base.K});
  } else {
    throw ConfigError("bench: unknown sweep '" + b.sweep + "' (expected strategies, pk or methods)");
  }
  if (cells.empty()) throw ConfigError("bench: sweep '" + b.sweep + "' has an empty list");

  const auto dir = detail::prepare_output(cfg);
  std::ostringstream csv;
  csv << "sweep,seed,strategy,method,P,K,pretrain_acc,verif_acc\n";
  std::map<std::string, std::pair<double, int>> means;
  for (std::uint64_t seed : b.seeds) {
    RunConfig run = cfg;
    run.seed = seed;
    const Experiment ex = detail::load_experiment(run);
    TrainConfig pre_cfg = run.pretrain_config();
    pre_cfg.eval_interval = pre_cfg.iterations;
    const auto pre = pretrain(ex.train, pre_cfg);
    const double pre_acc = ex.eval_set().accuracy(pre.params);
    for (const auto& c : cells) {
      TrainConfig ft = run.finetune_config();
      ft.from_scratch = false;
      ft.out_checkpoint.clear();
      ft.mining.strategy = c.strategy;
      ft.method = c.method;
      ft.pk.P = c.P;
      ft.pk.K = c.K;
      ft.eval_interval = ft.iterations;
      const auto result = finetune(ex.train, ft, &pre.params);
      const double acc = ex.eval_set().accuracy(result.params);
      csv << b.sweep << ',' << seed << ',' << to_string(c.strategy) << ',' << to_string(c.method) << ',' << c.P << ','
          << c.K << ',' << format_metric(pre_acc) << ',' << format_metric(acc) << '\n';
      const std::string key =
          to_string(c.strategy) + "/" + to_string(c.method) + "/" + std::to_string(c.P) + "x" + std::to_string(c.K);
      means[key].first += acc;
      means[key].second += 1;
    }
  }
  detail::write_text(dir / "bench.csv", csv.str());
  Json s = detail::summary("bench", cfg);
  Json m = Json::object();
  for (const auto& [key, v] : means) m[key] = format_metric(v.first / v.second);
  s["mean_verif_acc"] = m;
  detail::write_text(dir / "bench_summary.json", s.dump(2) + "\n");
  out << "bench: " << cells.size() * b.seeds.size() << " rows -> " << (dir / "bench.csv").string() << '\n';
  return kExitOk;
}

/// Entry point shared by the executable and the tests. Exit status: 0 success,
/// 1 runtime failure, 2 configuration or usage error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Triplet-loss metric learning with hard-example mining"};
  app.require_subcommand(1);

  std::string config;
  Overrides o;
  std::uint64_t seed = 0;
  std::string strategy, method, out_dir, checkpoint;
  int pool_window = 0;
  double margin = 0.0, lr = 0.0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "run configuration (JSON)")->required();
    sub->add_option("--seed", seed, "top-level seed");
    sub->add_option("--out", out_dir, "output directory");
  };
  auto add_training = [&](CLI::App* sub) {
    sub->add_option("--strategy", strategy, "mining strategy: all, random, min_min, min_max, hardest");
    sub->add_option("--method", method, "mining method: online, offline, semi_online");
    sub->add_option("--pool-window", pool_window, "semi-online pool window in batches");
    sub->add_option("--margin", margin, "triplet margin");
    sub->add_option("--lr", lr, "learning rate");
  };

  auto* pre = app.add_subcommand("pretrain", "softmax pretraining; writes a checkpoint and report");
  add_common(pre);
  pre->add_option("--lr", lr, "learning rate");

  auto* fine = app.add_subcommand("finetune", "triplet-loss finetuning from a pretrained checkpoint");
  add_common(fine);
  add_training(fine);
  fine->add_option("--checkpoint", checkpoint, "pretrained checkpoint");
  fine->add_flag("--from-scratch", o.from_scratch, "train without a pretrained checkpoint");

  auto* ev = app.add_subcommand("eval", "verification accuracy of a checkpoint on held-out identities");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint, "checkpoint to evaluate");

  auto* bench = app.add_subcommand("bench", "strategy / PK / mining-method comparison sweep");
  add_common(bench);
  add_training(bench);

  MineOptions mine_opts;
  auto* mine_cmd = app.add_subcommand("mine", "mine triplets from a feature CSV");
  mine_cmd->add_option("--features", mine_opts.features, "feature CSV with a label column")->required();
  mine_cmd->add_option("--strategy", mine_opts.strategy, "all, random, min_min, min_max, hardest");
  mine_cmd->add_option("--margin", mine_opts.margin, "triplet margin");
  mine_cmd->add_option("--seed", mine_opts.seed, "seed for the random strategy");
  mine_cmd->add_flag("--normalize", mine_opts.normalize, "L2-normalize features before mining");
  mine_cmd->add_option("--out", mine_opts.out, "output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  auto set_if = [](auto& opt, CLI::App* sub, const char* name, const auto& value) {
    if (const auto* opt_ptr = sub->get_option_no_throw(name); opt_ptr && opt_ptr->count() > 0) opt = value;
  };
  try {
    for (CLI::App* sub : {pre, fine, ev, bench}) {
      if (!sub->parsed()) continue;
      set_if(o.seed, sub, "--seed", seed);
      set_if(o.out, sub, "--out", out_dir);
      set_if(o.lr, sub, "--lr", lr);
      if (sub == fine || sub == bench) {
        set_if(o.strategy, sub, "--strategy", strategy);
        set_if(o.method, sub, "--method", method);
        set_if(o.pool_window, sub, "--pool-window", pool_window);
        set_if(o.margin, sub, "--margin", margin);
      }
      if (sub == fine || sub == ev) set_if(o.checkpoint, sub, "--checkpoint", checkpoint);
    }
    if (pre->parsed()) return cmd_pretrain(config, o, out);
    if (fine->parsed()) return cmd_finetune(config, o, out);
    if (ev->parsed()) return cmd_eval(config, o, out);
    if (bench->parsed()) return cmd_bench(config, o, out);
    return cmd_mine(mine_opts, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace tripletlab::cli
