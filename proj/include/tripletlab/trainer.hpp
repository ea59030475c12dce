#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tripletlab/adagrad.hpp"
#include "tripletlab/checkpoint.hpp"
#include "tripletlab/dataset.hpp"
#include "tripletlab/embedder.hpp"
#include "tripletlab/eval.hpp"
#include "tripletlab/loss.hpp"
#include "tripletlab/mining.hpp"
#include "tripletlab/pool.hpp"
#include "tripletlab/sampler.hpp"

namespace tripletlab {

enum class Phase { Pretrain, Finetune };
enum class MiningMethod { Online, Offline, SemiOnline };

inline constexpr std::string_view kMethodNames = "online, offline, semi_online";

inline std::string to_string(Phase p) { return p == Phase::Pretrain ? "pretrain" : "finetune"; }

inline Phase parse_phase(std::string_view s) {
  if (s == "pretrain") return Phase::Pretrain;
  if (s == "finetune") return Phase::Finetune;
  throw ConfigError("unknown phase '" + std::string(s) + "' (expected pretrain or finetune)");
}

inline std::string to_string(MiningMethod m) {
  switch (m) {
    case MiningMethod::Online: return "online";
    case MiningMethod::Offline: return "offline";
    case MiningMethod::SemiOnline: return "semi_online";
  }
  throw ConfigError("unknown mining method tag");
}

inline MiningMethod parse_method(std::string_view s) {
  for (auto m : {MiningMethod::Online, MiningMethod::Offline, MiningMethod::SemiOnline}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown mining method '" + std::string(s) + "' (expected one of {" + std::string(kMethodNames) + "})");
}

struct TrainConfig {
  Phase phase = Phase::Finetune;
  int iterations = 3000;
  PKConfig pk;
  MiningConfig mining;
  MiningMethod method = MiningMethod::Online;
  int pool_window = 10;
  int offline_refresh = 50;
  double learning_rate = 0.001;
  int eval_interval = 500;
  std::string init_checkpoint;
  std::string out_checkpoint;
  bool from_scratch = false;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {64, 64};
  int embed_dim = 32;
  // Warn after this many consecutive steps without an active triplet.
  int zero_active_warn = 100;

  std::vector<int> layer_sizes(int input_dim) const {
    std::vector<int> sizes{input_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(embed_dim);
    return sizes;
  }

  void validate() const {
    if (iterations <= 0) throw ConfigError("iterations must be > 0");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (eval_interval <= 0) throw ConfigError("eval interval must be > 0");
    if (pool_window < 1) throw ConfigError("pool window must be >= 1");
    if (offline_refresh < 1) throw ConfigError("offline refresh period must be >= 1");
    if (embed_dim < 1) throw ConfigError("embedding dimension must be >= 1");
    pk.validate();
    mining.validate();
  }
};

struct TrainRecord {
  int iteration = 0;
  double loss = 0.0;
  double active_fraction = std::numeric_limits<double>::quiet_NaN();
  double verif_acc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainReport {
  std::vector<TrainRecord> records;
  std::vector<std::string> warnings;
  std::int64_t triplets_selected = 0;
  int steps_without_triplets = 0;
};

inline std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_report_csv(std::ostream& out, const TrainReport& report) {
  out << "iteration,loss,active_fraction,verif_acc\n";
  for (const auto& r : report.records) {
    out << r.iteration << ',' << format_metric(r.loss) << ',' << format_metric(r.active_fraction) << ','
        << format_metric(r.verif_acc) << '\n';
  }
}

inline std::string report_csv(const TrainReport& report) {
  std::ostringstream out;
  write_report_csv(out, report);
  return out.str();
}

/// Held-out verification set evaluated at every report interval.
struct EvalSet {
  const LabeledDataset* dataset = nullptr;
  const PairProtocol* protocol = nullptr;

  double accuracy(const EmbedderParams& params) const {
    if (!dataset || !protocol) return std::numeric_limits<double>::quiet_NaN();
    return verification_accuracy(params, *protocol, *dataset);
  }
};

namespace detail {

// Accumulates per-step metrics and flushes a record at each interval boundary.
class IntervalRecorder {
 public:
  IntervalRecorder(int interval, int iterations) : interval_(interval), iterations_(iterations) {}

  template <class AccuracyFn>
  void add(TrainReport& report, int step, double loss, double active_fraction, AccuracyFn&& accuracy) {
    loss_sum_ += loss;
    active_sum_ += active_fraction;
    ++count_;
    const int done = step + 1;
    if (done % interval_ == 0 || done == iterations_) {
      report.records.push_back({done, loss_sum_ / count_, active_sum_ / count_, accuracy()});
      loss_sum_ = active_sum_ = 0.0;
      count_ = 0;
    }
  }

 private:
  int interval_;
  int iterations_;
  double loss_sum_ = 0.0;
  double active_sum_ = 0.0;
  int count_ = 0;
};

}  // namespace detail

struct PretrainResult {
  EmbedderParams params;
  SoftmaxHead head;
  TrainReport report;
  double train_accuracy = 0.0;
};

/// Fraction of training samples whose softmax argmax is their own identity.
inline double softmax_train_accuracy(const EmbedderParams& params, const SoftmaxHead& head,
                                     const LabeledDataset& dataset) {
  const auto r = softmax_xent_forward_backward(head, embed(params, dataset.inputs), dataset.labels);
  return static_cast<double>(r.correct) / static_cast<double>(dataset.size());
}

/// Softmax cross-entropy pretraining of the embedder on P x K batches.
inline PretrainResult pretrain(const LabeledDataset& train, const TrainConfig& cfg, const EvalSet& eval = {}) {
  cfg.validate();
  if (train.num_identities() < 2) {
    throw ConfigError("pretrain needs at least 2 identities (got " + std::to_string(train.num_identities()) + ")");
  }
  PretrainResult out{EmbedderParams::init(cfg.layer_sizes(train.dim()), derive_seed(cfg.seed, "init")),
                     SoftmaxHead::init(cfg.embed_dim, train.num_identities(), derive_seed(cfg.seed, "head")),
                     {},
                     0.0};
  Rng sampler(derive_seed(cfg.seed, "sampler"));
  AdagradState embed_opt{cfg.learning_rate, 1e-8, {}};
  AdagradState head_opt{cfg.learning_rate, 1e-8, {}};
  detail::IntervalRecorder recorder(cfg.eval_interval, cfg.iterations);
  bool warned_replacement = false;

  for (int step = 0; step < cfg.iterations; ++step) {
    const PKBatch batch = sample_pk_batch(train, cfg.pk, sampler);
    if (batch.with_replacement && !warned_replacement) {
      out.report.warnings.push_back("some identities have fewer than K samples; sampled with replacement");
      warned_replacement = true;
    }
    const auto fwd = embed_forward(out.params, batch.inputs);
    const auto xent = softmax_xent_forward_backward(out.head, fwd.features, batch.labels);
    const EmbedderParams grads = embed_backward(out.params, fwd.cache, xent.grad_features);
    adagrad_step(embed_opt, out.params, grads);
    adagrad_step(head_opt, out.head, xent.grad_head);
    recorder.add(out.report, step, xent.loss, std::numeric_limits<double>::quiet_NaN(),
                 [&] { return eval.accuracy(out.params); });
  }
  out.train_accuracy = softmax_train_accuracy(out.params, out.head, train);
  if (!cfg.out_checkpoint.empty()) save_checkpoint(cfg.out_checkpoint, {out.params, out.head});
  return out;
}

struct FinetuneResult {
  EmbedderParams params;
  TrainReport report;
};

namespace detail {

// Re-embeds the samples referenced by id triplets with the current parameters
// and rewrites the triplets as row indices into that local batch.
struct LocalBatch {
  std::vector<int> sample_ids;
  TripletList triplets;
};

inline LocalBatch localize(const TripletList& id_triplets) {
  LocalBatch local;
  std::map<int, int> row_of;
  auto row = [&](int id) {
    auto [it, inserted] = row_of.try_emplace(id, static_cast<int>(local.sample_ids.size()));
    if (inserted) local.sample_ids.push_back(id);
    return it->second;
  };
  for (const auto& t : id_triplets) {
    const int a = row(t.anchor);
    const int p = row(t.positive);
    const int n = row(t.negative);
    local.triplets.push_back({a, p, n});
  }
  return local;
}

inline double active_fraction(const DistanceMatrix& m, const LabelVector& labels, double margin) {
  const auto valid = count_valid_triplets(labels);
  return valid == 0 ? 0.0 : static_cast<double>(count_active_triplets(m, labels, margin)) / static_cast<double>(valid);
}

}  // namespace detail

/// Triplet-loss finetuning. Each step mines triplets by the configured method,
/// evaluates the loss on embeddings from the current parameters and takes one
/// Adagrad step.
inline FinetuneResult finetune(const LabeledDataset& train, const TrainConfig& cfg, const EmbedderParams* initial,
                               const EvalSet& eval = {}) {
  cfg.validate();
  if (!initial && !cfg.from_scratch) {
    throw ConfigError(
        "finetune needs a pretrained checkpoint: triplet training from a random start performs much worse; "
        "run pretrain first or pass --from-scratch");
  }
  FinetuneResult out{initial ? *initial : EmbedderParams::init(cfg.layer_sizes(train.dim()), derive_seed(cfg.seed, "init")),
                     {}};
  if (out.params.input_dim() != train.dim()) {
    throw ConfigError("checkpoint input dimension " + std::to_string(out.params.input_dim()) +
                      " does not match dataset dimension " + std::to_string(train.dim()));
  }
  Rng sampler(derive_seed(cfg.seed, "sampler"));
  MiningConfig mining = cfg.mining;
  mining.seed = derive_seed(cfg.seed, "mining");
  AdagradState opt{cfg.learning_rate, 1e-8, {}};
  detail::IntervalRecorder recorder(cfg.eval_interval, cfg.iterations);
  FeaturePool pool(cfg.method == MiningMethod::SemiOnline ? cfg.pool_window : 1);

  TripletList offline_list;
  std::size_t offline_cursor = 0;
  double offline_active = 0.0;
  int zero_streak = 0;
  bool warned_replacement = false;

  for (int step = 0; step < cfg.iterations; ++step) {
    const auto key = static_cast<std::uint64_t>(step);
    FeatureMatrix features;
    ForwardCache cache;
    TripletList triplets;
    double active = 0.0;

    if (cfg.method == MiningMethod::Offline) {
      if (step % cfg.offline_refresh == 0) {
        const FeatureMatrix all = embed(out.params, train.inputs);
        const DistanceMatrix m = pairwise_squared_distances(all);
        offline_list = mine(m, train.labels, mining, key);
        std::shuffle(offline_list.begin(), offline_list.end(), sampler);
        offline_cursor = 0;
        offline_active = detail::active_fraction(m, train.labels, mining.margin);
      }
      active = offline_active;
      TripletList chunk;
      const std::size_t take = std::min(offline_list.size(), static_cast<std::size_t>(cfg.pk.batch_size()));
      for (std::size_t c = 0; c < take; ++c) {
        chunk.push_back(offline_list[offline_cursor]);
        offline_cursor = (offline_cursor + 1) % offline_list.size();
      }
      const auto local = detail::localize(chunk);
      if (!local.sample_ids.empty()) {
        auto fwd = embed_forward(out.params, gather_rows(train.inputs, local.sample_ids));
        features = std::move(fwd.features);
        cache = std::move(fwd.cache);
      }
      triplets = local.triplets;
    } else {
      const PKBatch batch = sample_pk_batch(train, cfg.pk, sampler);
      if (batch.with_replacement && !warned_replacement) {
        out.report.warnings.push_back("some identities have fewer than K samples; sampled with replacement");
        warned_replacement = true;
      }
      auto fwd = embed_forward(out.params, batch.inputs);
      const DistanceMatrix m = pairwise_squared_distances(fwd.features);
      active = detail::active_fraction(m, batch.labels, mining.margin);
      if (cfg.method == MiningMethod::Online) {
        triplets = mine(m, batch.labels, mining, key);
        features = std::move(fwd.features);
        cache = std::move(fwd.cache);
      } else {
        pool.push(fwd.features, batch.labels, batch.sample_ids, step);
        const auto local = detail::localize(pool.mine(mining, key));
        if (!local.sample_ids.empty()) {
          auto fresh = embed_forward(out.params, gather_rows(train.inputs, local.sample_ids));
          features = std::move(fresh.features);
          cache = std::move(fresh.cache);
        }
        triplets = local.triplets;
      }
    }

    double loss = 0.0;
    int active_in_step = 0;
    if (!triplets.empty()) {
      const auto result = triplet_loss(features, triplets, mining.margin);
      loss = result.total;
      active_in_step = result.active;
      if (result.active > 0) {
        const Matrix grad = triplet_loss_backward(features, triplets, mining.margin);
        adagrad_step(opt, out.params, embed_backward(out.params, cache, grad));
      }
    }
    out.report.triplets_selected += static_cast<std::int64_t>(triplets.size());
    if (triplets.empty()) ++out.report.steps_without_triplets;
    zero_streak = active_in_step > 0 ? 0 : zero_streak + 1;
    if (zero_streak == cfg.zero_active_warn) {
      out.report.warnings.push_back("no active triplets for " + std::to_string(zero_streak) +
                                    " consecutive iterations (at iteration " + std::to_string(step + 1) + ")");
    }
    recorder.add(out.report, step, loss, active, [&] { return eval.accuracy(out.params); });
  }
  if (!cfg.out_checkpoint.empty()) save_checkpoint(cfg.out_checkpoint, {out.params, std::nullopt});
  return out;
}

struct PkSweepRow {
  int P = 0;
  int K = 0;
  double accuracy = 0.0;
  TrainReport report;
};

/// One finetune per (P, K) combo with a shared seed; every combo must keep the
/// base batch size.
inline std::vector<PkSweepRow> run_pk_sweep(const LabeledDataset& train, const TrainConfig& base,
                                            const std::vector<std::pair<int, int>>& combos,
                                            const EmbedderParams* initial, const EvalSet& eval) {
  if (combos.empty()) throw ConfigError("pk sweep: no (P, K) combos given");
  const int batch = base.pk.batch_size();
  for (const auto& [p, k] : combos) {
    if (p * k != batch) {
      throw ConfigError("pk sweep: combo (" + std::to_string(p) + ", " + std::to_string(k) + ") has P*K = " +
                        std::to_string(p * k) + ", expected " + std::to_string(batch));
    }
  }
  std::vector<PkSweepRow> rows;
  for (const auto& [p, k] : combos) {
    TrainConfig cfg = base;
    cfg.pk.P = p;
    cfg.pk.K = k;
    auto result = finetune(train, cfg, initial, eval);
    rows.push_back({p, k, eval.accuracy(result.params), std::move(result.report)});
  }
  return rows;
}

}  // namespace tripletlab
