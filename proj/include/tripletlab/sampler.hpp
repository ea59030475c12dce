#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "tripletlab/dataset.hpp"
#include "tripletlab/random.hpp"

namespace tripletlab {

struct PKConfig {
  int P = 8;
  int K = 3;
  std::uint64_t seed = 0;

  int batch_size() const { return P * K; }

  void validate() const {
    if (P < 2 || K < 2) {
      throw ConfigError("P and K must both be >= 2 (got P=" + std::to_string(P) +
                        ", K=" + std::to_string(K) + ")");
    }
  }
};

/// P identities with K samples each, grouped by identity in selection order.
struct PKBatch {
  std::vector<int> sample_ids;
  LabelVector labels;
  Matrix inputs;
  // Set when some identity had fewer than K samples and was drawn with replacement.
  bool with_replacement = false;
};

namespace detail {

// First `count` entries of `items` become a uniform sample without replacement.
inline void partial_shuffle(std::vector<int>& items, int count, Rng& rng) {
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, static_cast<int>(items.size()) - 1);
    std::swap(items[static_cast<std::size_t>(i)], items[static_cast<std::size_t>(pick(rng))]);
  }
}

}  // namespace detail

inline PKBatch sample_pk_batch(const LabeledDataset& dataset, const PKConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<int> identities;
  for (int c = 0; c < dataset.num_identities(); ++c) {
    if (!dataset.identity_index[static_cast<std::size_t>(c)].empty()) identities.push_back(c);
  }
  if (static_cast<int>(identities.size()) < cfg.P) {
    throw Error("sample_pk_batch: dataset has " + std::to_string(identities.size()) +
                " identities, need at least P=" + std::to_string(cfg.P));
  }
  detail::partial_shuffle(identities, cfg.P, rng);

  PKBatch batch;
  batch.sample_ids.reserve(static_cast<std::size_t>(cfg.batch_size()));
  for (int p = 0; p < cfg.P; ++p) {
    const int identity = identities[static_cast<std::size_t>(p)];
    std::vector<int> members = dataset.identity_index[static_cast<std::size_t>(identity)];
    if (static_cast<int>(members.size()) >= cfg.K) {
      detail::partial_shuffle(members, cfg.K, rng);
      batch.sample_ids.insert(batch.sample_ids.end(), members.begin(), members.begin() + cfg.K);
    } else {
      batch.with_replacement = true;
      std::uniform_int_distribution<int> pick(0, static_cast<int>(members.size()) - 1);
      for (int k = 0; k < cfg.K; ++k) batch.sample_ids.push_back(members[static_cast<std::size_t>(pick(rng))]);
    }
    batch.labels.insert(batch.labels.end(), static_cast<std::size_t>(cfg.K), identity);
  }
  batch.inputs = gather_rows(dataset.inputs, batch.sample_ids);
  return batch;
}

}  // namespace tripletlab
