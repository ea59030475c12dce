#pragma once

#include <cstdint>
#include <utility>

#include "tripletlab/eval.hpp"
#include "tripletlab/trainer.hpp"

namespace tripletlab {

/// A synthetic corpus split into training identities and held-out identities,
/// plus a verification protocol over the held-out ones.
struct ExperimentSetup {
  SyntheticSpec data;
  int train_identities = 20;
  int pairs_per_class = 600;
  int folds = 10;
};

struct Experiment {
  LabeledDataset train;
  LabeledDataset heldout;
  PairProtocol protocol;

  EvalSet eval_set() const { return {&heldout, &protocol}; }
};

inline Experiment make_experiment(const ExperimentSetup& setup, std::uint64_t seed) {
  SyntheticSpec spec = setup.data;
  spec.seed = derive_seed(seed, "data");
  auto [train, heldout] = split_by_identity(generate_synthetic(spec), setup.train_identities);
  PairProtocol protocol = make_pair_protocol(heldout, setup.pairs_per_class, setup.folds, derive_seed(seed, "protocol"));
  return {std::move(train), std::move(heldout), std::move(protocol)};
}

}  // namespace tripletlab
