#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/QR>

#include "tripletlab/dataset.hpp"
#include "tripletlab/embedder.hpp"
#include "tripletlab/random.hpp"

namespace tripletlab {

/// Gaussian identity clusters. Centers live in a random `latent_dim`-dimensional
/// subspace of the `dim`-dimensional input space. Isotropic noise covers all of
/// it and `nuisance` adds identity-independent variance off the subspace, so
/// raw distances are dominated by directions an embedder has to learn to ignore.
struct SyntheticSpec {
  int identities = 40;
  int samples_per_identity = 100;
  int dim = 32;
  int latent_dim = 8;
  double separation = 1.0;  // std-dev of center coordinates along the latent axes
  double noise = 0.35;      // within-cluster std-dev per input coordinate
  double nuisance = 1.5;    // extra std-dev along the directions orthogonal to the latent subspace
  double warp = 0.0;        // strength of the fixed x + warp * tanh(A x) map; 0 disables
  std::uint64_t seed = 0;

  void validate() const {
    if (identities < 1 || samples_per_identity < 1 || dim < 1) {
      throw ConfigError("synthetic: identities, samples_per_identity and dim must be >= 1");
    }
    if (latent_dim < 1 || latent_dim > dim) throw ConfigError("synthetic: latent_dim must be in [1, dim]");
    if (!(separation > 0.0)) throw ConfigError("synthetic: separation must be > 0");
    if (!(noise >= 0.0)) throw ConfigError("synthetic: noise must be >= 0");
    if (!(nuisance >= 0.0)) throw ConfigError("synthetic: nuisance must be >= 0");
    if (!(warp >= 0.0)) throw ConfigError("synthetic: warp must be >= 0");
  }
};

inline LabeledDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng structure(derive_seed(spec.seed, "structure"));
  Rng samples(derive_seed(spec.seed, "samples"));
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix gauss(spec.dim, spec.latent_dim);
  for (Eigen::Index i = 0; i < gauss.size(); ++i) gauss.data()[i] = normal(structure);
  const Eigen::MatrixXd rotation = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
  const Eigen::MatrixXd basis = rotation.leftCols(spec.latent_dim);
  const Eigen::MatrixXd complement = rotation.rightCols(spec.dim - spec.latent_dim);

  Matrix warp_map(spec.dim, spec.dim);
  for (Eigen::Index i = 0; i < warp_map.size(); ++i) warp_map.data()[i] = normal(structure) / std::sqrt(spec.dim);

  const int total = spec.identities * spec.samples_per_identity;
  Matrix inputs(total, spec.dim);
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(total));
  for (int c = 0; c < spec.identities; ++c) {
    Vector latent(spec.latent_dim);
    for (int r = 0; r < spec.latent_dim; ++r) latent(r) = spec.separation * normal(structure);
    const Vector center = basis * latent;
    for (int s = 0; s < spec.samples_per_identity; ++s) {
      const int row = c * spec.samples_per_identity + s;
      for (int j = 0; j < spec.dim; ++j) inputs(row, j) = center(j) + spec.noise * normal(samples);
      if (spec.nuisance > 0.0 && complement.cols() > 0) {
        Vector z(complement.cols());
        for (Eigen::Index r = 0; r < z.size(); ++r) z(r) = spec.nuisance * normal(samples);
        inputs.row(row) += (complement * z).transpose();
      }
      names.push_back("id" + std::to_string(c));
    }
  }
  if (spec.warp > 0.0) {
    const Matrix bent = (inputs * warp_map.transpose()).array().tanh();
    inputs += spec.warp * bent;
  }
  return LabeledDataset::from_rows(std::move(inputs), names);
}

/// First `train_identities` identities train, the rest are held out.
inline std::pair<LabeledDataset, LabeledDataset> split_by_identity(const LabeledDataset& ds, int train_identities) {
  if (train_identities < 1 || train_identities >= ds.num_identities()) {
    throw ConfigError("split: train identities must be in [1, " + std::to_string(ds.num_identities() - 1) + "]");
  }
  std::vector<int> train, held;
  for (int i = 0; i < ds.size(); ++i) (ds.labels[static_cast<std::size_t>(i)] < train_identities ? train : held).push_back(i);
  return {ds.subset(train), ds.subset(held)};
}

struct VerificationPair {
  int a = 0;
  int b = 0;
  bool same = false;

  friend bool operator==(const VerificationPair&, const VerificationPair&) = default;
};

/// Same/different pairs over sample ids of an evaluation dataset.
struct PairProtocol {
  std::vector<VerificationPair> pairs;
  int folds = 10;

  void validate(int dataset_size = -1) const {
    if (pairs.empty()) throw Error("pair protocol is empty");
    const auto same = std::count_if(pairs.begin(), pairs.end(), [](const auto& p) { return p.same; });
    if (2 * static_cast<std::size_t>(same) != pairs.size()) {
      throw Error("pair protocol is unbalanced: " + std::to_string(same) + " same vs " +
                  std::to_string(pairs.size() - static_cast<std::size_t>(same)) + " different");
    }
    if (folds < 2 || static_cast<std::size_t>(folds) > pairs.size() / 2) {
      throw Error("pair protocol: folds must be in [2, pairs/2]");
    }
    if (dataset_size >= 0) {
      for (const auto& p : pairs) {
        if (p.a < 0 || p.b < 0 || p.a >= dataset_size || p.b >= dataset_size) {
          throw Error("pair protocol: sample id out of range");
        }
      }
    }
  }
};

inline PairProtocol make_pair_protocol(const LabeledDataset& ds, int pairs_per_class, int folds, std::uint64_t seed) {
  if (pairs_per_class < 1) throw ConfigError("protocol: pairs per class must be >= 1");
  std::vector<int> multi;
  for (int c = 0; c < ds.num_identities(); ++c) {
    if (ds.identity_index[static_cast<std::size_t>(c)].size() >= 2) multi.push_back(c);
  }
  if (multi.empty() || ds.num_identities() < 2) {
    throw Error("protocol: need an identity with two samples and at least two identities");
  }
  Rng rng(seed);
  auto pick = [&rng](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };

  PairProtocol protocol;
  protocol.folds = folds;
  std::set<std::pair<int, int>> used;
  const int max_tries = 100 * pairs_per_class + 1000;
  auto add = [&](int a, int b, bool same) {
    const auto key = std::minmax(a, b);
    if (!used.insert(key).second) return false;
    protocol.pairs.push_back({a, b, same});
    return true;
  };

  int made = 0;
  for (int tries = 0; made < pairs_per_class && tries < max_tries; ++tries) {
    const auto& members = ds.identity_index[static_cast<std::size_t>(multi[static_cast<std::size_t>(pick(static_cast<int>(multi.size())))])];
    const int x = pick(static_cast<int>(members.size()));
    int y = pick(static_cast<int>(members.size()) - 1);
    if (y >= x) ++y;
    made += add(members[static_cast<std::size_t>(x)], members[static_cast<std::size_t>(y)], true);
  }
  const int same_made = made;
  made = 0;
  for (int tries = 0; made < same_made && tries < max_tries; ++tries) {
    const int c1 = pick(ds.num_identities());
    int c2 = pick(ds.num_identities() - 1);
    if (c2 >= c1) ++c2;
    const auto& m1 = ds.identity_index[static_cast<std::size_t>(c1)];
    const auto& m2 = ds.identity_index[static_cast<std::size_t>(c2)];
    if (m1.empty() || m2.empty()) continue;
    made += add(m1[static_cast<std::size_t>(pick(static_cast<int>(m1.size())))],
                m2[static_cast<std::size_t>(pick(static_cast<int>(m2.size())))], false);
  }
  if (made < same_made) {
    // Drop surplus same pairs so the protocol stays balanced.
    int surplus = same_made - made;
    for (auto it = protocol.pairs.end(); surplus > 0 && it != protocol.pairs.begin();) {
      --it;
      if (it->same) {
        it = protocol.pairs.erase(it);
        --surplus;
      }
    }
  }
  protocol.validate(ds.size());
  return protocol;
}

/// Fold of each pair. Same and different pairs are each sorted canonically and
/// dealt round-robin, so the assignment does not depend on the pairs' order.
inline std::vector<int> assign_folds(const PairProtocol& protocol) {
  std::vector<int> fold(protocol.pairs.size(), 0);
  for (bool same : {true, false}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < protocol.pairs.size(); ++i) {
      if (protocol.pairs[i].same == same) idx.push_back(i);
    }
    auto key = [&](std::size_t i) {
      const auto& p = protocol.pairs[i];
      return std::make_tuple(std::min(p.a, p.b), std::max(p.a, p.b), i);
    };
    std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
      const auto kx = key(x), ky = key(y);
      return std::tie(std::get<0>(kx), std::get<1>(kx)) < std::tie(std::get<0>(ky), std::get<1>(ky));
    });
    for (std::size_t r = 0; r < idx.size(); ++r) fold[idx[r]] = static_cast<int>(r % static_cast<std::size_t>(protocol.folds));
  }
  return fold;
}

namespace detail {

// Threshold maximizing accuracy of "same iff distance < t" on the given pairs;
// candidates are midpoints of sorted distances plus one value below and above.
inline double best_threshold(std::vector<std::pair<double, bool>> scored) {
  std::sort(scored.begin(), scored.end());
  const auto total_same = std::count_if(scored.begin(), scored.end(), [](const auto& s) { return s.second; });
  const auto n = static_cast<std::ptrdiff_t>(scored.size());
  double best_t = scored.front().first - 1.0;
  std::ptrdiff_t best_correct = n - total_same;  // everything predicted different
  std::ptrdiff_t same_below = 0, diff_below = 0;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    (scored[static_cast<std::size_t>(i)].second ? same_below : diff_below) += 1;
    if (i + 1 < n && scored[static_cast<std::size_t>(i + 1)].first == scored[static_cast<std::size_t>(i)].first) continue;
    const double t = i + 1 < n ? 0.5 * (scored[static_cast<std::size_t>(i)].first + scored[static_cast<std::size_t>(i + 1)].first)
                               : scored.back().first + 1.0;
    const std::ptrdiff_t correct = same_below + (n - total_same - diff_below);
    if (correct > best_correct) {
      best_correct = correct;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace detail

/// Mean held-out-fold accuracy; each fold's threshold is chosen on the other folds.
inline double verification_accuracy(const std::vector<double>& distances, const std::vector<bool>& same,
                                    const std::vector<int>& fold_of, int folds) {
  if (distances.size() != same.size() || distances.size() != fold_of.size()) {
    throw Error("verification_accuracy: input lengths differ");
  }
  if (folds < 2) throw Error("verification_accuracy: need at least two folds");
  double sum = 0.0;
  for (int f = 0; f < folds; ++f) {
    std::vector<std::pair<double, bool>> train;
    std::size_t tested = 0, correct = 0;
    for (std::size_t i = 0; i < distances.size(); ++i) {
      if (fold_of[i] != f) train.emplace_back(distances[i], same[i]);
    }
    if (train.empty()) throw Error("verification_accuracy: fold " + std::to_string(f) + " leaves no training pairs");
    const double t = detail::best_threshold(std::move(train));
    for (std::size_t i = 0; i < distances.size(); ++i) {
      if (fold_of[i] != f) continue;
      ++tested;
      correct += (distances[i] < t) == same[i];
    }
    if (tested == 0) throw Error("verification_accuracy: fold " + std::to_string(f) + " is empty");
    sum += static_cast<double>(correct) / static_cast<double>(tested);
  }
  return sum / folds;
}

inline std::vector<double> pair_distances(const FeatureMatrix& features, const PairProtocol& protocol) {
  std::vector<double> d;
  d.reserve(protocol.pairs.size());
  for (const auto& p : protocol.pairs) d.push_back((features.row(p.a) - features.row(p.b)).squaredNorm());
  return d;
}

/// Accuracy of the protocol when each sample is represented by `features` (row = sample id).
inline double verification_accuracy(const FeatureMatrix& features, const PairProtocol& protocol) {
  protocol.validate(static_cast<int>(features.rows()));
  std::vector<bool> same;
  for (const auto& p : protocol.pairs) same.push_back(p.same);
  return verification_accuracy(pair_distances(features, protocol), same, assign_folds(protocol), protocol.folds);
}

inline double verification_accuracy(const EmbedderParams& params, const PairProtocol& protocol,
                                    const LabeledDataset& dataset) {
  return verification_accuracy(embed(params, dataset.inputs), protocol);
}

inline void save_protocol_csv(const std::string& path, const PairProtocol& protocol) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write protocol file: " + path);
  out << "id_a,id_b,same\n";
  for (const auto& p : protocol.pairs) out << p.a << ',' << p.b << ',' << (p.same ? 1 : 0) << '\n';
}

inline PairProtocol load_protocol_csv(const std::string& path, int folds = 10) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open protocol file: " + path);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "id_a,id_b,same") {
    throw Error(path + ":1: expected header id_a,id_b,same");
  }
  PairProtocol protocol;
  protocol.folds = folds;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (cells.size() != 3 || (cells[2] != "0" && cells[2] != "1")) throw Error(where + ": expected id_a,id_b,0|1");
    try {
      protocol.pairs.push_back({std::stoi(cells[0]), std::stoi(cells[1]), cells[2] == "1"});
    } catch (const std::exception&) {
      throw Error(where + ": bad sample id");
    }
  }
  protocol.validate();
  return protocol;
}

}  // namespace tripletlab
