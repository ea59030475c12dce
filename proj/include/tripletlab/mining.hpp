#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tripletlab/core.hpp"
#include "tripletlab/random.hpp"

namespace tripletlab {

/// (anchor, positive, negative) row indices into a batch, or sample ids when
/// returned from the pool or offline miner.
struct Triplet {
  int anchor = 0;
  int positive = 0;
  int negative = 0;

  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

using TripletList = std::vector<Triplet>;

enum class Strategy { All, Random, MinMin, MinMax, Hardest };

inline constexpr std::string_view kStrategyNames = "all, random, min_min, min_max, hardest";

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::All: return "all";
    case Strategy::Random: return "random";
    case Strategy::MinMin: return "min_min";
    case Strategy::MinMax: return "min_max";
    case Strategy::Hardest: return "hardest";
  }
  throw ConfigError("unknown strategy tag " + std::to_string(static_cast<int>(s)));
}

inline Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::All, Strategy::Random, Strategy::MinMin, Strategy::MinMax, Strategy::Hardest}) {
    if (name == to_string(s)) return s;
  }
  throw ConfigError("unknown strategy '" + std::string(name) + "' (expected one of {" +
                    std::string(kStrategyNames) + "})");
}

struct MiningConfig {
  Strategy strategy = Strategy::MinMax;
  double margin = 0.2;
  // Only Random consumes randomness.
  std::uint64_t seed = 0;

  void validate() const {
    if (!(margin > 0.0)) throw ConfigError("margin must be > 0");
  }
};

namespace detail {

// Persons in order of first appearance in `labels`; members ascending.
struct PersonGroups {
  std::vector<std::vector<int>> members;
  // Rows whose label differs from person p, ascending.
  std::vector<std::vector<int>> negatives;
};

inline PersonGroups group_persons(const LabelVector& labels) {
  PersonGroups g;
  std::vector<int> seen;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    std::size_t p = 0;
    while (p < seen.size() && seen[p] != labels[r]) ++p;
    if (p == seen.size()) {
      seen.push_back(labels[r]);
      g.members.emplace_back();
    }
    g.members[p].push_back(static_cast<int>(r));
  }
  g.negatives.resize(seen.size());
  for (std::size_t p = 0; p < seen.size(); ++p) {
    for (std::size_t r = 0; r < labels.size(); ++r) {
      if (labels[r] != seen[p]) g.negatives[p].push_back(static_cast<int>(r));
    }
  }
  return g;
}

inline void check_batch(const DistanceMatrix& m, const LabelVector& labels) {
  if (m.rows() != m.cols() || m.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw Error("mining: distance matrix is " + std::to_string(m.rows()) + "x" +
                std::to_string(m.cols()) + " but there are " + std::to_string(labels.size()) + " labels");
  }
}

inline bool is_active(const DistanceMatrix& m, int i, int j, int k, double margin) {
  return m(i, j) + margin > m(i, k);
}

}  // namespace detail

/// Every (i, j, k) with label(i) = label(j), i != j, label(k) != label(i), in
/// person / anchor / positive / negative loop order.
inline TripletList enumerate_valid_triplets(const LabelVector& labels) {
  const auto g = detail::group_persons(labels);
  TripletList out;
  for (std::size_t p = 0; p < g.members.size(); ++p) {
    for (int i : g.members[p]) {
      for (int j : g.members[p]) {
        if (j == i) continue;
        for (int k : g.negatives[p]) out.push_back({i, j, k});
      }
    }
  }
  return out;
}

inline std::int64_t count_valid_triplets(const LabelVector& labels) {
  const auto g = detail::group_persons(labels);
  std::int64_t n = 0;
  for (std::size_t p = 0; p < g.members.size(); ++p) {
    const auto size = static_cast<std::int64_t>(g.members[p].size());
    n += size * (size - 1) * static_cast<std::int64_t>(g.negatives[p].size());
  }
  return n;
}

/// Number of valid triplets satisfying M(i,j) + margin > M(i,k).
inline std::int64_t count_active_triplets(const DistanceMatrix& m, const LabelVector& labels, double margin) {
  detail::check_batch(m, labels);
  const auto g = detail::group_persons(labels);
  std::int64_t n = 0;
  for (std::size_t p = 0; p < g.members.size(); ++p)
    for (int i : g.members[p])
      for (int j : g.members[p]) {
        if (j == i) continue;
        for (int k : g.negatives[p]) n += detail::is_active(m, i, j, k, margin);
      }
  return n;
}

/// All active triplets.
inline TripletList batch_all(const DistanceMatrix& m, const LabelVector& labels, const MiningConfig& cfg) {
  cfg.validate();
  detail::check_batch(m, labels);
  const auto g = detail::group_persons(labels);
  TripletList out;
  for (std::size_t p = 0; p < g.members.size(); ++p) {
    for (int i : g.members[p]) {
      for (int j : g.members[p]) {
        if (j == i) continue;
        for (int k : g.negatives[p]) {
          if (detail::is_active(m, i, j, k, cfg.margin)) out.push_back({i, j, k});
        }
      }
    }
  }
  return out;
}

/// One uniformly drawn active negative per (anchor, positive) pair. The draw for
/// pair (i, j) depends only on (cfg.seed, draw_key, i, j).
inline TripletList batch_random(const DistanceMatrix& m, const LabelVector& labels, const MiningConfig& cfg,
                                std::uint64_t draw_key = 0) {
  cfg.validate();
  detail::check_batch(m, labels);
  const auto g = detail::group_persons(labels);
  const CounterRng draws{derive_seed(cfg.seed, draw_key)};
  TripletList out;
  std::vector<int> active;
  for (std::size_t p = 0; p < g.members.size(); ++p) {
    for (int i : g.members[p]) {
      for (int j : g.members[p]) {
        if (j == i) continue;
        active.clear();
        for (int k : g.negatives[p]) {
          if (detail::is_active(m, i, j, k, cfg.margin)) active.push_back(k);
        }
        if (active.empty()) continue;
        const std::size_t pick = draws.index(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j), active.size());
        out.push_back({i, j, active[pick]});
      }
    }
  }
  return out;
}

/// Per anchor, the active triplet whose negative is closest to the anchor,
/// taken over all of the anchor's positives.
inline TripletList batch_min_min(const DistanceMatrix& m, const LabelVector& labels, const MiningConfig& cfg) {
  cfg.validate();
  detail::check_batch(m, labels);
  const auto g = detail::group_persons(labels);
  TripletList out;
  for (std::size_t p = 0; p < g.members.size(); ++p) {
    for (int i : g.members[p]) {
      std::optional<Triplet> best;
      double best_dist = std::numeric_limits<double>::infinity();
      for (int j : g.members[p]) {
        if (j == i) continue;
        for (int k : g.negatives[p]) {
          if (detail::is_active(m, i, j, k, cfg.margin) && (!best || m(i, k) < best_dist)) {
            best = Triplet{i, j, k};
            best_dist = m(i, k);
          }
        }
      }
      if (best) out.push_back(*best);
    }
  }
  return out;
}

/// Per anchor: for each positive take its closest active negative, then keep
/// the positive whose closest negative is farthest from the anchor.
inline TripletList batch_min_max(const DistanceMatrix& m, const LabelVector& labels, const MiningConfig& cfg) {
  cfg.validate();
  detail::check_batch(m, labels);
  const auto g = detail::group_persons(labels);
  TripletList out;
  for (std::size_t p = 0; p < g.members.size(); ++p) {
    for (int i : g.members[p]) {
      std::optional<Triplet> best;
      double best_dist = -std::numeric_limits<double>::infinity();
      for (int j : g.members[p]) {
        if (j == i) continue;
        std::optional<Triplet> closest;
        double closest_dist = std::numeric_limits<double>::infinity();
        for (int k : g.negatives[p]) {
          if (detail::is_active(m, i, j, k, cfg.margin) && (!closest || m(i, k) < closest_dist)) {
            closest = Triplet{i, j, k};
            closest_dist = m(i, k);
          }
        }
        if (closest && (!best || closest_dist > best_dist)) {
          best = closest;
          best_dist = closest_dist;
        }
      }
      if (best) out.push_back(*best);
    }
  }
  return out;
}

/// Per person, the single active triplet with the closest anchor-negative pair.
inline TripletList batch_hardest(const DistanceMatrix& m, const LabelVector& labels, const MiningConfig& cfg) {
  cfg.validate();
  detail::check_batch(m, labels);
  const auto g = detail::group_persons(labels);
  TripletList out;
  for (std::size_t p = 0; p < g.members.size(); ++p) {
    std::optional<Triplet> best;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int i : g.members[p]) {
      for (int j : g.members[p]) {
        if (j == i) continue;
        for (int k : g.negatives[p]) {
          if (detail::is_active(m, i, j, k, cfg.margin) && (!best || m(i, k) < best_dist)) {
            best = Triplet{i, j, k};
            best_dist = m(i, k);
          }
        }
      }
    }
    if (best) out.push_back(*best);
  }
  return out;
}

inline TripletList mine(const DistanceMatrix& m, const LabelVector& labels, const MiningConfig& cfg,
                        std::uint64_t draw_key = 0) {
  switch (cfg.strategy) {
    case Strategy::All: return batch_all(m, labels, cfg);
    case Strategy::Random: return batch_random(m, labels, cfg, draw_key);
    case Strategy::MinMin: return batch_min_min(m, labels, cfg);
    case Strategy::MinMax: return batch_min_max(m, labels, cfg);
    case Strategy::Hardest: return batch_hardest(m, labels, cfg);
  }
  throw ConfigError("unknown strategy tag " + std::to_string(static_cast<int>(cfg.strategy)));
}

}  // namespace tripletlab
