#pragma once

#include <cstdint>
#include <deque>
#include <set>
#include <unordered_set>
#include <vector>

#include "tripletlab/dataset.hpp"
#include "tripletlab/embedder.hpp"
#include "tripletlab/mining.hpp"

namespace tripletlab {

/// Rolling window of the last `window` embedded batches. window = 1 is online
/// mining; larger windows give semi-online mining over a bigger effective P.
class FeaturePool {
 public:
  struct Batch {
    FeatureMatrix features;
    LabelVector labels;
    std::vector<int> sample_ids;
    long iteration = 0;
  };

  explicit FeaturePool(int window) : window_(window) {
    if (window < 1) throw ConfigError("pool window must be >= 1");
  }

  int window() const { return window_; }
  const std::deque<Batch>& batches() const { return batches_; }
  bool empty() const { return batches_.empty(); }

  int size() const {
    int n = 0;
    for (const auto& b : batches_) n += static_cast<int>(b.labels.size());
    return n;
  }

  /// Age of the oldest batch relative to the latest push.
  long max_age() const { return batches_.empty() ? 0 : latest_ - batches_.front().iteration; }

  void push(FeatureMatrix features, LabelVector labels, std::vector<int> sample_ids, long iteration) {
    if (features.rows() != static_cast<Eigen::Index>(labels.size()) || labels.size() != sample_ids.size()) {
      throw Error("pool push: features, labels and sample ids differ in length");
    }
    if (!batches_.empty() && iteration < latest_) throw Error("pool push: iterations must not decrease");
    latest_ = iteration;
    batches_.push_back({std::move(features), std::move(labels), std::move(sample_ids), iteration});
    while (static_cast<int>(batches_.size()) > window_ || latest_ - batches_.front().iteration >= window_) {
      batches_.pop_front();
    }
  }

  /// Pooled rows in insertion order. A sample id that appears again in a newer
  /// batch is represented only by its newest row.
  struct View {
    FeatureMatrix features;
    LabelVector labels;
    std::vector<int> sample_ids;
  };

  View view() const {
    std::vector<std::pair<std::size_t, Eigen::Index>> rows;
    std::unordered_set<int> newer;
    for (std::size_t b = batches_.size(); b-- > 0;) {
      const auto& batch = batches_[b];
      std::vector<std::pair<std::size_t, Eigen::Index>> kept;
      for (Eigen::Index r = 0; r < batch.features.rows(); ++r) {
        if (!newer.count(batch.sample_ids[static_cast<std::size_t>(r)])) kept.emplace_back(b, r);
      }
      for (int id : batch.sample_ids) newer.insert(id);
      rows.insert(rows.begin(), kept.begin(), kept.end());
    }
    View v;
    const Eigen::Index dim = batches_.empty() ? 0 : batches_.front().features.cols();
    v.features.resize(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& batch = batches_[rows[r].first];
      v.features.row(static_cast<Eigen::Index>(r)) = batch.features.row(rows[r].second);
      v.labels.push_back(batch.labels[static_cast<std::size_t>(rows[r].second)]);
      v.sample_ids.push_back(batch.sample_ids[static_cast<std::size_t>(rows[r].second)]);
    }
    return v;
  }

  /// Mines over every pooled row and returns triplets of dataset sample ids.
  TripletList mine(const MiningConfig& cfg, std::uint64_t draw_key = 0) const {
    if (batches_.empty()) throw Error("pool mine: pool is empty");
    const View v = view();
    if (std::set<int>(v.labels.begin(), v.labels.end()).size() < 2) return {};
    const TripletList rows = tripletlab::mine(pairwise_squared_distances(v.features), v.labels, cfg, draw_key);
    TripletList ids;
    ids.reserve(rows.size());
    for (const auto& t : rows) {
      ids.push_back({v.sample_ids[static_cast<std::size_t>(t.anchor)], v.sample_ids[static_cast<std::size_t>(t.positive)],
                     v.sample_ids[static_cast<std::size_t>(t.negative)]});
    }
    return ids;
  }

 private:
  int window_;
  long latest_ = 0;
  std::deque<Batch> batches_;
};

/// Embeds the whole dataset with the current parameters and mines once over
/// the full distance matrix. Returned triplets hold dataset sample ids.
inline TripletList offline_mine(const LabeledDataset& dataset, const EmbedderParams& params, const MiningConfig& cfg,
                                std::uint64_t draw_key = 0) {
  if (dataset.identities_with_at_least(1) < 2 || dataset.identities_with_at_least(2) < 1) return {};
  const FeatureMatrix features = embed(params, dataset.inputs);
  return mine(pairwise_squared_distances(features), dataset.labels, cfg, draw_key);
}

}  // namespace tripletlab
