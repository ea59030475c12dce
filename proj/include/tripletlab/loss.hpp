#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "tripletlab/core.hpp"
#include "tripletlab/mining.hpp"
#include "tripletlab/random.hpp"

namespace tripletlab {

struct TripletLossResult {
  double total = 0.0;  // mean over the given triplets; 0 for an empty list
  std::vector<double> per_triplet;
  int active = 0;
};

namespace detail {

inline void check_triplet_indices(const FeatureMatrix& features, const TripletList& triplets) {
  const auto n = static_cast<int>(features.rows());
  for (const auto& t : triplets) {
    for (int idx : {t.anchor, t.positive, t.negative}) {
      if (idx < 0 || idx >= n) {
        throw Error("triplet index " + std::to_string(idx) + " out of range for " + std::to_string(n) + " rows");
      }
    }
  }
}

inline double triplet_hinge(const FeatureMatrix& f, const Triplet& t, double margin) {
  const double pos = (f.row(t.anchor) - f.row(t.positive)).squaredNorm();
  const double neg = (f.row(t.anchor) - f.row(t.negative)).squaredNorm();
  return pos + margin - neg;
}

}  // namespace detail

/// max(0, ||f_a - f_p||^2 + margin - ||f_a - f_n||^2), averaged over the list.
inline TripletLossResult triplet_loss(const FeatureMatrix& features, const TripletList& triplets, double margin) {
  detail::check_triplet_indices(features, triplets);
  TripletLossResult r;
  r.per_triplet.reserve(triplets.size());
  double sum = 0.0;
  for (const auto& t : triplets) {
    const double l = std::max(0.0, detail::triplet_hinge(features, t, margin));
    r.active += l > 0.0;
    r.per_triplet.push_back(l);
    sum += l;
  }
  if (!triplets.empty()) r.total = sum / static_cast<double>(triplets.size());
  return r;
}

inline Matrix triplet_loss_backward(const FeatureMatrix& features, const TripletList& triplets, double margin) {
  detail::check_triplet_indices(features, triplets);
  Matrix grad = Matrix::Zero(features.rows(), features.cols());
  if (triplets.empty()) return grad;
  const double scale = 2.0 / static_cast<double>(triplets.size());
  for (const auto& t : triplets) {
    if (!(detail::triplet_hinge(features, t, margin) > 0.0)) continue;
    const auto fa = features.row(t.anchor);
    const auto fp = features.row(t.positive);
    const auto fn = features.row(t.negative);
    grad.row(t.anchor) += scale * (fn - fp);
    grad.row(t.positive) += scale * (fp - fa);
    grad.row(t.negative) += scale * (fa - fn);
  }
  return grad;
}

/// Linear classifier on features, d x C weights, used for pretraining.
struct SoftmaxHead {
  Matrix weight;  // d x C
  Matrix bias;    // 1 x C

  int num_classes() const { return static_cast<int>(weight.cols()); }

  static SoftmaxHead init(int dim, int classes, std::uint64_t seed) {
    if (classes < 2) throw ConfigError("softmax head needs at least 2 identities");
    SoftmaxHead h{Matrix::Zero(dim, classes), Matrix::Zero(1, classes)};
    Rng rng(seed);
    std::normal_distribution<double> dist(0.0, std::sqrt(1.0 / static_cast<double>(dim)));
    for (Eigen::Index i = 0; i < h.weight.size(); ++i) h.weight.data()[i] = dist(rng);
    return h;
  }

  std::vector<Matrix*> blocks() { return {&weight, &bias}; }
  std::vector<const Matrix*> blocks() const { return {&weight, &bias}; }
};

struct SoftmaxResult {
  double loss = 0.0;  // mean cross-entropy
  int correct = 0;    // argmax hits
  Matrix grad_features;
  SoftmaxHead grad_head;
};

inline SoftmaxResult softmax_xent_forward_backward(const SoftmaxHead& head, const FeatureMatrix& features,
                                                   const LabelVector& labels) {
  if (features.cols() != head.weight.rows()) throw Error("softmax: feature dimension does not match head");
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) throw Error("softmax: label count mismatch");
  const int classes = head.num_classes();
  for (int l : labels) {
    if (l < 0 || l >= classes) {
      throw Error("softmax: label " + std::to_string(l) + " out of range [0, " + std::to_string(classes) + ")");
    }
  }
  const auto n = features.rows();
  Matrix logits = features * head.weight;
  logits.rowwise() += head.bias.row(0);

  SoftmaxResult r;
  Matrix dlogits(n, classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    const int y = labels[static_cast<std::size_t>(i)];
    r.loss -= logits(i, y) - mx - std::log(z);
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    r.correct += static_cast<int>(arg) == y;
    dlogits.row(i) = e / z;
    dlogits(i, y) -= 1.0;
  }
  if (n > 0) {
    r.loss /= static_cast<double>(n);
    dlogits /= static_cast<double>(n);
  }
  r.grad_features = dlogits * head.weight.transpose();
  r.grad_head.weight = features.transpose() * dlogits;
  r.grad_head.bias = dlogits.colwise().sum();
  return r;
}

}  // namespace tripletlab
