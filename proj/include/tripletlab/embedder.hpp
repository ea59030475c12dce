#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "tripletlab/core.hpp"
#include "tripletlab/random.hpp"

namespace tripletlab {

/// Fully connected net sizes[0] -> sizes[1] -> ... -> sizes.back(), tanh between
/// layers, linear last layer, L2-normalized output. Layer l computes
/// z = a * weights[l] + biases[l] on row-major batches.
struct EmbedderParams {
  std::vector<int> sizes;
  std::vector<Matrix> weights;  // sizes[l] x sizes[l+1]
  std::vector<Matrix> biases;   // 1 x sizes[l+1]

  int num_layers() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }

  /// Zero-filled parameters of the given shape.
  static EmbedderParams zeros(std::vector<int> layer_sizes) {
    if (layer_sizes.size() < 2) throw ConfigError("embedder needs at least an input and an output size");
    for (int s : layer_sizes) {
      if (s <= 0) throw ConfigError("embedder layer sizes must be positive");
    }
    EmbedderParams p;
    p.sizes = std::move(layer_sizes);
    for (std::size_t l = 0; l + 1 < p.sizes.size(); ++l) {
      p.weights.push_back(Matrix::Zero(p.sizes[l], p.sizes[l + 1]));
      p.biases.push_back(Matrix::Zero(1, p.sizes[l + 1]));
    }
    return p;
  }

  /// He-style fan-in initialization: W ~ N(0, 2 / fan_in), zero biases.
  static EmbedderParams init(std::vector<int> layer_sizes, std::uint64_t seed) {
    EmbedderParams p = zeros(std::move(layer_sizes));
    Rng rng(seed);
    for (auto& w : p.weights) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(w.rows())));
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    }
    return p;
  }

  std::vector<Matrix*> blocks() {
    std::vector<Matrix*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }

  std::vector<const Matrix*> blocks() const {
    std::vector<const Matrix*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }

  bool operator==(const EmbedderParams& o) const {
    if (sizes != o.sizes) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
    }
    return true;
  }
};

struct ForwardCache {
  std::vector<int> sizes;
  std::vector<Matrix> layer_inputs;  // input to each layer; [0] is the batch
  std::vector<Matrix> pre_activations;
  Vector norms;                      // ||z|| of each raw output row
  FeatureMatrix features;            // normalized output
};

struct EmbedResult {
  FeatureMatrix features;
  ForwardCache cache;
};

inline EmbedResult embed_forward(const EmbedderParams& params, const Matrix& inputs) {
  if (inputs.cols() != params.input_dim()) {
    throw Error("embed_forward: input dimension " + std::to_string(inputs.cols()) +
                " does not match embedder input " + std::to_string(params.input_dim()));
  }
  ForwardCache cache;
  cache.sizes = params.sizes;
  Matrix a = inputs;
  for (int l = 0; l < params.num_layers(); ++l) {
    Matrix z = a * params.weights[static_cast<std::size_t>(l)];
    z.rowwise() += params.biases[static_cast<std::size_t>(l)].row(0);
    cache.layer_inputs.push_back(std::move(a));
    cache.pre_activations.push_back(z);
    a = (l + 1 < params.num_layers()) ? Matrix(z.array().tanh()) : std::move(z);
  }
  cache.features = l2_normalize(a);
  cache.norms = a.rowwise().norm();
  FeatureMatrix features = cache.features;
  return {std::move(features), std::move(cache)};
}

inline FeatureMatrix embed(const EmbedderParams& params, const Matrix& inputs) {
  return embed_forward(params, inputs).features;
}

/// Back-propagates dL/dfeatures through the normalization and dense layers.
/// Returns gradients shaped like the parameters.
inline EmbedderParams embed_backward(const EmbedderParams& params, const ForwardCache& cache,
                                     const Matrix& grad_features) {
  if (cache.sizes != params.sizes || static_cast<int>(cache.layer_inputs.size()) != params.num_layers()) {
    throw Error("embed_backward: cache does not match the embedder architecture");
  }
  if (grad_features.rows() != cache.features.rows() || grad_features.cols() != cache.features.cols()) {
    throw Error("embed_backward: gradient shape does not match cached features");
  }
  EmbedderParams grads = EmbedderParams::zeros(params.sizes);

  // d f / d z = (I - f f^T) / ||z|| for f = z / ||z||.
  Matrix delta(grad_features.rows(), grad_features.cols());
  for (Eigen::Index r = 0; r < grad_features.rows(); ++r) {
    const auto f = cache.features.row(r);
    const double along = f.dot(grad_features.row(r));
    delta.row(r) = (grad_features.row(r) - along * f) / cache.norms(r);
  }

  for (int l = params.num_layers() - 1; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    grads.weights[ul] = cache.layer_inputs[ul].transpose() * delta;
    grads.biases[ul] = delta.colwise().sum();
    if (l > 0) {
      Matrix upstream = delta * params.weights[ul].transpose();
      // layer_inputs[l] = tanh(pre_activations[l-1])
      const auto& act = cache.layer_inputs[ul];
      delta = upstream.array() * (1.0 - act.array().square());
    }
  }
  return grads;
}

}  // namespace tripletlab
