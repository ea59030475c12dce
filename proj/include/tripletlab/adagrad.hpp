#pragma once

#include <cmath>
#include <concepts>
#include <vector>

#include "tripletlab/core.hpp"

namespace tripletlab {

/// Anything that exposes its trainable matrices as an ordered list of blocks.
template <class T>
concept ParameterBlocks = requires(T& t, const T& ct) {
  { t.blocks() } -> std::same_as<std::vector<Matrix*>>;
  { ct.blocks() } -> std::same_as<std::vector<const Matrix*>>;
};

struct AdagradState {
  double learning_rate = 0.001;
  double epsilon = 1e-8;
  std::vector<Matrix> accumulators;  // sum of squared gradients, one per block
};

/// accumulator += g^2; param -= lr * g / (sqrt(accumulator) + eps)
template <ParameterBlocks Params>
void adagrad_step(AdagradState& state, Params& params, const Params& grads) {
  auto p = params.blocks();
  const auto g = grads.blocks();
  if (p.size() != g.size()) throw Error("adagrad_step: parameter and gradient block counts differ");
  if (state.accumulators.empty()) {
    for (const Matrix* block : p) state.accumulators.push_back(Matrix::Zero(block->rows(), block->cols()));
  }
  if (state.accumulators.size() != p.size()) throw Error("adagrad_step: optimizer state has wrong block count");
  for (std::size_t b = 0; b < p.size(); ++b) {
    Matrix& acc = state.accumulators[b];
    if (p[b]->rows() != g[b]->rows() || p[b]->cols() != g[b]->cols() || acc.rows() != p[b]->rows() ||
        acc.cols() != p[b]->cols()) {
      throw Error("adagrad_step: shape mismatch in block " + std::to_string(b));
    }
    acc.array() += g[b]->array().square();
    p[b]->array() -= state.learning_rate * g[b]->array() / (acc.array().sqrt() + state.epsilon);
  }
}

}  // namespace tripletlab
