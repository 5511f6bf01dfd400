#pragma once

#include <cstdint>
#include <span>

#include "vitprobe/vit.hpp"

namespace vitprobe {

template <class T>
struct LossAndGrads {
  double loss = 0.0;
  ModelWeights<T> grads;  // same layout as the weights
};

/// Mean softmax cross-entropy over the batch and its exact gradient with
/// respect to every parameter tensor.
template <class T>
LossAndGrads<T> loss_and_grads(const BasicTensor<T>& images, std::span<const std::int32_t> labels,
                               const ModelWeights<T>& w, const ModelConfig& cfg);

/// Loss without gradients.
template <class T>
double batch_loss(const BasicTensor<T>& images, std::span<const std::int32_t> labels, const ModelWeights<T>& w,
                  const ModelConfig& cfg);

/// Mean cross-entropy of given logits [B x C].
template <class T>
double cross_entropy(const BasicTensor<T>& logits, std::span<const std::int32_t> labels);

}  // namespace vitprobe
