// Copyright 2026 The chanprune Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CHANPRUNE_ENGINE_HPP
#define CHANPRUNE_ENGINE_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "chanprune/graph.hpp"
#include "chanprune/tensor.hpp"
#include "chanprune/weights.hpp"

namespace chanprune {

enum class Mode { kTrain, kEval };

/// Per-layer input-channel multipliers. An empty outer vector (or an empty
/// entry) means "no mask" for that layer.
template <typename T> using InputMasks = std::vector<std::vector<T>>;

/// Everything backward needs from one forward evaluation.
template <typename T> struct Tape {
  Mode mode = Mode::kEval;
  std::int64_t batch = 0;
  std::vector<Tensor<T>> values;        // per layer output, (N, c, h, w)
  std::vector<Tensor<T>> masked_inputs; // per prunable layer, A * m
  InputMasks<T> masks;                  // multipliers that were applied
  std::vector<std::vector<T>> bn_mean;  // batch (train) or running (eval) statistics
  std::vector<std::vector<T>> bn_var;
  std::vector<std::vector<std::int32_t>> pool_argmax;
  Tensor<T> probs; // softmax of the logits, (N, classes)
  std::vector<std::uint32_t> labels;
  std::vector<T> sample_losses;
};

template <typename T> struct ForwardResult {
  double loss = 0.0; // mean softmax cross-entropy over the batch
  Tape<T> tape;
};

template <typename T> struct Gradients {
  /// d(mean loss)/d(parameter) for every trainable tensor present.
  TensorMap<T> params;
  /// Per prunable layer: per-sample gradient dL_n/dA~_n of the masked input,
  /// i.e. the batch gradient slice scaled by N. Zero on channels whose mask
  /// is exactly 0.
  std::vector<Tensor<T>> act_grads;
};

/// Evaluates the graph on `batch` (N, c, h, w) with masks on every prunable
/// layer input. BatchNorm uses batch statistics in train mode and running
/// statistics in eval mode. Throws NonFiniteLoss on NaN/Inf loss.
/// Instantiated for float, double and (forward only) long double.
template <typename T>
ForwardResult<T> forward(const CompGraph &graph, const TensorMap<T> &params,
                         const InputMasks<T> &masks, const Tensor<T> &batch,
                         std::span<const std::uint32_t> labels, Mode mode);

template <typename T>
Gradients<T> backward(const CompGraph &graph, const TensorMap<T> &params, const Tape<T> &tape);

/// Folds the batch statistics of a train-mode tape into the BN running stats.
void update_running_stats(const CompGraph &graph, WeightStore &weights, const Tape<float> &tape);

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

/// Momentum buffers keyed by tensor name.
struct SgdState {
  TensorMap<float> velocity;
};

/// v <- momentum * v + (g + weight_decay * w);  w <- w - lr * v.
/// Running statistics are never touched.
void sgd_step(WeightStore &weights, const TensorMap<float> &grads, const SgdConfig &config,
              SgdState &state);

} // namespace chanprune

#endif
