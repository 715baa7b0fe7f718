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

#ifndef CHANPRUNE_WEIGHTS_HPP
#define CHANPRUNE_WEIGHTS_HPP

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "chanprune/graph.hpp"
#include "chanprune/tensor.hpp"
#include "json.hpp"

namespace chanprune {

template <typename T> using TensorMap = std::map<std::string, Tensor<T>, std::less<>>;

struct TensorSpec {
  std::string name;
  Dims dims;
  bool required = true;
  bool trainable = true;
};

/// Every parameter tensor `graph` needs, in graph order. Conv weights are
/// (c_o, c_i/g, k_h, k_w), FC weights (c_o, c_i), biases and BN vectors (c).
std::vector<TensorSpec> parameter_specs(const CompGraph &graph);

bool is_trainable_name(std::string_view name);

/// Named float32 parameters, including BN running statistics.
class WeightStore {
public:
  WeightStore() = default;
  explicit WeightStore(TensorMap<float> tensors) : tensors_(std::move(tensors)) {}

  bool contains(std::string_view name) const { return tensors_.find(name) != tensors_.end(); }
  const Tensor<float> &at(std::string_view name) const;
  Tensor<float> &at(std::string_view name);
  void set(const std::string &name, Tensor<float> t) { tensors_[name] = std::move(t); }
  const TensorMap<float> &tensors() const { return tensors_; }
  TensorMap<float> &tensors() { return tensors_; }

  /// Number of trainable scalars (running statistics excluded).
  std::int64_t trainable_count() const;

  template <typename T> TensorMap<T> as() const {
    TensorMap<T> out;
    for (const auto &[name, t] : tensors_) out.emplace(name, t.template cast<T>());
    return out;
  }

  bool operator==(const WeightStore &other) const;

private:
  TensorMap<float> tensors_;
};

/// Parses the weight index ([{name, shape, offset_bytes}]) against a raw
/// little-endian float32 blob, then checks every tensor `graph` requires.
WeightStore load_weights(const CompGraph &graph, std::span<const std::byte> blob,
                         const nlohmann::json &index);
WeightStore load_weights_files(const CompGraph &graph, const std::string &blob_path,
                               const std::string &index_path);

/// Checks presence and shapes of every tensor `graph` needs.
void validate_weights(const CompGraph &graph, const WeightStore &weights);

struct SerializedWeights {
  std::vector<std::byte> blob;
  nlohmann::ordered_json index;
};

/// Tensors in graph parameter order, followed by any extra names.
SerializedWeights serialize_weights(const CompGraph &graph, const WeightStore &weights);
void save_weights_files(const CompGraph &graph, const WeightStore &weights,
                        const std::string &blob_path, const std::string &index_path);

/// He-normal conv/FC weights, zero biases, unit BN scale and running variance.
WeightStore init_weights(const CompGraph &graph, std::uint64_t seed);

} // namespace chanprune

#endif
