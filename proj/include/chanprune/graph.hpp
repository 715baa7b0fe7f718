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

#ifndef CHANPRUNE_GRAPH_HPP
#define CHANPRUNE_GRAPH_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace chanprune {

enum class LayerKind {
  kInput,
  kConv,
  kFC,
  kBatchNorm,
  kReLU,
  kMaxPool,
  kAvgPool,
  kGlobalAvgPool,
  kAdd,
  kConcat,
  kFlatten,
  kOutput,
};

std::string_view kind_name(LayerKind kind);
/// Accepts the canonical manifest names plus a few common aliases.
std::optional<LayerKind> kind_from_name(std::string_view name);

/// Activation shape in (n, c, h, w). Fully-connected activations use h = w = 1.
struct Shape {
  std::int64_t n = 1;
  std::int64_t c = 1;
  std::int64_t h = 1;
  std::int64_t w = 1;

  std::int64_t numel() const { return n * c * h * w; }
  std::int64_t spatial() const { return h * w; }
  bool operator==(const Shape &) const = default;
  std::string to_string() const;
};

struct LayerAttrs {
  Shape input_shape;         // Input only
  std::int64_t out_channels = 0; // Conv, FC
  int kernel_h = 1;
  int kernel_w = 1;
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;
  std::int64_t groups = 1; // Conv
  bool bias = true;        // Conv, FC
  double eps = 1e-5;       // BatchNorm
  double momentum = 0.1;   // BatchNorm
};

struct Layer {
  std::string id;
  LayerKind kind = LayerKind::kInput;
  std::vector<std::string> inputs;
  LayerAttrs attrs;

  bool is_prunable() const { return kind == LayerKind::kConv || kind == LayerKind::kFC; }
  /// Grouped convolution with more than one group (includes depth-wise).
  bool is_grouped_conv() const { return kind == LayerKind::kConv && attrs.groups > 1; }
};

/// Validated, topologically ordered DAG of layers with inferred output shapes.
/// Immutable after construction.
class CompGraph {
public:
  /// Validates references, orders topologically and infers shapes.
  /// `layers` must contain the Input layers; `output_id` names the Output layer.
  static CompGraph build(std::vector<Layer> layers, const std::string &output_id);

  std::size_t size() const { return layers_.size(); }
  const std::vector<Layer> &layers() const { return layers_; }
  const Layer &layer(std::size_t index) const { return layers_.at(index); }
  const Layer &layer(std::string_view id) const { return layers_.at(index_of(id)); }
  std::size_t index_of(std::string_view id) const;
  bool contains(std::string_view id) const;

  const Shape &shape(std::size_t index) const { return shapes_.at(index); }
  const Shape &shape(std::string_view id) const { return shapes_.at(index_of(id)); }
  /// Shape of the first input feeding `index` (the layer's operand for unary ops).
  const Shape &input_shape(std::size_t index) const;

  const std::vector<std::size_t> &input_indices(std::size_t index) const { return inputs_.at(index); }
  const std::vector<std::size_t> &consumers(std::size_t index) const { return consumers_.at(index); }

  std::size_t output_index() const { return output_index_; }
  const std::string &output_id() const { return layers_[output_index_].id; }
  std::vector<std::size_t> input_layer_indices() const;
  std::vector<std::size_t> prunable_indices() const;

private:
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
  std::vector<std::vector<std::size_t>> inputs_;
  std::vector<std::vector<std::size_t>> consumers_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::size_t output_index_ = 0;
};

/// Parses the JSON graph manifest: {inputs:[{id,shape}], layers:[{id,kind,inputs,attrs}], output}.
CompGraph parse_graph(const nlohmann::json &manifest);
CompGraph parse_graph_text(std::string_view manifest_text);
CompGraph load_graph_file(const std::string &path);

/// Canonical manifest for `graph`; parse_graph(serialize_graph(g)) reproduces g.
nlohmann::ordered_json serialize_graph(const CompGraph &graph);

} // namespace chanprune

#endif
