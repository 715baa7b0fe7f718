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

#include "chanprune/graph.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include "chanprune/error.hpp"
#include "chanprune/tensor.hpp"

namespace chanprune {

using nlohmann::json;

std::string dims_to_string(const Dims &dims) {
  std::string s = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + ")";
}

std::string Shape::to_string() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

namespace {

struct KindEntry {
  std::string_view name;
  LayerKind kind;
};

constexpr KindEntry kKindNames[] = {
    {"input", LayerKind::kInput},
    {"conv", LayerKind::kConv},
    {"fc", LayerKind::kFC},
    {"batchnorm", LayerKind::kBatchNorm},
    {"relu", LayerKind::kReLU},
    {"maxpool", LayerKind::kMaxPool},
    {"avgpool", LayerKind::kAvgPool},
    {"global_avg_pool", LayerKind::kGlobalAvgPool},
    {"add", LayerKind::kAdd},
    {"concat", LayerKind::kConcat},
    {"flatten", LayerKind::kFlatten},
    {"output", LayerKind::kOutput},
};

constexpr KindEntry kKindAliases[] = {
    {"linear", LayerKind::kFC},
    {"bn", LayerKind::kBatchNorm},
    {"gap", LayerKind::kGlobalAvgPool},
};

[[noreturn]] void shape_mismatch(const std::string &id, const std::string &expected,
                                 const std::string &actual) {
  fail(ErrorCode::kShapeMismatch,
       "layer '" + id + "': expected " + expected + ", got " + actual);
}

void expect_arity(const Layer &l, std::size_t lo, std::size_t hi) {
  if (l.inputs.size() < lo || l.inputs.size() > hi) {
    std::string want = lo == hi ? std::to_string(lo)
                                : (hi == SIZE_MAX ? "at least " + std::to_string(lo)
                                                  : std::to_string(lo) + ".." + std::to_string(hi));
    shape_mismatch(l.id, want + " input(s)", std::to_string(l.inputs.size()) + " input(s)");
  }
}

std::int64_t window_out(std::int64_t in, int k, int s, int p) {
  std::int64_t span = in + 2 * p - k;
  if (span < 0) return 0;
  return span / s + 1;
}

Shape infer_shape(const Layer &l, const std::vector<Shape> &in) {
  const auto &a = l.attrs;
  switch (l.kind) {
  case LayerKind::kInput:
    expect_arity(l, 0, 0);
    return a.input_shape;
  case LayerKind::kConv: {
    expect_arity(l, 1, 1);
    const Shape &x = in[0];
    if (a.groups < 1 || a.out_channels < 1)
      fail(ErrorCode::kShapeMismatch, "layer '" + l.id + "': groups and out_channels must be >= 1");
    if (x.c % a.groups != 0)
      shape_mismatch(l.id, "input channels divisible by groups=" + std::to_string(a.groups),
                     std::to_string(x.c) + " channels");
    if (a.out_channels % a.groups != 0)
      shape_mismatch(l.id, "out_channels divisible by groups=" + std::to_string(a.groups),
                     std::to_string(a.out_channels));
    Shape y{x.n, a.out_channels, window_out(x.h, a.kernel_h, a.stride_h, a.pad_h),
            window_out(x.w, a.kernel_w, a.stride_w, a.pad_w)};
    if (y.h < 1 || y.w < 1)
      shape_mismatch(l.id, "spatial extent >= kernel", x.to_string());
    return y;
  }
  case LayerKind::kFC: {
    expect_arity(l, 1, 1);
    const Shape &x = in[0];
    if (x.h != 1 || x.w != 1)
      shape_mismatch(l.id, Shape{x.n, x.c, 1, 1}.to_string(), x.to_string());
    if (a.out_channels < 1)
      fail(ErrorCode::kShapeMismatch, "layer '" + l.id + "': out_channels must be >= 1");
    return Shape{x.n, a.out_channels, 1, 1};
  }
  case LayerKind::kBatchNorm:
  case LayerKind::kReLU:
  case LayerKind::kOutput:
    expect_arity(l, 1, 1);
    return in[0];
  case LayerKind::kMaxPool:
  case LayerKind::kAvgPool: {
    expect_arity(l, 1, 1);
    const Shape &x = in[0];
    Shape y{x.n, x.c, window_out(x.h, a.kernel_h, a.stride_h, a.pad_h),
            window_out(x.w, a.kernel_w, a.stride_w, a.pad_w)};
    if (y.h < 1 || y.w < 1)
      shape_mismatch(l.id, "spatial extent >= kernel", x.to_string());
    return y;
  }
  case LayerKind::kGlobalAvgPool:
    expect_arity(l, 1, 1);
    return Shape{in[0].n, in[0].c, 1, 1};
  case LayerKind::kFlatten:
    expect_arity(l, 1, 1);
    return Shape{in[0].n, in[0].c * in[0].h * in[0].w, 1, 1};
  case LayerKind::kAdd: {
    expect_arity(l, 2, SIZE_MAX);
    for (std::size_t i = 1; i < in.size(); ++i)
      if (!(in[i] == in[0])) shape_mismatch(l.id, in[0].to_string(), in[i].to_string());
    return in[0];
  }
  case LayerKind::kConcat: {
    expect_arity(l, 1, SIZE_MAX);
    Shape y = in[0];
    for (std::size_t i = 1; i < in.size(); ++i) {
      if (in[i].n != y.n || in[i].h != y.h || in[i].w != y.w)
        shape_mismatch(l.id, "(" + std::to_string(y.n) + ",*," + std::to_string(y.h) + "," +
                                 std::to_string(y.w) + ")",
                       in[i].to_string());
      y.c += in[i].c;
    }
    return y;
  }
  }
  fail(ErrorCode::kUnsupportedKind, "layer '" + l.id + "'");
}

// Returns one cycle among `remaining` as "a -> b -> a".
std::string describe_cycle(const std::vector<Layer> &layers,
                           const std::vector<std::vector<std::size_t>> &inputs,
                           const std::vector<bool> &remaining) {
  std::vector<int> state(layers.size(), 0);
  std::vector<std::size_t> stack;
  std::string result;
  std::function<bool(std::size_t)> visit = [&](std::size_t v) -> bool {
    state[v] = 1;
    stack.push_back(v);
    for (std::size_t u : inputs[v]) {
      if (!remaining[u]) continue;
      if (state[u] == 1) {
        auto it = std::find(stack.begin(), stack.end(), u);
        std::vector<std::size_t> cyc(it, stack.end());
        std::reverse(cyc.begin(), cyc.end());
        for (std::size_t k = 0; k < cyc.size(); ++k) result += layers[cyc[k]].id + " -> ";
        result += layers[cyc.front()].id;
        return true;
      }
      if (state[u] == 0 && visit(u)) return true;
    }
    state[v] = 2;
    stack.pop_back();
    return false;
  };
  for (std::size_t v = 0; v < layers.size(); ++v)
    if (remaining[v] && state[v] == 0 && visit(v)) break;
  return result;
}

} // namespace

std::string_view kind_name(LayerKind kind) {
  for (const auto &e : kKindNames)
    if (e.kind == kind) return e.name;
  return "unknown";
}

std::optional<LayerKind> kind_from_name(std::string_view name) {
  for (const auto &e : kKindNames)
    if (e.name == name) return e.kind;
  for (const auto &e : kKindAliases)
    if (e.name == name) return e.kind;
  return std::nullopt;
}

std::size_t CompGraph::index_of(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end())
    fail(ErrorCode::kUnknownLayerReference, "no layer with id '" + std::string(id) + "'");
  return it->second;
}

bool CompGraph::contains(std::string_view id) const { return index_.find(id) != index_.end(); }

const Shape &CompGraph::input_shape(std::size_t index) const {
  const auto &ins = inputs_.at(index);
  if (ins.empty())
    fail(ErrorCode::kInternal, "layer '" + layers_.at(index).id + "' has no inputs");
  return shapes_.at(ins.front());
}

std::vector<std::size_t> CompGraph::input_layer_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].kind == LayerKind::kInput) out.push_back(i);
  return out;
}

std::vector<std::size_t> CompGraph::prunable_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].is_prunable()) out.push_back(i);
  return out;
}

CompGraph CompGraph::build(std::vector<Layer> layers, const std::string &output_id) {
  std::map<std::string, std::size_t, std::less<>> pos;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].id.empty()) fail(ErrorCode::kParseError, "layer with empty id");
    if (!pos.emplace(layers[i].id, i).second)
      fail(ErrorCode::kDuplicateLayer, "layer id '" + layers[i].id + "' appears twice");
  }
  std::vector<std::vector<std::size_t>> in_idx(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (const auto &ref : layers[i].inputs) {
      auto it = pos.find(ref);
      if (it == pos.end())
        fail(ErrorCode::kUnknownLayerReference,
             "layer '" + layers[i].id + "' references unknown input '" + ref + "'");
      in_idx[i].push_back(it->second);
    }
  }

  // Kahn's algorithm, ties broken by manifest order so the result is stable.
  std::vector<std::size_t> pending(layers.size());
  std::vector<std::vector<std::size_t>> users(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    pending[i] = in_idx[i].size();
    for (std::size_t u : in_idx[i]) users[u].push_back(i);
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (pending[i] == 0) ready.push(i);
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    std::size_t v = ready.top();
    ready.pop();
    order.push_back(v);
    for (std::size_t u : users[v])
      if (--pending[u] == 0) ready.push(u);
  }
  if (order.size() != layers.size()) {
    std::vector<bool> remaining(layers.size(), true);
    for (std::size_t v : order) remaining[v] = false;
    fail(ErrorCode::kCycleDetected, describe_cycle(layers, in_idx, remaining));
  }

  CompGraph g;
  std::vector<std::size_t> new_pos(layers.size());
  for (std::size_t k = 0; k < order.size(); ++k) new_pos[order[k]] = k;
  g.layers_.reserve(layers.size());
  g.inputs_.resize(layers.size());
  g.consumers_.resize(layers.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    g.layers_.push_back(std::move(layers[order[k]]));
    for (std::size_t u : in_idx[order[k]]) g.inputs_[k].push_back(new_pos[u]);
  }
  for (std::size_t k = 0; k < g.layers_.size(); ++k) {
    g.index_.emplace(g.layers_[k].id, k);
    for (std::size_t u : g.inputs_[k]) {
      auto &c = g.consumers_[u];
      if (std::find(c.begin(), c.end(), k) == c.end()) c.push_back(k);
    }
  }

  std::size_t n_inputs = 0, n_outputs = 0;
  for (const auto &l : g.layers_) {
    n_inputs += l.kind == LayerKind::kInput;
    n_outputs += l.kind == LayerKind::kOutput;
  }
  if (n_inputs == 0) fail(ErrorCode::kParseError, "graph has no Input layer");
  if (n_outputs != 1)
    fail(ErrorCode::kParseError,
         "graph must have exactly one Output layer, found " + std::to_string(n_outputs));
  auto out_it = g.index_.find(output_id);
  if (out_it == g.index_.end())
    fail(ErrorCode::kUnknownLayerReference, "output references unknown layer '" + output_id + "'");
  if (g.layers_[out_it->second].kind != LayerKind::kOutput)
    fail(ErrorCode::kParseError, "output '" + output_id + "' is not an Output layer");
  g.output_index_ = out_it->second;

  g.shapes_.resize(g.layers_.size());
  for (std::size_t k = 0; k < g.layers_.size(); ++k) {
    std::vector<Shape> in;
    for (std::size_t u : g.inputs_[k]) in.push_back(g.shapes_[u]);
    g.shapes_[k] = infer_shape(g.layers_[k], in);
  }
  return g;
}

namespace {

// int or [a, b] pair
std::pair<int, int> read_pair(const json &attrs, const char *key, std::pair<int, int> fallback) {
  if (!attrs.contains(key)) return fallback;
  const auto &v = attrs.at(key);
  if (v.is_number_integer()) return {v.get<int>(), v.get<int>()};
  if (v.is_array() && v.size() == 2) return {v[0].get<int>(), v[1].get<int>()};
  fail(ErrorCode::kParseError, std::string("attribute '") + key + "' must be an int or [h, w]");
}

Layer parse_layer(const json &j) {
  Layer l;
  l.id = j.at("id").get<std::string>();
  const auto kind_str = j.at("kind").get<std::string>();
  auto kind = kind_from_name(kind_str);
  if (!kind || *kind == LayerKind::kInput)
    fail(ErrorCode::kUnsupportedKind, "layer '" + l.id + "' has unsupported kind '" + kind_str + "'");
  l.kind = *kind;
  if (j.contains("inputs")) l.inputs = j.at("inputs").get<std::vector<std::string>>();
  const json attrs = j.contains("attrs") ? j.at("attrs") : json::object();
  auto &a = l.attrs;
  switch (l.kind) {
  case LayerKind::kConv: {
    a.out_channels = attrs.at("out_channels").get<std::int64_t>();
    std::tie(a.kernel_h, a.kernel_w) = read_pair(attrs, "kernel", {1, 1});
    std::tie(a.stride_h, a.stride_w) = read_pair(attrs, "stride", {1, 1});
    std::tie(a.pad_h, a.pad_w) = read_pair(attrs, "padding", {0, 0});
    a.groups = attrs.value("groups", std::int64_t{1});
    a.bias = attrs.value("bias", true);
    break;
  }
  case LayerKind::kFC:
    a.out_channels = attrs.at("out_channels").get<std::int64_t>();
    a.bias = attrs.value("bias", true);
    break;
  case LayerKind::kBatchNorm:
    a.eps = attrs.value("eps", 1e-5);
    a.momentum = attrs.value("momentum", 0.1);
    break;
  case LayerKind::kMaxPool:
  case LayerKind::kAvgPool: {
    std::tie(a.kernel_h, a.kernel_w) = read_pair(attrs, "kernel", {2, 2});
    std::tie(a.stride_h, a.stride_w) = read_pair(attrs, "stride", {a.kernel_h, a.kernel_w});
    std::tie(a.pad_h, a.pad_w) = read_pair(attrs, "padding", {0, 0});
    break;
  }
  default:
    break;
  }
  if (a.kernel_h < 1 || a.kernel_w < 1 || a.stride_h < 1 || a.stride_w < 1 || a.pad_h < 0 ||
      a.pad_w < 0)
    fail(ErrorCode::kParseError, "layer '" + l.id + "' has invalid kernel/stride/padding");
  return l;
}

} // namespace

CompGraph parse_graph(const json &manifest) {
  try {
    if (!manifest.is_object()) fail(ErrorCode::kParseError, "manifest must be a JSON object");
    std::vector<Layer> layers;
    for (const auto &in : manifest.at("inputs")) {
      Layer l;
      l.id = in.at("id").get<std::string>();
      l.kind = LayerKind::kInput;
      auto shape = in.at("shape").get<std::vector<std::int64_t>>();
      if (shape.size() != 4)
        fail(ErrorCode::kParseError, "input '" + l.id + "' shape must be [n, c, h, w]");
      for (auto d : shape)
        if (d < 1) fail(ErrorCode::kParseError, "input '" + l.id + "' has non-positive dim");
      l.attrs.input_shape = Shape{shape[0], shape[1], shape[2], shape[3]};
      layers.push_back(std::move(l));
    }
    for (const auto &j : manifest.at("layers")) layers.push_back(parse_layer(j));
    return CompGraph::build(std::move(layers), manifest.at("output").get<std::string>());
  } catch (const json::exception &e) {
    fail(ErrorCode::kParseError, e.what());
  }
}

CompGraph parse_graph_text(std::string_view manifest_text) {
  json j;
  try {
    j = json::parse(manifest_text);
  } catch (const json::exception &e) {
    fail(ErrorCode::kParseError, e.what());
  }
  return parse_graph(j);
}

CompGraph load_graph_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open graph manifest '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_graph_text(ss.str());
}

nlohmann::ordered_json serialize_graph(const CompGraph &graph) {
  using ojson = nlohmann::ordered_json;
  ojson inputs = ojson::array();
  ojson layers = ojson::array();
  for (std::size_t k = 0; k < graph.size(); ++k) {
    const Layer &l = graph.layer(k);
    const auto &a = l.attrs;
    if (l.kind == LayerKind::kInput) {
      const Shape &s = a.input_shape;
      inputs.push_back(ojson{{"id", l.id}, {"shape", {s.n, s.c, s.h, s.w}}});
      continue;
    }
    ojson attrs = ojson::object();
    switch (l.kind) {
    case LayerKind::kConv:
      attrs["out_channels"] = a.out_channels;
      attrs["kernel"] = {a.kernel_h, a.kernel_w};
      attrs["stride"] = {a.stride_h, a.stride_w};
      attrs["padding"] = {a.pad_h, a.pad_w};
      attrs["groups"] = a.groups;
      attrs["bias"] = a.bias;
      break;
    case LayerKind::kFC:
      attrs["out_channels"] = a.out_channels;
      attrs["bias"] = a.bias;
      break;
    case LayerKind::kBatchNorm:
      attrs["eps"] = a.eps;
      attrs["momentum"] = a.momentum;
      break;
    case LayerKind::kMaxPool:
    case LayerKind::kAvgPool:
      attrs["kernel"] = {a.kernel_h, a.kernel_w};
      attrs["stride"] = {a.stride_h, a.stride_w};
      attrs["padding"] = {a.pad_h, a.pad_w};
      break;
    default:
      break;
    }
    ojson entry;
    entry["id"] = l.id;
    entry["kind"] = std::string(kind_name(l.kind));
    entry["inputs"] = l.inputs;
    entry["attrs"] = attrs;
    layers.push_back(std::move(entry));
  }
  ojson out;
  out["inputs"] = inputs;
  out["layers"] = layers;
  out["output"] = graph.output_id();
  return out;
}

} // namespace chanprune
