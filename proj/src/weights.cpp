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

#include "chanprune/weights.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>

#include "chanprune/error.hpp"

namespace chanprune {

using nlohmann::json;

namespace {

std::uint32_t load_le32(const std::byte *p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint32_t>(p[i]);
  return v;
}

void store_le32(std::byte *p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::byte>((v >> (8 * i)) & 0xFFu);
}

} // namespace

std::vector<TensorSpec> parameter_specs(const CompGraph &graph) {
  std::vector<TensorSpec> specs;
  for (std::size_t k = 0; k < graph.size(); ++k) {
    const Layer &l = graph.layer(k);
    const auto &a = l.attrs;
    switch (l.kind) {
    case LayerKind::kConv: {
      const auto ci = graph.input_shape(k).c;
      specs.push_back({l.id + ".weight", {a.out_channels, ci / a.groups, a.kernel_h, a.kernel_w}});
      specs.push_back({l.id + ".bias", {a.out_channels}, false});
      break;
    }
    case LayerKind::kFC:
      specs.push_back({l.id + ".weight", {a.out_channels, graph.input_shape(k).c}});
      specs.push_back({l.id + ".bias", {a.out_channels}, false});
      break;
    case LayerKind::kBatchNorm: {
      const auto c = graph.shape(k).c;
      specs.push_back({l.id + ".weight", {c}});
      specs.push_back({l.id + ".bias", {c}});
      specs.push_back({l.id + ".running_mean", {c}, true, false});
      specs.push_back({l.id + ".running_var", {c}, true, false});
      break;
    }
    default:
      break;
    }
  }
  return specs;
}

bool is_trainable_name(std::string_view name) {
  auto ends_with = [&](std::string_view s) {
    return name.size() >= s.size() && name.substr(name.size() - s.size()) == s;
  };
  return !ends_with(".running_mean") && !ends_with(".running_var");
}

const Tensor<float> &WeightStore::at(std::string_view name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) fail(ErrorCode::kMissingTensor, std::string(name));
  return it->second;
}

Tensor<float> &WeightStore::at(std::string_view name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) fail(ErrorCode::kMissingTensor, std::string(name));
  return it->second;
}

std::int64_t WeightStore::trainable_count() const {
  std::int64_t total = 0;
  for (const auto &[name, t] : tensors_)
    if (is_trainable_name(name)) total += t.numel();
  return total;
}

bool WeightStore::operator==(const WeightStore &other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (const auto &[name, t] : tensors_) {
    auto it = other.tensors_.find(name);
    if (it == other.tensors_.end() || it->second.dims() != t.dims() ||
        it->second.values() != t.values())
      return false;
  }
  return true;
}

void validate_weights(const CompGraph &graph, const WeightStore &weights) {
  for (const auto &spec : parameter_specs(graph)) {
    if (!weights.contains(spec.name)) {
      if (spec.required) fail(ErrorCode::kMissingTensor, spec.name);
      continue;
    }
    const auto &dims = weights.at(spec.name).dims();
    if (dims != spec.dims)
      fail(ErrorCode::kShapeMismatch, "tensor '" + spec.name + "': expected " +
                                          dims_to_string(spec.dims) + ", got " +
                                          dims_to_string(dims));
  }
}

WeightStore load_weights(const CompGraph &graph, std::span<const std::byte> blob,
                         const json &index) {
  if (!index.is_array()) fail(ErrorCode::kParseError, "weight index must be a JSON list");
  struct Entry {
    std::string name;
    Dims dims;
    std::uint64_t offset;
    std::uint64_t bytes;
  };
  std::vector<Entry> entries;
  try {
    for (const auto &e : index) {
      Entry en;
      en.name = e.at("name").get<std::string>();
      en.dims = e.at("shape").get<Dims>();
      en.offset = e.at("offset_bytes").get<std::uint64_t>();
      if (e.contains("dtype") && e.at("dtype").get<std::string>() != "float32")
        fail(ErrorCode::kParseError, "tensor '" + en.name + "' has unsupported dtype");
      if (en.dims.empty() || en.dims.size() > 4)
        fail(ErrorCode::kParseError, "tensor '" + en.name + "' must have rank 1..4");
      for (auto d : en.dims)
        if (d < 1) fail(ErrorCode::kParseError, "tensor '" + en.name + "' has non-positive dim");
      en.bytes = static_cast<std::uint64_t>(dims_numel(en.dims)) * 4u;
      entries.push_back(std::move(en));
    }
  } catch (const json::exception &e) {
    fail(ErrorCode::kParseError, std::string("weight index: ") + e.what());
  }

  std::set<std::string> seen;
  for (const auto &e : entries)
    if (!seen.insert(e.name).second)
      fail(ErrorCode::kParseError, "tensor '" + e.name + "' listed twice in weight index");

  std::vector<const Entry *> by_offset;
  for (const auto &e : entries) by_offset.push_back(&e);
  std::sort(by_offset.begin(), by_offset.end(),
            [](const Entry *a, const Entry *b) { return a->offset < b->offset; });
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < by_offset.size(); ++i) {
    const Entry &e = *by_offset[i];
    if (e.offset + e.bytes > blob.size())
      fail(ErrorCode::kTruncatedBlob, "tensor '" + e.name + "' needs bytes [" +
                                          std::to_string(e.offset) + ", " +
                                          std::to_string(e.offset + e.bytes) + ") but blob has " +
                                          std::to_string(blob.size()));
    if (i + 1 < by_offset.size() && e.offset + e.bytes > by_offset[i + 1]->offset)
      fail(ErrorCode::kParseError,
           "tensors '" + e.name + "' and '" + by_offset[i + 1]->name + "' overlap in blob");
    total += e.bytes;
  }
  if (total != blob.size())
    fail(ErrorCode::kParseError, "blob has " + std::to_string(blob.size()) +
                                     " bytes but index accounts for " + std::to_string(total));

  TensorMap<float> tensors;
  for (const auto &e : entries) {
    std::vector<float> data(static_cast<std::size_t>(e.bytes / 4));
    const std::byte *p = blob.data() + e.offset;
    for (std::size_t i = 0; i < data.size(); ++i)
      data[i] = std::bit_cast<float>(load_le32(p + 4 * i));
    tensors.emplace(e.name, Tensor<float>(e.dims, std::move(data)));
  }
  WeightStore store(std::move(tensors));
  validate_weights(graph, store);
  return store;
}

WeightStore load_weights_files(const CompGraph &graph, const std::string &blob_path,
                               const std::string &index_path) {
  std::ifstream bin(blob_path, std::ios::binary);
  if (!bin) fail(ErrorCode::kIoError, "cannot open weight blob '" + blob_path + "'");
  std::vector<char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  std::vector<std::byte> blob(raw.size());
  std::memcpy(blob.data(), raw.data(), raw.size());

  std::ifstream idx(index_path);
  if (!idx) fail(ErrorCode::kIoError, "cannot open weight index '" + index_path + "'");
  json index;
  try {
    index = json::parse(idx);
  } catch (const json::exception &e) {
    fail(ErrorCode::kParseError, std::string("weight index: ") + e.what());
  }
  return load_weights(graph, blob, index);
}

SerializedWeights serialize_weights(const CompGraph &graph, const WeightStore &weights) {
  std::vector<std::string> order;
  std::set<std::string> placed;
  for (const auto &spec : parameter_specs(graph))
    if (weights.contains(spec.name) && placed.insert(spec.name).second) order.push_back(spec.name);
  for (const auto &[name, t] : weights.tensors())
    if (placed.insert(name).second) order.push_back(name);

  SerializedWeights out;
  out.index = nlohmann::ordered_json::array();
  for (const auto &name : order) {
    const auto &t = weights.at(name);
    const std::size_t offset = out.blob.size();
    out.blob.resize(offset + 4 * static_cast<std::size_t>(t.numel()));
    for (std::int64_t i = 0; i < t.numel(); ++i)
      store_le32(out.blob.data() + offset + 4 * i, std::bit_cast<std::uint32_t>(t[i]));
    nlohmann::ordered_json e;
    e["name"] = name;
    e["shape"] = t.dims();
    e["offset_bytes"] = offset;
    out.index.push_back(std::move(e));
  }
  return out;
}

void save_weights_files(const CompGraph &graph, const WeightStore &weights,
                        const std::string &blob_path, const std::string &index_path) {
  auto s = serialize_weights(graph, weights);
  std::ofstream bin(blob_path, std::ios::binary);
  if (!bin) fail(ErrorCode::kIoError, "cannot write '" + blob_path + "'");
  bin.write(reinterpret_cast<const char *>(s.blob.data()),
            static_cast<std::streamsize>(s.blob.size()));
  std::ofstream idx(index_path);
  if (!idx) fail(ErrorCode::kIoError, "cannot write '" + index_path + "'");
  idx << s.index.dump(2) << "\n";
}

WeightStore init_weights(const CompGraph &graph, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  TensorMap<float> tensors;
  for (const auto &spec : parameter_specs(graph)) {
    Tensor<float> t(spec.dims);
    auto ends_with = [&](std::string_view s) {
      return spec.name.size() >= s.size() &&
             std::string_view(spec.name).substr(spec.name.size() - s.size()) == s;
    };
    const std::string layer_id = spec.name.substr(0, spec.name.rfind('.'));
    const Layer &l = graph.layer(layer_id);
    if (l.kind == LayerKind::kBatchNorm) {
      if (ends_with(".weight") || ends_with(".running_var")) t.fill(1.0f);
    } else if (ends_with(".weight")) {
      const auto fan_in = dims_numel(spec.dims) / spec.dims[0];
      const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (auto &v : t.values()) v = static_cast<float>(std * normal(rng));
    } else if (ends_with(".bias") && !l.attrs.bias) {
      continue;
    }
    tensors.emplace(spec.name, std::move(t));
  }
  return WeightStore(std::move(tensors));
}

} // namespace chanprune
