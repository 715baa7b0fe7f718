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

#include "chanprune/masks.hpp"

#include <algorithm>
#include <string>

#include "chanprune/error.hpp"

namespace chanprune {

MaskSet MaskSet::all_ones(const GroupTable &table) {
  MaskSet m;
  for (const auto &g : table.groups) {
    m.masks_.emplace_back(static_cast<std::size_t>(g.width), std::uint8_t{1});
    m.pinned_.push_back(g.pinned);
  }
  return m;
}

MaskSet MaskSet::from_json(const GroupTable &table, const nlohmann::json &j) {
  MaskSet m = all_ones(table);
  if (!j.is_object()) fail(ErrorCode::kParseError, "mask file must be a JSON object");
  for (const auto &[key, value] : j.items()) {
    std::size_t g = 0;
    try {
      g = std::stoul(key);
    } catch (const std::exception &) {
      fail(ErrorCode::kParseError, "mask key '" + key + "' is not a group id");
    }
    if (g >= m.masks_.size())
      fail(ErrorCode::kParseError, "mask for unknown group " + key);
    if (!value.is_array() || value.size() != m.masks_[g].size())
      fail(ErrorCode::kShapeMismatch, "mask of group " + key + ": expected " +
                                          std::to_string(m.masks_[g].size()) + " entries");
    for (std::size_t s = 0; s < value.size(); ++s) {
      const int v = value[s].get<int>();
      if (v != 0 && v != 1) fail(ErrorCode::kParseError, "mask entries must be 0 or 1");
      if (v == 0 && m.pinned_[g][s])
        fail(ErrorCode::kInvalidArgument, "group " + key + " slot " + std::to_string(s) +
                                              " is pinned and cannot be 0");
      m.masks_[g][s] = static_cast<std::uint8_t>(v);
    }
    if (m.live_count(g) == 0) fail(ErrorCode::kEmptyLayer, "group " + key + " has no live slot");
  }
  return m;
}

bool MaskSet::live(std::size_t group, std::int64_t slot) const {
  return masks_.at(group).at(static_cast<std::size_t>(slot)) != 0;
}

bool MaskSet::pinned(std::size_t group, std::int64_t slot) const {
  return pinned_.at(group).at(static_cast<std::size_t>(slot));
}

bool MaskSet::frozen(std::size_t group) const {
  const auto &p = pinned_.at(group);
  return std::all_of(p.begin(), p.end(), [](bool b) { return b; });
}

std::int64_t MaskSet::live_count(std::size_t group) const {
  const auto &m = masks_.at(group);
  return std::count(m.begin(), m.end(), std::uint8_t{1});
}

void MaskSet::prune(std::size_t group, std::int64_t slot) {
  if (group >= masks_.size() || slot < 0 || slot >= width(group))
    fail(ErrorCode::kInvalidArgument,
         "no slot " + std::to_string(slot) + " in group " + std::to_string(group));
  if (!live(group, slot))
    fail(ErrorCode::kSlotAlreadyPruned,
         "group " + std::to_string(group) + " slot " + std::to_string(slot));
  if (pinned(group, slot))
    fail(ErrorCode::kInvalidArgument,
         "group " + std::to_string(group) + " slot " + std::to_string(slot) + " is pinned");
  if (live_count(group) <= 1)
    fail(ErrorCode::kEmptyLayer, "group " + std::to_string(group) + " would have no live slot");
  masks_[group][static_cast<std::size_t>(slot)] = 0;
}

nlohmann::ordered_json MaskSet::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t g = 0; g < masks_.size(); ++g) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (auto v : masks_[g]) arr.push_back(static_cast<int>(v));
    j[std::to_string(g)] = std::move(arr);
  }
  return j;
}

std::vector<std::uint8_t> class_liveness(const GroupTable &table, const MaskSet &masks) {
  std::vector<std::uint8_t> live(table.owners_of_class.size(), 1);
  for (std::size_t cls = 0; cls < live.size(); ++cls)
    for (const auto &[g, s] : table.owners_of_class[cls])
      if (!masks.live(static_cast<std::size_t>(g), s)) live[cls] = 0;
  return live;
}

ChannelLiveness channel_liveness(const CompGraph &graph, const GroupTable &table,
                                 const MaskSet &masks) {
  const auto cls_live = class_liveness(table, masks);
  ChannelLiveness out(graph.size());
  for (std::size_t k = 0; k < graph.size(); ++k)
    for (auto cls : table.class_of_channel[k])
      out[k].push_back(cls_live[static_cast<std::size_t>(cls)]);
  return out;
}

ChannelLiveness dense_liveness(const CompGraph &graph) {
  ChannelLiveness out(graph.size());
  for (std::size_t k = 0; k < graph.size(); ++k)
    out[k].assign(static_cast<std::size_t>(graph.shape(k).c), 1);
  return out;
}

namespace {

std::int64_t count_live(const std::vector<std::uint8_t> &v, std::int64_t begin, std::int64_t end) {
  return std::count(v.begin() + begin, v.begin() + end, std::uint8_t{1});
}

// Sum over groups b of live_in(b) * live_out(b); plain layers have one block.
std::int64_t block_products(const CompGraph &graph, std::size_t layer, const ChannelLiveness &live) {
  const Layer &l = graph.layer(layer);
  const auto &in = live[graph.input_indices(layer).front()];
  const auto &out = live[layer];
  const std::int64_t g = l.kind == LayerKind::kConv ? l.attrs.groups : 1;
  const std::int64_t ib = static_cast<std::int64_t>(in.size()) / g;
  const std::int64_t ob = static_cast<std::int64_t>(out.size()) / g;
  std::int64_t total = 0;
  for (std::int64_t b = 0; b < g; ++b)
    total += count_live(in, b * ib, (b + 1) * ib) * count_live(out, b * ob, (b + 1) * ob);
  return total;
}

} // namespace

std::int64_t layer_flops(const CompGraph &graph, std::size_t layer, const ChannelLiveness &live) {
  const Layer &l = graph.layer(layer);
  if (!l.is_prunable()) return 0;
  const Shape &y = graph.shape(layer);
  const std::int64_t per_position = block_products(graph, layer, live);
  if (l.kind == LayerKind::kFC) return y.n * per_position;
  return y.n * y.h * y.w * l.attrs.kernel_h * l.attrs.kernel_w * per_position;
}

std::int64_t flops_of_graph(const CompGraph &graph, const GroupTable &table, const MaskSet &masks) {
  return flops_of_graph(graph, channel_liveness(graph, table, masks));
}

std::int64_t memory_of_graph(const CompGraph &graph, const GroupTable &table,
                             const MaskSet &masks) {
  return memory_of_graph(graph, channel_liveness(graph, table, masks));
}

std::int64_t params_of_graph(const CompGraph &graph, const GroupTable &table,
                             const MaskSet &masks) {
  return params_of_graph(graph, channel_liveness(graph, table, masks));
}

std::int64_t flops_of_graph(const CompGraph &graph, const ChannelLiveness &live) {
  std::int64_t total = 0;
  for (std::size_t k : graph.prunable_indices()) total += layer_flops(graph, k, live);
  return total;
}

std::int64_t memory_of_graph(const CompGraph &graph, const ChannelLiveness &live) {
  std::int64_t total = 0;
  for (std::size_t k = 0; k < graph.size(); ++k) {
    if (graph.layer(k).kind == LayerKind::kOutput) continue;
    const Shape &s = graph.shape(k);
    total += s.n * s.h * s.w * count_live(live[k], 0, static_cast<std::int64_t>(live[k].size()));
  }
  return total;
}

std::int64_t params_of_graph(const CompGraph &graph, const ChannelLiveness &live) {
  std::int64_t total = 0;
  for (std::size_t k = 0; k < graph.size(); ++k) {
    const Layer &l = graph.layer(k);
    const std::int64_t live_out = count_live(live[k], 0, static_cast<std::int64_t>(live[k].size()));
    switch (l.kind) {
    case LayerKind::kConv:
      total += block_products(graph, k, live) * l.attrs.kernel_h * l.attrs.kernel_w;
      if (l.attrs.bias) total += live_out;
      break;
    case LayerKind::kFC:
      total += block_products(graph, k, live);
      if (l.attrs.bias) total += live_out;
      break;
    case LayerKind::kBatchNorm:
      total += 2 * live_out;
      break;
    default:
      break;
    }
  }
  return total;
}

} // namespace chanprune
