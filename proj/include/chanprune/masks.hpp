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

#ifndef CHANPRUNE_MASKS_HPP
#define CHANPRUNE_MASKS_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "chanprune/graph.hpp"
#include "chanprune/grouping.hpp"
#include "json.hpp"

namespace chanprune {

/// Binary per-group channel masks. Masks only ever go from 1 to 0, pinned
/// slots stay 1, and every group keeps at least one live slot.
class MaskSet {
public:
  MaskSet() = default;
  static MaskSet all_ones(const GroupTable &table);
  /// Reads {"<group_id>": [0/1, ...]} and checks it against `table`.
  static MaskSet from_json(const GroupTable &table, const nlohmann::json &j);

  std::size_t group_count() const { return masks_.size(); }
  std::span<const std::uint8_t> mask(std::size_t group) const { return masks_.at(group); }
  bool live(std::size_t group, std::int64_t slot) const;
  bool pinned(std::size_t group, std::int64_t slot) const;
  bool frozen(std::size_t group) const;
  std::int64_t live_count(std::size_t group) const;
  std::int64_t width(std::size_t group) const {
    return static_cast<std::int64_t>(masks_.at(group).size());
  }

  /// Sets one slot to 0. Throws SlotAlreadyPruned, InvalidArgument (pinned
  /// slot) or EmptyLayer (last live slot of a group).
  void prune(std::size_t group, std::int64_t slot);

  nlohmann::ordered_json to_json() const;
  bool operator==(const MaskSet &) const = default;

private:
  std::vector<std::vector<std::uint8_t>> masks_;
  std::vector<std::vector<bool>> pinned_;
};

/// Live flags of every layer-output channel under `masks`.
using ChannelLiveness = std::vector<std::vector<std::uint8_t>>;

/// Whether each channel class survives: a class dies with any owning slot.
std::vector<std::uint8_t> class_liveness(const GroupTable &table, const MaskSet &masks);
ChannelLiveness channel_liveness(const CompGraph &graph, const GroupTable &table,
                                 const MaskSet &masks);
/// Every channel live; needs no grouping, so it also works on graphs that fail to group.
ChannelLiveness dense_liveness(const CompGraph &graph);

/// Input-channel multipliers of every prunable layer (empty for others).
template <typename T>
std::vector<std::vector<T>> layer_input_masks(const CompGraph &graph, const GroupTable &table,
                                              const MaskSet &masks) {
  std::vector<std::vector<T>> out(graph.size());
  for (std::size_t k : graph.prunable_indices()) {
    const auto g = static_cast<std::size_t>(table.group_of_layer[k]);
    const auto m = masks.mask(g);
    for (auto slot : table.slot_of_input[k])
      out[k].push_back(static_cast<T>(m[static_cast<std::size_t>(slot)]));
  }
  return out;
}

/// Multiply-accumulates of all Conv/FC layers over live channels only.
std::int64_t flops_of_graph(const CompGraph &graph, const GroupTable &table, const MaskSet &masks);
/// Element count of every layer output (Output marker excluded) over live channels.
std::int64_t memory_of_graph(const CompGraph &graph, const GroupTable &table,
                             const MaskSet &masks);
/// Trainable parameter count restricted to live channels.
std::int64_t params_of_graph(const CompGraph &graph, const GroupTable &table,
                             const MaskSet &masks);

std::int64_t flops_of_graph(const CompGraph &graph, const ChannelLiveness &live);
std::int64_t memory_of_graph(const CompGraph &graph, const ChannelLiveness &live);
std::int64_t params_of_graph(const CompGraph &graph, const ChannelLiveness &live);

/// Per-layer MACs for explicit liveness (shared by the accounting above).
std::int64_t layer_flops(const CompGraph &graph, std::size_t layer, const ChannelLiveness &live);

} // namespace chanprune

#endif
