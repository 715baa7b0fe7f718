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

#ifndef CHANPRUNE_GROUPING_HPP
#define CHANPRUNE_GROUPING_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "chanprune/graph.hpp"
#include "json.hpp"

namespace chanprune {

/// One way a prunable layer's input reaches a Conv/FC parent. `offset` and
/// `width` are in the consumer's input-channel coordinates; `spread` is the
/// number of consumer channels per parent channel (> 1 only through Flatten).
struct ParentLink {
  std::size_t parent = 0;
  std::int64_t offset = 0;
  std::int64_t width = 0;
  std::int64_t spread = 1;

  bool operator==(const ParentLink &) const = default;
};

/// P[l] for every prunable layer: the Conv/FC layers reachable backwards
/// through non-prunable layers only.
class ParentMap {
public:
  explicit ParentMap(std::size_t layer_count) : links_(layer_count) {}

  const std::vector<ParentLink> &links(std::size_t layer) const { return links_.at(layer); }
  std::vector<ParentLink> &links(std::size_t layer) { return links_.at(layer); }
  /// Sorted, de-duplicated parent indices.
  std::vector<std::size_t> parents(std::size_t layer) const;

private:
  std::vector<std::vector<ParentLink>> links_;
};

ParentMap find_parents(const CompGraph &graph);

struct Group {
  std::vector<std::size_t> members; // topological order
  std::vector<std::size_t> parents; // union of member parent sets, sorted
  std::int64_t width = 0;           // number of shared mask slots
  std::vector<bool> pinned;         // per slot; pinned slots are never pruned

  bool frozen() const;
  bool has_grouped_conv(const CompGraph &graph) const;
};

/// Partition of the prunable layers into groups sharing one channel mask.
///
/// Besides the layer partition this records how every member's input channels
/// map onto the group's mask slots, and which tensor channels of every layer
/// output disappear when a slot is pruned (the channel classes).
class GroupTable {
public:
  std::vector<Group> groups;
  /// -1 for non-prunable layers.
  std::vector<int> group_of_layer;
  /// Per prunable layer: input channel -> slot in its group.
  std::vector<std::vector<std::int64_t>> slot_of_input;
  /// Per layer: output channel -> channel class id.
  std::vector<std::vector<std::int64_t>> class_of_channel;
  /// Per class: (group, slot) pairs that own it. Only pinned classes can be
  /// owned by more than one group.
  std::vector<std::vector<std::pair<int, std::int64_t>>> owners_of_class;
  /// Per group, per slot: class id.
  std::vector<std::vector<std::int64_t>> class_of_slot;

  std::size_t size() const { return groups.size(); }
  const Group &group(std::size_t g) const { return groups.at(g); }
  std::int64_t class_count() const { return static_cast<std::int64_t>(owners_of_class.size()); }
};

/// Layer partition only, iterating layers in `order` (a topological
/// order of prunable layers). Groups whose parent sets come to intersect are
/// merged transitively afterwards. Result is sorted by smallest member index.
std::vector<std::vector<std::size_t>> group_layers(const CompGraph &graph,
                                                   const ParentMap &parents,
                                                   std::span<const std::size_t> order);

/// Full grouping: layer partition, channel classes and slot maps.
/// Throws InconsistentWidth when a member's input channels do not spread
/// evenly over the slots it touches.
GroupTable build_groups(const CompGraph &graph, const ParentMap &parents);
GroupTable build_groups(const CompGraph &graph);

std::int64_t shared_mask_width(const GroupTable &table, std::size_t group);

/// [{group_id, members, parents, width}] with ids instead of indices.
nlohmann::ordered_json group_table_json(const CompGraph &graph, const GroupTable &table);

} // namespace chanprune

#endif
