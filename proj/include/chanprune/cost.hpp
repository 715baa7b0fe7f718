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

#ifndef CHANPRUNE_COST_HPP
#define CHANPRUNE_COST_HPP

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "chanprune/graph.hpp"
#include "chanprune/grouping.hpp"
#include "chanprune/masks.hpp"
#include "json.hpp"

namespace chanprune {

enum class NormMode { kMemory, kFlops, kNone };

std::string_view norm_mode_name(NormMode mode);
std::optional<NormMode> norm_mode_from_name(std::string_view name);

/// Savings of pruning one slot, attributed to a single layer.
struct LayerDelta {
  std::size_t layer = 0;
  std::int64_t flops = 0;  // MACs removed from this layer
  std::int64_t memory = 0; // output elements removed from this layer
};

/// Per-layer savings of pruning (group, slot) under the current masks.
/// Layers without savings are omitted. Throws SlotAlreadyPruned.
std::vector<LayerDelta> slot_deltas(const CompGraph &graph, const GroupTable &table,
                                    const MaskSet &masks, std::size_t group, std::int64_t slot);

/// MACs removed from every layer that reads or produces the slot's channels,
/// counted with the currently remaining channel numbers.
std::int64_t delta_flops(const CompGraph &graph, const GroupTable &table, const MaskSet &masks,
                         std::size_t group, std::int64_t slot);
/// Output feature-map elements removed, summed over all producing layers.
std::int64_t delta_memory(const CompGraph &graph, const GroupTable &table, const MaskSet &masks,
                          std::size_t group, std::int64_t slot);

struct SlotCost {
  std::int64_t delta_flops = 0;
  std::int64_t delta_memory = 0;
};

/// Deltas of every live, unpinned slot; other slots hold zeros.
struct CostLedger {
  NormMode mode = NormMode::kMemory;
  std::vector<std::vector<SlotCost>> slots;
};

CostLedger build_cost_ledger(const CompGraph &graph, const GroupTable &table, const MaskSet &masks,
                             NormMode mode);

/// Scores divided by the delta selected by the ledger's mode. Pruned and
/// pinned slots become +infinity. Throws DivisionByZero for a candidate with
/// a zero delta.
std::vector<std::vector<double>> normalize(const std::vector<std::vector<double>> &scores,
                                           const CostLedger &ledger, const MaskSet &masks);

nlohmann::ordered_json cost_ledger_json(const CostLedger &ledger);

} // namespace chanprune

#endif
