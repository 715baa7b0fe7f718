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

#include "chanprune/cost.hpp"

#include <limits>
#include <string>

#include "chanprune/error.hpp"

namespace chanprune {

std::string_view norm_mode_name(NormMode mode) {
  switch (mode) {
  case NormMode::kMemory:
    return "memory";
  case NormMode::kFlops:
    return "flops";
  case NormMode::kNone:
    return "none";
  }
  return "?";
}

std::optional<NormMode> norm_mode_from_name(std::string_view name) {
  if (name == "memory") return NormMode::kMemory;
  if (name == "flops") return NormMode::kFlops;
  if (name == "none") return NormMode::kNone;
  return std::nullopt;
}

namespace {

struct BlockCount {
  std::int64_t live = 0;
  std::int64_t hit = 0; // live channels in the pruned class
};

std::vector<BlockCount> block_counts(const std::vector<std::uint8_t> &live,
                                     const std::vector<std::int64_t> &cls_of, std::int64_t cls,
                                     std::int64_t blocks) {
  const std::int64_t per = static_cast<std::int64_t>(live.size()) / blocks;
  std::vector<BlockCount> out(static_cast<std::size_t>(blocks));
  for (std::size_t ch = 0; ch < live.size(); ++ch) {
    if (!live[ch]) continue;
    auto &b = out[ch / static_cast<std::size_t>(per)];
    ++b.live;
    if (cls_of[ch] == cls) ++b.hit;
  }
  return out;
}

std::vector<LayerDelta> deltas_for_class(const CompGraph &graph, const GroupTable &table,
                                         const ChannelLiveness &live, std::int64_t cls) {
  std::vector<LayerDelta> out;
  for (std::size_t k = 0; k < graph.size(); ++k) {
    const Layer &l = graph.layer(k);
    const Shape &s = graph.shape(k);
    LayerDelta d{k, 0, 0};
    if (l.is_prunable()) {
      const std::size_t in = graph.input_indices(k).front();
      const std::int64_t blocks = l.kind == LayerKind::kConv ? l.attrs.groups : 1;
      const auto ib = block_counts(live[in], table.class_of_channel[in], cls, blocks);
      const auto ob = block_counts(live[k], table.class_of_channel[k], cls, blocks);
      std::int64_t per_position = 0;
      for (std::size_t b = 0; b < ib.size(); ++b)
        per_position += ib[b].live * ob[b].live -
                        (ib[b].live - ib[b].hit) * (ob[b].live - ob[b].hit);
      const std::int64_t positions =
          l.kind == LayerKind::kFC ? s.n : s.n * s.h * s.w * l.attrs.kernel_h * l.attrs.kernel_w;
      d.flops = positions * per_position;
    }
    if (l.kind != LayerKind::kOutput) {
      std::int64_t hit = 0;
      for (std::size_t ch = 0; ch < live[k].size(); ++ch)
        if (live[k][ch] && table.class_of_channel[k][ch] == cls) ++hit;
      d.memory = s.n * s.h * s.w * hit;
    }
    if (d.flops != 0 || d.memory != 0) out.push_back(d);
  }
  return out;
}

void check_live(const GroupTable &table, const MaskSet &masks, std::size_t group,
                std::int64_t slot) {
  if (group >= table.size() || slot < 0 || slot >= table.group(group).width)
    fail(ErrorCode::kInvalidArgument,
         "no slot " + std::to_string(slot) + " in group " + std::to_string(group));
  if (!masks.live(group, slot))
    fail(ErrorCode::kSlotAlreadyPruned,
         "group " + std::to_string(group) + " slot " + std::to_string(slot));
}

} // namespace

std::vector<LayerDelta> slot_deltas(const CompGraph &graph, const GroupTable &table,
                                    const MaskSet &masks, std::size_t group, std::int64_t slot) {
  check_live(table, masks, group, slot);
  const auto live = channel_liveness(graph, table, masks);
  return deltas_for_class(graph, table, live,
                          table.class_of_slot[group][static_cast<std::size_t>(slot)]);
}

std::int64_t delta_flops(const CompGraph &graph, const GroupTable &table, const MaskSet &masks,
                         std::size_t group, std::int64_t slot) {
  std::int64_t total = 0;
  for (const auto &d : slot_deltas(graph, table, masks, group, slot)) total += d.flops;
  return total;
}

std::int64_t delta_memory(const CompGraph &graph, const GroupTable &table, const MaskSet &masks,
                          std::size_t group, std::int64_t slot) {
  std::int64_t total = 0;
  for (const auto &d : slot_deltas(graph, table, masks, group, slot)) total += d.memory;
  return total;
}

CostLedger build_cost_ledger(const CompGraph &graph, const GroupTable &table, const MaskSet &masks,
                             NormMode mode) {
  CostLedger ledger;
  ledger.mode = mode;
  const auto live = channel_liveness(graph, table, masks);
  ledger.slots.resize(table.size());
  for (std::size_t g = 0; g < table.size(); ++g) {
    const Group &grp = table.group(g);
    ledger.slots[g].resize(static_cast<std::size_t>(grp.width));
    for (std::int64_t s = 0; s < grp.width; ++s) {
      if (!masks.live(g, s) || masks.pinned(g, s)) continue;
      auto &cost = ledger.slots[g][static_cast<std::size_t>(s)];
      for (const auto &d :
           deltas_for_class(graph, table, live, table.class_of_slot[g][static_cast<std::size_t>(s)])) {
        cost.delta_flops += d.flops;
        cost.delta_memory += d.memory;
      }
    }
  }
  return ledger;
}

std::vector<std::vector<double>> normalize(const std::vector<std::vector<double>> &scores,
                                           const CostLedger &ledger, const MaskSet &masks) {
  if (scores.size() != ledger.slots.size())
    fail(ErrorCode::kShapeMismatch, "scores and cost ledger cover different groups");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> out(scores.size());
  for (std::size_t g = 0; g < scores.size(); ++g) {
    if (scores[g].size() != ledger.slots[g].size())
      fail(ErrorCode::kShapeMismatch, "scores of group " + std::to_string(g));
    out[g].resize(scores[g].size());
    for (std::size_t s = 0; s < scores[g].size(); ++s) {
      const auto slot = static_cast<std::int64_t>(s);
      if (!masks.live(g, slot) || masks.pinned(g, slot)) {
        out[g][s] = inf;
        continue;
      }
      if (ledger.mode == NormMode::kNone) {
        out[g][s] = scores[g][s];
        continue;
      }
      const std::int64_t delta = ledger.mode == NormMode::kMemory
                                     ? ledger.slots[g][s].delta_memory
                                     : ledger.slots[g][s].delta_flops;
      if (delta <= 0)
        fail(ErrorCode::kDivisionByZero, "group " + std::to_string(g) + " slot " +
                                             std::to_string(s) + " has zero " +
                                             std::string(norm_mode_name(ledger.mode)) + " delta");
      out[g][s] = scores[g][s] / static_cast<double>(delta);
    }
  }
  return out;
}

nlohmann::ordered_json cost_ledger_json(const CostLedger &ledger) {
  nlohmann::ordered_json j;
  j["norm"] = norm_mode_name(ledger.mode);
  nlohmann::ordered_json groups = nlohmann::ordered_json::object();
  for (std::size_t g = 0; g < ledger.slots.size(); ++g) {
    nlohmann::ordered_json flops = nlohmann::ordered_json::array();
    nlohmann::ordered_json memory = nlohmann::ordered_json::array();
    for (const auto &c : ledger.slots[g]) {
      flops.push_back(c.delta_flops);
      memory.push_back(c.delta_memory);
    }
    groups[std::to_string(g)] = {{"delta_flops", flops}, {"delta_memory", memory}};
  }
  j["groups"] = std::move(groups);
  return j;
}

} // namespace chanprune
