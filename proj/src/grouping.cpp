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

#include "chanprune/grouping.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>

#include "chanprune/error.hpp"

namespace chanprune {

namespace {

class DisjointSets {
public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

private:
  std::vector<std::size_t> parent_;
};

bool intersects(const std::set<std::size_t> &a, const std::set<std::size_t> &b) {
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia == *ib) return true;
    if (*ia < *ib) ++ia;
    else ++ib;
  }
  return false;
}

// Links reaching the OUTPUT of `node`, in node-output channel coordinates.
const std::vector<ParentLink> &output_links(const CompGraph &graph, std::size_t node,
                                            std::vector<std::optional<std::vector<ParentLink>>> &memo) {
  if (memo[node]) return *memo[node];
  const Layer &l = graph.layer(node);
  std::vector<ParentLink> out;
  const auto &ins = graph.input_indices(node);
  switch (l.kind) {
  case LayerKind::kInput:
    break;
  case LayerKind::kConv:
  case LayerKind::kFC:
    out.push_back({node, 0, graph.shape(node).c, 1});
    break;
  case LayerKind::kConcat: {
    std::int64_t offset = 0;
    for (std::size_t in : ins) {
      for (ParentLink link : output_links(graph, in, memo)) {
        link.offset += offset;
        out.push_back(link);
      }
      offset += graph.shape(in).c;
    }
    break;
  }
  case LayerKind::kFlatten: {
    const std::int64_t hw = graph.shape(ins[0]).spatial();
    for (ParentLink link : output_links(graph, ins[0], memo)) {
      link.offset *= hw;
      link.width *= hw;
      link.spread *= hw;
      out.push_back(link);
    }
    break;
  }
  default: // BN, ReLU, pools, Add, Output: channel positions pass through
    for (std::size_t in : ins)
      for (const ParentLink &link : output_links(graph, in, memo)) out.push_back(link);
    break;
  }
  std::vector<ParentLink> unique;
  for (const auto &link : out)
    if (std::find(unique.begin(), unique.end(), link) == unique.end()) unique.push_back(link);
  memo[node] = std::move(unique);
  return *memo[node];
}

} // namespace

std::vector<std::size_t> ParentMap::parents(std::size_t layer) const {
  std::vector<std::size_t> out;
  for (const auto &link : links_.at(layer)) out.push_back(link.parent);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ParentMap find_parents(const CompGraph &graph) {
  ParentMap map(graph.size());
  std::vector<std::optional<std::vector<ParentLink>>> memo(graph.size());
  for (std::size_t k : graph.prunable_indices())
    map.links(k) = output_links(graph, graph.input_indices(k).front(), memo);
  return map;
}

bool Group::frozen() const {
  return std::all_of(pinned.begin(), pinned.end(), [](bool p) { return p; });
}

bool Group::has_grouped_conv(const CompGraph &graph) const {
  return std::any_of(members.begin(), members.end(),
                     [&](std::size_t m) { return graph.layer(m).is_grouped_conv(); });
}

std::vector<std::vector<std::size_t>> group_layers(const CompGraph &graph,
                                                   const ParentMap &parents,
                                                   std::span<const std::size_t> order) {
  struct Working {
    std::vector<std::size_t> members;
    std::set<std::size_t> parents;
    std::set<std::size_t> grouped_convs;
  };
  std::vector<Working> groups;
  for (std::size_t l : order) {
    const auto pv = parents.parents(l);
    const std::set<std::size_t> pl(pv.begin(), pv.end());
    bool placed = false;
    for (auto &g : groups) {
      if (intersects(pl, g.parents) || intersects(pl, g.grouped_convs)) {
        g.members.push_back(l);
        g.parents.insert(pl.begin(), pl.end());
        if (graph.layer(l).is_grouped_conv()) g.grouped_convs.insert(l);
        placed = true;
        break;
      }
    }
    if (!placed) {
      Working g;
      g.members.push_back(l);
      g.parents = pl;
      if (graph.layer(l).is_grouped_conv()) g.grouped_convs.insert(l);
      groups.push_back(std::move(g));
    }
  }

  // A layer can overlap several groups while only joining the first; such
  // groups are coupled through it, so merge until no two groups touch.
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t a = 0; a < groups.size() && !merged; ++a) {
      for (std::size_t b = a + 1; b < groups.size() && !merged; ++b) {
        auto &ga = groups[a];
        auto &gb = groups[b];
        if (intersects(ga.parents, gb.parents) || intersects(ga.grouped_convs, gb.parents) ||
            intersects(ga.parents, gb.grouped_convs)) {
          ga.members.insert(ga.members.end(), gb.members.begin(), gb.members.end());
          ga.parents.insert(gb.parents.begin(), gb.parents.end());
          ga.grouped_convs.insert(gb.grouped_convs.begin(), gb.grouped_convs.end());
          groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(b));
          merged = true;
        }
      }
    }
  }

  std::vector<std::vector<std::size_t>> out;
  for (auto &g : groups) {
    std::sort(g.members.begin(), g.members.end());
    out.push_back(std::move(g.members));
  }
  std::sort(out.begin(), out.end());
  return out;
}

GroupTable build_groups(const CompGraph &graph, const ParentMap &parents) {
  const auto order = graph.prunable_indices();
  const auto partition = group_layers(graph, parents, order);

  // Channel classes over every layer-output channel.
  std::vector<std::int64_t> base(graph.size() + 1, 0);
  for (std::size_t k = 0; k < graph.size(); ++k) base[k + 1] = base[k] + graph.shape(k).c;
  DisjointSets sets(static_cast<std::size_t>(base.back()));
  auto ch = [&](std::size_t layer, std::int64_t c) {
    return static_cast<std::size_t>(base[layer] + c);
  };
  for (std::size_t k = 0; k < graph.size(); ++k) {
    const Layer &l = graph.layer(k);
    const auto &ins = graph.input_indices(k);
    const std::int64_t c_out = graph.shape(k).c;
    switch (l.kind) {
    case LayerKind::kInput:
    case LayerKind::kFC:
      break;
    case LayerKind::kConv: {
      if (l.attrs.groups == 1) break;
      const std::int64_t g = l.attrs.groups;
      const std::int64_t ib = graph.shape(ins[0]).c / g;
      const std::int64_t ob = c_out / g;
      for (std::int64_t b = 0; b < g; ++b) {
        const std::size_t anchor = ch(ins[0], b * ib);
        for (std::int64_t t = 1; t < ib; ++t) sets.unite(anchor, ch(ins[0], b * ib + t));
        for (std::int64_t u = 0; u < ob; ++u) sets.unite(anchor, ch(k, b * ob + u));
      }
      break;
    }
    case LayerKind::kConcat: {
      std::int64_t offset = 0;
      for (std::size_t in : ins) {
        for (std::int64_t c = 0; c < graph.shape(in).c; ++c) sets.unite(ch(k, offset + c), ch(in, c));
        offset += graph.shape(in).c;
      }
      break;
    }
    case LayerKind::kFlatten: {
      const std::int64_t hw = graph.shape(ins[0]).spatial();
      for (std::int64_t c = 0; c < c_out; ++c) sets.unite(ch(k, c), ch(ins[0], c / hw));
      break;
    }
    default: // elementwise in the channel dimension
      for (std::size_t in : ins)
        for (std::int64_t c = 0; c < c_out; ++c) sets.unite(ch(k, c), ch(in, c));
      break;
    }
  }

  GroupTable table;
  std::map<std::size_t, std::int64_t> dense;
  table.class_of_channel.resize(graph.size());
  for (std::size_t k = 0; k < graph.size(); ++k) {
    auto &v = table.class_of_channel[k];
    v.resize(static_cast<std::size_t>(graph.shape(k).c));
    for (std::int64_t c = 0; c < graph.shape(k).c; ++c) {
      const std::size_t root = sets.find(ch(k, c));
      auto [it, inserted] = dense.emplace(root, static_cast<std::int64_t>(dense.size()));
      v[static_cast<std::size_t>(c)] = it->second;
    }
  }
  const std::int64_t class_count = static_cast<std::int64_t>(dense.size());
  std::vector<bool> class_pinned(static_cast<std::size_t>(class_count), false);
  for (std::size_t k = 0; k < graph.size(); ++k) {
    const auto kind = graph.layer(k).kind;
    if (kind == LayerKind::kInput || kind == LayerKind::kOutput)
      for (auto cls : table.class_of_channel[k]) class_pinned[static_cast<std::size_t>(cls)] = true;
  }

  table.owners_of_class.resize(static_cast<std::size_t>(class_count));
  table.group_of_layer.assign(graph.size(), -1);
  table.slot_of_input.resize(graph.size());
  for (const auto &members : partition) {
    const int gid = static_cast<int>(table.groups.size());
    Group group;
    group.members = members;
    std::set<std::size_t> ps;
    std::map<std::int64_t, std::int64_t> slot_of_cls;
    std::vector<std::int64_t> slot_classes;
    for (std::size_t m : members) {
      table.group_of_layer[m] = gid;
      const auto pv = parents.parents(m);
      ps.insert(pv.begin(), pv.end());
      const std::size_t in = graph.input_indices(m).front();
      auto &slots = table.slot_of_input[m];
      for (auto cls : table.class_of_channel[in]) {
        auto [it, inserted] = slot_of_cls.emplace(cls, static_cast<std::int64_t>(slot_classes.size()));
        if (inserted) slot_classes.push_back(cls);
        slots.push_back(it->second);
      }
    }
    group.parents.assign(ps.begin(), ps.end());
    group.width = static_cast<std::int64_t>(slot_classes.size());
    for (std::size_t s = 0; s < slot_classes.size(); ++s) {
      group.pinned.push_back(class_pinned[static_cast<std::size_t>(slot_classes[s])]);
      table.owners_of_class[static_cast<std::size_t>(slot_classes[s])].push_back(
          {gid, static_cast<std::int64_t>(s)});
    }

    for (std::size_t m : members) {
      std::map<std::int64_t, std::int64_t> per_slot;
      for (auto s : table.slot_of_input[m]) ++per_slot[s];
      const auto first = per_slot.begin();
      for (const auto &[slot, count] : per_slot) {
        if (count != first->second)
          fail(ErrorCode::kInconsistentWidth,
               "group " + std::to_string(gid) + ": layer '" + graph.layer(m).id + "' maps " +
                   std::to_string(first->second) + " input channel(s) to slot " +
                   std::to_string(first->first) + " but " + std::to_string(count) + " to slot " +
                   std::to_string(slot));
      }
    }
    table.class_of_slot.push_back(std::move(slot_classes));
    table.groups.push_back(std::move(group));
  }

  for (std::size_t cls = 0; cls < table.owners_of_class.size(); ++cls)
    if (table.owners_of_class[cls].size() > 1 && !class_pinned[cls])
      fail(ErrorCode::kInternal, "channel class " + std::to_string(cls) +
                                     " is shared by two groups but not pinned");
  return table;
}

GroupTable build_groups(const CompGraph &graph) { return build_groups(graph, find_parents(graph)); }

std::int64_t shared_mask_width(const GroupTable &table, std::size_t group) {
  return table.group(group).width;
}

nlohmann::ordered_json group_table_json(const CompGraph &graph, const GroupTable &table) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (std::size_t g = 0; g < table.size(); ++g) {
    const Group &grp = table.group(g);
    nlohmann::ordered_json e;
    e["group_id"] = g;
    e["members"] = nlohmann::ordered_json::array();
    for (auto m : grp.members) e["members"].push_back(graph.layer(m).id);
    e["parents"] = nlohmann::ordered_json::array();
    for (auto p : grp.parents) e["parents"].push_back(graph.layer(p).id);
    e["width"] = grp.width;
    e["frozen"] = grp.frozen();
    out.push_back(std::move(e));
  }
  return out;
}

} // namespace chanprune
