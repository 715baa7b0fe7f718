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

#include "chanprune/importance.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "chanprune/error.hpp"

namespace chanprune {

template <typename T>
std::vector<Tensor<T>> sample_mask_grads(const CompGraph &graph, const Tape<T> &tape,
                                         const std::vector<Tensor<T>> &act_grads) {
  std::vector<Tensor<T>> out(graph.size());
  for (std::size_t k : graph.prunable_indices()) {
    const Tensor<T> &a = tape.values.at(graph.input_indices(k).front());
    const Tensor<T> &d = act_grads.at(k);
    if (d.dims() != a.dims())
      fail(ErrorCode::kShapeMismatch, "activation gradient of layer '" + graph.layer(k).id + "'");
    const std::int64_t n = a.dim(0), c = a.dim(1), plane = a.dim(2) * a.dim(3);
    Tensor<T> g({n, c});
    for (std::int64_t i = 0; i < n * c; ++i) {
      const T *pa = a.data() + i * plane;
      const T *pd = d.data() + i * plane;
      T s{0};
      for (std::int64_t q = 0; q < plane; ++q) s += pa[q] * pd[q];
      g[static_cast<std::size_t>(i)] = s;
    }
    out[k] = std::move(g);
  }
  return out;
}

Tensor<double> reduce_in_layer(const Tensor<double> &grads, std::span<const std::int64_t> slot_of,
                               std::int64_t slots) {
  if (grads.rank() != 2 || grads.dim(1) != static_cast<std::int64_t>(slot_of.size()))
    fail(ErrorCode::kShapeMismatch, "in-layer reduction: expected (n," +
                                        std::to_string(slot_of.size()) + "), got " +
                                        dims_to_string(grads.dims()));
  const std::int64_t n = grads.dim(0), c = grads.dim(1);
  Tensor<double> out({n, slots});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const std::int64_t s = slot_of[static_cast<std::size_t>(ch)];
      if (s < 0 || s >= slots) fail(ErrorCode::kShapeMismatch, "slot index out of range");
      out[static_cast<std::size_t>(i * slots + s)] += grads[static_cast<std::size_t>(i * c + ch)];
    }
  return out;
}

std::vector<std::int64_t> grouped_slot_map(const Layer &layer, std::int64_t channels) {
  const std::int64_t g = layer.kind == LayerKind::kConv ? layer.attrs.groups : 1;
  if (g < 1 || channels % g != 0)
    fail(ErrorCode::kShapeMismatch,
         "layer '" + layer.id + "': " + std::to_string(channels) + " channels in " +
             std::to_string(g) + " groups");
  std::vector<std::int64_t> map(static_cast<std::size_t>(channels));
  const std::int64_t per = g == 1 ? 1 : channels / g;
  for (std::int64_t ch = 0; ch < channels; ++ch) map[static_cast<std::size_t>(ch)] = ch / per;
  return map;
}

Tensor<double> reduce_cross_layer(std::span<const Tensor<double>> grads) {
  if (grads.empty()) fail(ErrorCode::kShapeMismatch, "cross-layer reduction of no members");
  Tensor<double> out = grads.front();
  for (std::size_t j = 1; j < grads.size(); ++j) {
    if (grads[j].dims() != out.dims())
      fail(ErrorCode::kShapeMismatch, "cross-layer reduction: expected " +
                                          dims_to_string(out.dims()) + ", got " +
                                          dims_to_string(grads[j].dims()));
    for (std::int64_t i = 0; i < out.numel(); ++i)
      out[static_cast<std::size_t>(i)] += grads[j][static_cast<std::size_t>(i)];
  }
  return out;
}

FisherAccumulator::FisherAccumulator(const GroupTable &table) {
  for (const auto &g : table.groups) {
    squares_.emplace_back(static_cast<std::size_t>(g.width), 0.0);
    sums_.emplace_back(static_cast<std::size_t>(g.width), 0.0);
  }
}

void FisherAccumulator::accumulate(std::size_t group, const Tensor<double> &grads) {
  auto &sq = squares_.at(group);
  auto &sm = sums_.at(group);
  if (grads.rank() != 2 || grads.dim(1) != static_cast<std::int64_t>(sq.size()))
    fail(ErrorCode::kShapeMismatch, "accumulate group " + std::to_string(group) + ": expected (n," +
                                        std::to_string(sq.size()) + "), got " +
                                        dims_to_string(grads.dims()));
  const std::int64_t n = grads.dim(0), w = grads.dim(1);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t s = 0; s < w; ++s) {
      const double v = grads[static_cast<std::size_t>(i * w + s)];
      sq[static_cast<std::size_t>(s)] += v * v;
      sm[static_cast<std::size_t>(s)] += v;
    }
}

void FisherAccumulator::zeroize() {
  for (auto &v : squares_) std::fill(v.begin(), v.end(), 0.0);
  for (auto &v : sums_) std::fill(v.begin(), v.end(), 0.0);
  sample_count_ = 0;
}

std::vector<std::vector<double>> FisherAccumulator::scores(const MaskSet &masks,
                                                           bool first_order) const {
  std::vector<std::vector<double>> out(squares_.size());
  for (std::size_t g = 0; g < squares_.size(); ++g) {
    out[g].resize(squares_[g].size());
    for (std::size_t s = 0; s < squares_[g].size(); ++s) {
      if (!masks.live(g, static_cast<std::int64_t>(s))) {
        out[g][s] = std::numeric_limits<double>::infinity();
        continue;
      }
      out[g][s] = squares_[g][s] + (first_order ? 2.0 * std::abs(sums_[g][s]) : 0.0);
    }
  }
  return out;
}

template <typename T>
std::vector<Tensor<double>> group_mask_grads(const CompGraph &graph, const GroupTable &table,
                                             const Tape<T> &tape,
                                             const std::vector<Tensor<T>> &act_grads) {
  const auto per_layer = sample_mask_grads(graph, tape, act_grads);
  std::vector<Tensor<double>> out(table.size());
  for (std::size_t g = 0; g < table.size(); ++g) {
    const Group &grp = table.group(g);
    std::vector<Tensor<double>> members;
    members.reserve(grp.members.size());
    for (std::size_t k : grp.members)
      members.push_back(reduce_in_layer(per_layer[k].template cast<double>(),
                                        table.slot_of_input[k], grp.width));
    out[g] = reduce_cross_layer(members);
  }
  return out;
}

template <typename T>
void accumulate_batch(const CompGraph &graph, const GroupTable &table, const Tape<T> &tape,
                      const std::vector<Tensor<T>> &act_grads, FisherAccumulator &acc) {
  const auto grads = group_mask_grads(graph, table, tape, act_grads);
  for (std::size_t g = 0; g < grads.size(); ++g) acc.accumulate(g, grads[g]);
  acc.add_samples(tape.batch);
}

template std::vector<Tensor<float>> sample_mask_grads(const CompGraph &, const Tape<float> &,
                                                      const std::vector<Tensor<float>> &);
template std::vector<Tensor<double>> sample_mask_grads(const CompGraph &, const Tape<double> &,
                                                       const std::vector<Tensor<double>> &);
template std::vector<Tensor<double>> group_mask_grads(const CompGraph &, const GroupTable &,
                                                      const Tape<float> &,
                                                      const std::vector<Tensor<float>> &);
template std::vector<Tensor<double>> group_mask_grads(const CompGraph &, const GroupTable &,
                                                      const Tape<double> &,
                                                      const std::vector<Tensor<double>> &);
template void accumulate_batch(const CompGraph &, const GroupTable &, const Tape<float> &,
                               const std::vector<Tensor<float>> &, FisherAccumulator &);
template void accumulate_batch(const CompGraph &, const GroupTable &, const Tape<double> &,
                               const std::vector<Tensor<double>> &, FisherAccumulator &);

} // namespace chanprune
