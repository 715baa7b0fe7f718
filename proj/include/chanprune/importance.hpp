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

#ifndef CHANPRUNE_IMPORTANCE_HPP
#define CHANPRUNE_IMPORTANCE_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "chanprune/engine.hpp"
#include "chanprune/grouping.hpp"
#include "chanprune/masks.hpp"

namespace chanprune {

/// Per-sample mask gradient of every prunable layer input, shape (n, c):
/// the spatial sum of the unmasked input times the per-sample gradient of the
/// masked input. Entries for non-prunable layers are empty.
template <typename T>
std::vector<Tensor<T>> sample_mask_grads(const CompGraph &graph, const Tape<T> &tape,
                                         const std::vector<Tensor<T>> &act_grads);

/// Sums the columns of an (n, c) matrix that share a slot: out[n][slot_of[c]] += in[n][c].
Tensor<double> reduce_in_layer(const Tensor<double> &grads, std::span<const std::int64_t> slot_of,
                               std::int64_t slots);

/// Slot map of the reshape-and-sum rule for a layer reading `channels` inputs:
/// identity for plain layers, channel / (channels / groups) for grouped convs.
std::vector<std::int64_t> grouped_slot_map(const Layer &layer, std::int64_t channels);

/// Elementwise sum of the member matrices, taken before any squaring.
Tensor<double> reduce_cross_layer(std::span<const Tensor<double>> grads);

/// Running per-slot sums of squared per-sample mask gradients.
class FisherAccumulator {
public:
  FisherAccumulator() = default;
  explicit FisherAccumulator(const GroupTable &table);

  /// `grads` is (n, width) for `group`, already reduced in- and cross-layer.
  void accumulate(std::size_t group, const Tensor<double> &grads);
  /// Counts samples once per batch (not once per group).
  void add_samples(std::int64_t n) { sample_count_ += n; }
  void zeroize();

  std::size_t group_count() const { return squares_.size(); }
  std::span<const double> squares(std::size_t group) const { return squares_.at(group); }
  /// Plain per-sample sums, used for the optional first-order term.
  std::span<const double> sums(std::size_t group) const { return sums_.at(group); }
  std::int64_t sample_count() const { return sample_count_; }

  /// Score per slot: the sum of squares, plus 2|sum| when `first_order` is
  /// set, and +infinity for slots already masked out.
  std::vector<std::vector<double>> scores(const MaskSet &masks, bool first_order = false) const;

private:
  std::vector<std::vector<double>> squares_;
  std::vector<std::vector<double>> sums_;
  std::int64_t sample_count_ = 0;
};

/// One batch worth of importance: mask grads of every member, reduced to the
/// group's slots and summed across members, then added to `acc`.
template <typename T>
void accumulate_batch(const CompGraph &graph, const GroupTable &table, const Tape<T> &tape,
                      const std::vector<Tensor<T>> &act_grads, FisherAccumulator &acc);

/// Per group, the (n, width) reduced mask gradients of one batch.
template <typename T>
std::vector<Tensor<double>> group_mask_grads(const CompGraph &graph, const GroupTable &table,
                                             const Tape<T> &tape,
                                             const std::vector<Tensor<T>> &act_grads);

} // namespace chanprune

#endif
