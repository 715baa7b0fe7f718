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

#ifndef CHANPRUNE_PRUNER_HPP
#define CHANPRUNE_PRUNER_HPP

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "chanprune/cost.hpp"
#include "chanprune/dataset.hpp"
#include "chanprune/engine.hpp"
#include "chanprune/grouping.hpp"
#include "chanprune/importance.hpp"
#include "chanprune/masks.hpp"
#include "chanprune/weights.hpp"
#include "json.hpp"

namespace chanprune {

struct PruneConfig {
  std::int64_t interval = 25;       // iterations between prunes
  double flops_target = 0.5;        // stop once remaining FLOPs fraction <= this
  NormMode norm = NormMode::kMemory;
  SgdConfig sgd;
  std::int64_t max_iterations = 100000;
  std::uint64_t seed = 0;
  std::int64_t min_live_slots = 1;
  bool first_order = false; // add 2|sum of mask grads| to each score

  /// Throws InvalidArgument on out-of-range fields.
  void validate() const;
};

struct PruneEvent {
  std::int64_t iteration = 0;
  std::size_t group = 0;
  std::int64_t slot = 0;
  double raw_score = 0.0;
  double normalized_score = 0.0;
  std::int64_t delta_flops = 0;
  std::int64_t delta_memory = 0;
  double flops_remaining_fraction = 1.0;
  std::int64_t flops_after = 0;
  std::int64_t memory_after = 0;

  bool operator==(const PruneEvent &) const = default;
};

nlohmann::ordered_json event_json(const PruneEvent &event);
PruneEvent event_from_json(const nlohmann::json &j);

/// Per group, per slot: whether the slot may be pruned now. A candidate is
/// live and unpinned, its group keeps more than `min_live_slots` live slots,
/// and no layer loses its last live channel.
using Eligibility = std::vector<std::vector<std::uint8_t>>;
Eligibility prune_candidates(const CompGraph &graph, const GroupTable &table, const MaskSet &masks,
                             std::int64_t min_live_slots);

/// Argmin of `normalized` over eligible slots; ties go to the smallest
/// (group, slot). Throws NothingPrunable.
std::pair<std::size_t, std::int64_t> select_victim(const std::vector<std::vector<double>> &normalized,
                                                   const Eligibility &eligible);

/// Interleaves training, importance accumulation and pruning on one model.
/// Weights are updated in place.
class Pruner {
public:
  using Observer = std::function<void(const Pruner &, const PruneEvent &)>;

  Pruner(const CompGraph &graph, const GroupTable &table, WeightStore &weights, PruneConfig config);

  /// One training iteration; prunes when the interval is reached and the
  /// target is not. Returns the batch loss.
  double step(const Batch &batch);
  /// Steps until the FLOPs target or max_iterations is reached. `observer`
  /// runs after every prune.
  void run(BatchStream &stream, const Observer &observer = {});

  bool target_reached() const;
  const MaskSet &masks() const { return masks_; }
  const std::vector<PruneEvent> &events() const { return events_; }
  const FisherAccumulator &accumulator() const { return acc_; }
  std::int64_t iteration() const { return iteration_; }
  std::int64_t initial_flops() const { return initial_flops_; }
  std::int64_t current_flops() const { return current_flops_; }
  double remaining_fraction() const;
  double last_loss() const { return last_loss_; }
  const WeightStore &weights() const { return *weights_; }
  const PruneConfig &config() const { return config_; }

private:
  PruneEvent prune_one();

  const CompGraph *graph_;
  const GroupTable *table_;
  WeightStore *weights_;
  PruneConfig config_;
  MaskSet masks_;
  FisherAccumulator acc_;
  SgdState sgd_state_;
  std::vector<PruneEvent> events_;
  std::int64_t iteration_ = 0;
  std::int64_t initial_flops_ = 0;
  std::int64_t current_flops_ = 0;
  double last_loss_ = 0.0;
};

struct RewriteResult {
  CompGraph graph;
  WeightStore weights;
};

/// Physically removes every dead channel: member input channels, parent
/// output channels with their biases, and BN parameters and statistics.
RewriteResult rewrite(const CompGraph &graph, const GroupTable &table, const WeightStore &weights,
                      const MaskSet &masks);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::int64_t samples = 0;
};

/// Eval-mode loss and top-1 accuracy over the whole dataset. Throws EmptyDataset.
EvalResult evaluate(const CompGraph &graph, const WeightStore &weights, const Dataset &data,
                    std::int64_t batch_size, const InputMasks<float> &masks = {});

struct TrainResult {
  std::int64_t iterations = 0;
  std::vector<double> losses; // per iteration
};

/// Plain supervised training with a fresh optimizer state.
TrainResult train(const CompGraph &graph, WeightStore &weights, BatchStream &stream,
                  std::int64_t iterations, const SgdConfig &sgd);

/// `epochs` passes over the stream's dataset.
TrainResult finetune(const CompGraph &graph, WeightStore &weights, BatchStream &stream,
                     std::int64_t epochs, const SgdConfig &sgd);

} // namespace chanprune

#endif
