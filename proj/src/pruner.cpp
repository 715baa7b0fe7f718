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

#include "chanprune/pruner.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "chanprune/error.hpp"

namespace chanprune {

void PruneConfig::validate() const {
  if (interval < 1) fail(ErrorCode::kInvalidArgument, "interval must be >= 1");
  if (!(flops_target > 0.0 && flops_target <= 1.0))
    fail(ErrorCode::kInvalidArgument, "flops target must lie in (0, 1]");
  if (min_live_slots < 1) fail(ErrorCode::kInvalidArgument, "min live slots must be >= 1");
  if (max_iterations < 1) fail(ErrorCode::kInvalidArgument, "max iterations must be >= 1");
  if (!(sgd.lr >= 0.0)) fail(ErrorCode::kInvalidArgument, "lr must be >= 0");
  if (!(sgd.momentum >= 0.0 && sgd.momentum < 1.0))
    fail(ErrorCode::kInvalidArgument, "momentum must lie in [0, 1)");
  if (!(sgd.weight_decay >= 0.0)) fail(ErrorCode::kInvalidArgument, "weight decay must be >= 0");
}

nlohmann::ordered_json event_json(const PruneEvent &e) {
  nlohmann::ordered_json j;
  j["iteration"] = e.iteration;
  j["group"] = e.group;
  j["slot"] = e.slot;
  j["raw_score"] = e.raw_score;
  j["normalized_score"] = e.normalized_score;
  j["delta_flops"] = e.delta_flops;
  j["delta_memory"] = e.delta_memory;
  j["flops_remaining_fraction"] = e.flops_remaining_fraction;
  j["flops_after"] = e.flops_after;
  j["memory_after"] = e.memory_after;
  return j;
}

PruneEvent event_from_json(const nlohmann::json &j) {
  try {
    PruneEvent e;
    e.iteration = j.at("iteration").get<std::int64_t>();
    e.group = j.at("group").get<std::size_t>();
    e.slot = j.at("slot").get<std::int64_t>();
    e.raw_score = j.value("raw_score", 0.0);
    e.normalized_score = j.value("normalized_score", 0.0);
    e.delta_flops = j.at("delta_flops").get<std::int64_t>();
    e.delta_memory = j.at("delta_memory").get<std::int64_t>();
    e.flops_remaining_fraction = j.at("flops_remaining_fraction").get<double>();
    e.flops_after = j.value("flops_after", std::int64_t{0});
    e.memory_after = j.value("memory_after", std::int64_t{0});
    return e;
  } catch (const nlohmann::json::exception &ex) {
    fail(ErrorCode::kParseError, std::string("prune event: ") + ex.what());
  }
}

Eligibility prune_candidates(const CompGraph &graph, const GroupTable &table, const MaskSet &masks,
                             std::int64_t min_live_slots) {
  const auto live = channel_liveness(graph, table, masks);
  // Per class: (layer, live channels of that layer in the class).
  std::vector<std::vector<std::pair<std::size_t, std::int64_t>>> touches(
      static_cast<std::size_t>(table.class_count()));
  std::vector<std::int64_t> layer_live(graph.size(), 0);
  for (std::size_t k = 0; k < graph.size(); ++k) {
    std::map<std::int64_t, std::int64_t> per_class;
    for (std::size_t ch = 0; ch < live[k].size(); ++ch) {
      if (!live[k][ch]) continue;
      ++layer_live[k];
      ++per_class[table.class_of_channel[k][ch]];
    }
    for (const auto &[cls, n] : per_class) touches[static_cast<std::size_t>(cls)].emplace_back(k, n);
  }
  Eligibility out(table.size());
  for (std::size_t g = 0; g < table.size(); ++g) {
    const std::int64_t width = table.group(g).width;
    out[g].assign(static_cast<std::size_t>(width), 0);
    if (masks.live_count(g) <= min_live_slots) continue;
    for (std::int64_t s = 0; s < width; ++s) {
      if (!masks.live(g, s) || masks.pinned(g, s)) continue;
      bool ok = true;
      for (const auto &[k, n] : touches[static_cast<std::size_t>(table.class_of_slot[g][static_cast<std::size_t>(s)])])
        if (layer_live[k] - n < 1) ok = false;
      out[g][static_cast<std::size_t>(s)] = ok ? 1 : 0;
    }
  }
  return out;
}

std::pair<std::size_t, std::int64_t> select_victim(const std::vector<std::vector<double>> &normalized,
                                                   const Eligibility &eligible) {
  if (normalized.size() != eligible.size())
    fail(ErrorCode::kShapeMismatch, "scores and candidates cover different groups");
  bool found = false;
  double best = 0.0;
  std::pair<std::size_t, std::int64_t> victim{0, 0};
  for (std::size_t g = 0; g < eligible.size(); ++g) {
    if (normalized[g].size() != eligible[g].size())
      fail(ErrorCode::kShapeMismatch, "scores of group " + std::to_string(g));
    for (std::size_t s = 0; s < eligible[g].size(); ++s) {
      if (!eligible[g][s]) continue;
      const double v = normalized[g][s];
      if (!found || v < best) {
        found = true;
        best = v;
        victim = {g, static_cast<std::int64_t>(s)};
      }
    }
  }
  if (!found) fail(ErrorCode::kNothingPrunable, "no group has a prunable slot left");
  return victim;
}

Pruner::Pruner(const CompGraph &graph, const GroupTable &table, WeightStore &weights,
               PruneConfig config)
    : graph_(&graph), table_(&table), weights_(&weights), config_(config),
      masks_(MaskSet::all_ones(table)), acc_(table) {
  config_.validate();
  validate_weights(graph, weights);
  initial_flops_ = flops_of_graph(graph, table, masks_);
  current_flops_ = initial_flops_;
}

double Pruner::remaining_fraction() const {
  if (initial_flops_ == 0) return 1.0;
  return static_cast<double>(current_flops_) / static_cast<double>(initial_flops_);
}

bool Pruner::target_reached() const { return remaining_fraction() <= config_.flops_target; }

double Pruner::step(const Batch &batch) {
  const auto input_masks = layer_input_masks<float>(*graph_, *table_, masks_);
  auto fwd = forward<float>(*graph_, weights_->tensors(), input_masks, batch.inputs, batch.labels,
                            Mode::kTrain);
  const auto grads = backward<float>(*graph_, weights_->tensors(), fwd.tape);
  accumulate_batch(*graph_, *table_, fwd.tape, grads.act_grads, acc_);
  update_running_stats(*graph_, *weights_, fwd.tape);
  sgd_step(*weights_, grads.params, config_.sgd, sgd_state_);
  ++iteration_;
  last_loss_ = fwd.loss;
  if (iteration_ % config_.interval == 0 && !target_reached()) events_.push_back(prune_one());
  return fwd.loss;
}

PruneEvent Pruner::prune_one() {
  const auto eligible = prune_candidates(*graph_, *table_, masks_, config_.min_live_slots);
  const auto ledger = build_cost_ledger(*graph_, *table_, masks_, config_.norm);
  const auto raw = acc_.scores(masks_, config_.first_order);
  const auto normalized = normalize(raw, ledger, masks_);
  const auto [g, s] = select_victim(normalized, eligible);
  const auto &cost = ledger.slots[g][static_cast<std::size_t>(s)];
  PruneEvent e;
  e.iteration = iteration_;
  e.group = g;
  e.slot = s;
  e.raw_score = raw[g][static_cast<std::size_t>(s)];
  e.normalized_score = normalized[g][static_cast<std::size_t>(s)];
  e.delta_flops = cost.delta_flops;
  e.delta_memory = cost.delta_memory;
  masks_.prune(g, s);
  acc_.zeroize();
  current_flops_ = flops_of_graph(*graph_, *table_, masks_);
  e.flops_after = current_flops_;
  e.memory_after = memory_of_graph(*graph_, *table_, masks_);
  e.flops_remaining_fraction = remaining_fraction();
  return e;
}

void Pruner::run(BatchStream &stream, const Observer &observer) {
  while (iteration_ < config_.max_iterations) {
    const std::size_t before = events_.size();
    step(stream.next());
    if (events_.size() > before && observer) observer(*this, events_.back());
    if (target_reached()) break;
  }
}

namespace {

std::vector<std::int64_t> live_indices(const std::vector<std::uint8_t> &live, std::int64_t begin,
                                       std::int64_t end) {
  std::vector<std::int64_t> out;
  for (std::int64_t i = begin; i < end; ++i)
    if (live[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

Tensor<float> take(const Tensor<float> &t, const std::vector<std::int64_t> &keep) {
  Tensor<float> out({static_cast<std::int64_t>(keep.size())});
  for (std::size_t i = 0; i < keep.size(); ++i) out[i] = t[static_cast<std::size_t>(keep[i])];
  return out;
}

} // namespace

RewriteResult rewrite(const CompGraph &graph, const GroupTable &table, const WeightStore &weights,
                      const MaskSet &masks) {
  validate_weights(graph, weights);
  const auto live = channel_liveness(graph, table, masks);
  std::vector<Layer> layers = graph.layers();
  TensorMap<float> out;
  for (std::size_t k = 0; k < graph.size(); ++k) {
    Layer &l = layers[k];
    const auto keep = live_indices(live[k], 0, static_cast<std::int64_t>(live[k].size()));
    if (keep.empty()) fail(ErrorCode::kEmptyLayer, "layer '" + l.id + "' has no live channel");
    switch (l.kind) {
    case LayerKind::kConv:
    case LayerKind::kFC: {
      const auto &in_live = live[graph.input_indices(k).front()];
      const std::int64_t ci = static_cast<std::int64_t>(in_live.size());
      const std::int64_t co = static_cast<std::int64_t>(live[k].size());
      const std::int64_t g = l.kind == LayerKind::kConv ? l.attrs.groups : 1;
      const std::int64_t ib = ci / g, ob = co / g;
      const std::int64_t kk = l.kind == LayerKind::kConv ? l.attrs.kernel_h * l.attrs.kernel_w : 1;
      // Blocks that keep outputs; they must all keep the same shape.
      std::vector<std::vector<std::int64_t>> in_keep, out_keep;
      for (std::int64_t b = 0; b < g; ++b) {
        auto o = live_indices(live[k], b * ob, (b + 1) * ob);
        auto i = live_indices(in_live, b * ib, (b + 1) * ib);
        if (o.empty()) continue;
        if (i.empty() || (!out_keep.empty() && (o.size() != out_keep.front().size() ||
                                                 i.size() != in_keep.front().size())))
          fail(ErrorCode::kInternal, "layer '" + l.id + "': live channels differ across groups");
        out_keep.push_back(std::move(o));
        in_keep.push_back(std::move(i));
      }
      const std::int64_t new_g = static_cast<std::int64_t>(out_keep.size());
      const std::int64_t new_ib = static_cast<std::int64_t>(in_keep.front().size());
      const Tensor<float> &w = weights.at(l.id + ".weight");
      Dims dims = w.dims();
      dims[0] = static_cast<std::int64_t>(keep.size());
      dims[1] = new_ib;
      Tensor<float> nw(dims);
      std::size_t at = 0;
      for (std::size_t b = 0; b < out_keep.size(); ++b)
        for (std::int64_t o : out_keep[b])
          for (std::int64_t i : in_keep[b]) {
            const std::int64_t ir = i % ib;
            const float *src = w.data() + (o * ib + ir) * kk;
            for (std::int64_t q = 0; q < kk; ++q) nw[at++] = src[q];
          }
      out.emplace(l.id + ".weight", std::move(nw));
      if (weights.contains(l.id + ".bias"))
        out.emplace(l.id + ".bias", take(weights.at(l.id + ".bias"), keep));
      l.attrs.out_channels = static_cast<std::int64_t>(keep.size());
      if (l.kind == LayerKind::kConv) l.attrs.groups = new_g;
      break;
    }
    case LayerKind::kBatchNorm:
      for (const char *suffix : {".weight", ".bias", ".running_mean", ".running_var"})
        out.emplace(l.id + suffix, take(weights.at(l.id + suffix), keep));
      break;
    case LayerKind::kInput:
    case LayerKind::kOutput:
      if (keep.size() != live[k].size())
        fail(ErrorCode::kInternal, "layer '" + l.id + "' lost channels");
      break;
    default:
      break;
    }
  }
  RewriteResult result{CompGraph::build(std::move(layers), graph.output_id()),
                       WeightStore(std::move(out))};
  validate_weights(result.graph, result.weights);
  return result;
}

EvalResult evaluate(const CompGraph &graph, const WeightStore &weights, const Dataset &data,
                    std::int64_t batch_size, const InputMasks<float> &masks) {
  if (data.size() == 0) fail(ErrorCode::kEmptyDataset, "dataset has no samples");
  if (batch_size < 1) fail(ErrorCode::kInvalidArgument, "batch size must be >= 1");
  EvalResult r;
  double loss_sum = 0.0;
  std::int64_t correct = 0;
  for (std::int64_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::int64_t end = std::min(data.size(), begin + batch_size);
    const Batch b = slice_batch(data, begin, end);
    const auto fwd =
        forward<float>(graph, weights.tensors(), masks, b.inputs, b.labels, Mode::kEval);
    const std::int64_t n = end - begin;
    const std::int64_t classes = fwd.tape.probs.dim(1);
    for (std::int64_t i = 0; i < n; ++i) {
      const float *p = fwd.tape.probs.data() + i * classes;
      std::int64_t arg = 0;
      for (std::int64_t c = 1; c < classes; ++c)
        if (p[c] > p[arg]) arg = c;
      if (arg == static_cast<std::int64_t>(b.labels[static_cast<std::size_t>(i)])) ++correct;
      loss_sum += static_cast<double>(fwd.tape.sample_losses[static_cast<std::size_t>(i)]);
    }
  }
  r.samples = data.size();
  r.loss = loss_sum / static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

TrainResult train(const CompGraph &graph, WeightStore &weights, BatchStream &stream,
                  std::int64_t iterations, const SgdConfig &sgd) {
  TrainResult r;
  SgdState state;
  for (std::int64_t t = 0; t < iterations; ++t) {
    const Batch b = stream.next();
    auto fwd = forward<float>(graph, weights.tensors(), {}, b.inputs, b.labels, Mode::kTrain);
    const auto grads = backward<float>(graph, weights.tensors(), fwd.tape);
    update_running_stats(graph, weights, fwd.tape);
    sgd_step(weights, grads.params, sgd, state);
    r.losses.push_back(fwd.loss);
    ++r.iterations;
  }
  return r;
}

TrainResult finetune(const CompGraph &graph, WeightStore &weights, BatchStream &stream,
                     std::int64_t epochs, const SgdConfig &sgd) {
  if (epochs < 0) fail(ErrorCode::kInvalidArgument, "epochs must be >= 0");
  return train(graph, weights, stream, epochs * stream.batches_per_epoch(), sgd);
}

} // namespace chanprune
