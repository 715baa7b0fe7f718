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

// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset; exit status is non-zero if any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>

#include "ablation.hpp"
#include "chanprune/cost.hpp"
#include "chanprune/dataset.hpp"
#include "chanprune/error.hpp"
#include "chanprune/importance.hpp"
#include "chanprune/pruner.hpp"
#include "finite_diff.hpp"
#include "fixtures.hpp"
#include "group_ids.hpp"
#include "grouping_oracle.hpp"
#include "mac_counter.hpp"
#include "op_cases.hpp"
#include "params.hpp"
#include "random_graph.hpp"
#include "stats.hpp"

using namespace chanprune;
using namespace chanprune::testing;
using nlohmann::json;

namespace {

// Pinned thresholds.
constexpr int kRandomDags = 500;
constexpr double kGroupingBudgetSeconds = 10.0;
constexpr int kFdProbesPerSuite = 1000;
constexpr double kFdBudgetSeconds = 60.0;
constexpr double kMinSpearman = 0.8;
constexpr int kCostGraphs = 200;
constexpr int kRewriteStates = 20;
constexpr double kRewriteLossTol = 1e-6;
constexpr std::int64_t kInterval = 25;
constexpr int kSeeds = 5;
constexpr int kSeedsRequired = 4;
constexpr double kNormBudgetSeconds = 15.0 * 60.0;
constexpr double kMinBaselineAccuracy = 0.70;
constexpr double kMaxAccuracyDrop = 0.03;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char *format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::size_t group_of(const CompGraph &g, const GroupTable &t, const std::string &id) {
  return static_cast<std::size_t>(t.group_of_layer[g.index_of(id)]);
}

std::vector<std::pair<std::size_t, std::int64_t>> live_candidates(const CompGraph &g, const GroupTable &t,
                                                                  const MaskSet &m) {
  const auto elig = prune_candidates(g, t, m, 1);
  std::vector<std::pair<std::size_t, std::int64_t>> out;
  for (std::size_t gi = 0; gi < t.size(); ++gi)
    for (std::int64_t s = 0; s < t.group(gi).width; ++s)
      if (elig[gi][static_cast<std::size_t>(s)]) out.emplace_back(gi, s);
  return out;
}

// ------------------------------------------------------------------ 1

Outcome grouping_matches_oracle() {
  std::mt19937_64 rng(2024);
  RandomGraphOptions o;
  o.max_convs = 12;
  int matched = 0, inconsistent = 0;
  double grouping_seconds = 0.0;
  std::string first_miss;
  for (int t = 0; t < kRandomDags; ++t) {
    const json m = random_manifest(rng, o);
    const CompGraph g = parse_graph(m);
    const OracleGrouping oracle = oracle_grouping(g);

    const Stopwatch watch;
    const ParentMap parents = find_parents(g);
    const auto partition = group_layers(g, parents, g.prunable_indices());
    std::optional<GroupTable> table;
    bool raised = false, wrong_error = false;
    try {
      table = build_groups(g, parents);
    } catch (const Error &e) {
      raised = true;
      wrong_error = e.code() != ErrorCode::kInconsistentWidth;
    }
    grouping_seconds += watch.seconds();

    bool ok = !wrong_error && raised == oracle.inconsistent &&
              partition_ids(g, partition) == oracle.groups;
    for (auto k : g.prunable_indices())
      ok = ok && parent_ids(g, parents, g.layer(k).id) == oracle.parents.at(g.layer(k).id);
    if (table) {
      for (const auto &gr : table->groups) {
        std::string smallest = g.layer(gr.members.front()).id;
        for (auto k : gr.members) smallest = std::min(smallest, g.layer(k).id);
        ok = ok && gr.width == oracle.widths.at(smallest);
      }
    }
    inconsistent += raised ? 1 : 0;
    matched += ok ? 1 : 0;
    if (!ok && first_miss.empty()) first_miss = m.dump();
  }
  Outcome r;
  r.pass = matched == kRandomDags && grouping_seconds < kGroupingBudgetSeconds;
  r.detail = fmt("%d/%d graphs match (%d rejected as inconsistent by both), grouping time %.2f s (< %.0f s)",
                 matched, kRandomDags, inconsistent, grouping_seconds, kGroupingBudgetSeconds);
  if (!first_miss.empty()) r.detail += "; first mismatch: " + first_miss;
  return r;
}

// ------------------------------------------------------------------ 2

Outcome bottleneck_worked_example() {
  const CompGraph g = bottleneck_block();
  const ParentMap p = find_parents(g);
  const GroupTable t = build_groups(g, p);
  using Ids = std::set<std::string>;
  const bool parents_ok = parent_ids(g, p, "C2") == Ids{"C1"} && parent_ids(g, p, "C5") == Ids{"C1"} &&
                          parent_ids(g, p, "C6") == Ids{"C4", "C5"};
  const auto groups = partition_ids(g, members_of(t));
  const bool coupled = groups.count(Ids{"C2", "C5"}) == 1;
  Outcome r;
  r.pass = parents_ok && coupled;
  r.detail = fmt("parents C2,C5 -> {C1}, C6 -> {C4,C5}: %s; group {C2,C5}: %s", parents_ok ? "yes" : "no",
                 coupled ? "yes" : "no");
  return r;
}

// ------------------------------------------------------------------ 3

struct FdStats {
  double worst = 0.0;
  std::size_t probes = 0, refined = 0, unresolved = 0;
  std::string worst_at;

  void add(const std::string &where, const std::vector<GradProbe> &probes_in) {
    for (const auto &pr : probes_in) {
      const double e = relative_error(pr.analytic, pr.numeric, kFdFloor);
      if (e > worst) {
        worst = e;
        worst_at = where + ":" + pr.tensor + "[" + std::to_string(pr.index) + "]";
      }
      ++probes;
      refined += pr.step < kFdStep / 2.0 ? 1 : 0;
      unresolved += pr.smooth ? 0 : 1;
    }
  }
};

Outcome gradient_fidelity() {
  const Stopwatch watch;
  FdStats ops, net;
  const auto cases = op_cases();
  const std::size_t per_case = (kFdProbesPerSuite + cases.size() - 1) / cases.size();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const CompGraph g = parse_graph(cases[i].manifest);
    const auto params = busy_weights(g, 100 + i).as<double>();
    const auto batch = random_batch(g.shape("x"), 2, 200 + i);
    const auto labels = random_labels(2, 3, 300 + i);
    std::mt19937_64 rng(400 + i);
    ops.add(cases[i].name, probe_param_grads(g, params, {}, batch, labels, cases[i].mode, per_case, rng));
  }

  const CompGraph g = reference_net();
  const GroupTable t = build_groups(g);
  MaskSet masks = MaskSet::all_ones(t);
  masks.prune(group_of(g, t, "conv2"), 5);
  masks.prune(group_of(g, t, "gconv3"), 2);
  masks.prune(group_of(g, t, "dw6"), 11);
  const auto m = layer_input_masks<double>(g, t, masks);
  const auto params = busy_weights(g, 7).as<double>();
  const auto batch = random_batch(g.shape("data"), 3, 8);
  const auto labels = random_labels(3, 10, 9);
  for (Mode mode : {Mode::kTrain, Mode::kEval}) {
    std::mt19937_64 rng(mode == Mode::kTrain ? 10 : 11);
    net.add(mode == Mode::kTrain ? "reference/train" : "reference/eval",
            probe_param_grads(g, params, m, batch, labels, mode, kFdProbesPerSuite / 2, rng));
  }
  const double seconds = watch.seconds();
  const double worst = std::max(ops.worst, net.worst);
  Outcome r;
  r.pass = worst < kFdTol && ops.probes >= kFdProbesPerSuite && net.probes >= kFdProbesPerSuite &&
           seconds < kFdBudgetSeconds;
  r.detail = fmt("%zu op kinds / %zu probes max rel err %.2e; reference net %zu probes max rel err %.2e "
                 "(< %.0e); %zu probes needed a smaller step to clear a kink, %zu never settled; %.1f s (< %.0f s)",
                 cases.size(), ops.probes, ops.worst, net.probes, net.worst, kFdTol, ops.refined + net.refined,
                 ops.unresolved + net.unresolved, seconds, kFdBudgetSeconds);
  if (!r.pass) r.detail += "; worst at " + (ops.worst > net.worst ? ops.worst_at : net.worst_at);
  return r;
}

// ------------------------------------------------------------------ 4

Outcome fisher_tracks_ablation() {
  constexpr std::int64_t kDim = 8, kHidden = 16, kClasses = 4, kDead = 5;
  // Overlapping classes so cross-entropy has a finite minimum to converge to.
  constexpr double kClassSpread = 2.0;
  const CompGraph g = parse_graph(manifest({1, kDim, 1, 1}, {fc("hidden", "x", kHidden), op("act", "relu", {"hidden"}),
                                                             fc("cls", "act", kClasses), op("out", "output", {"cls"})}));
  const GroupTable t = build_groups(g);
  const Dataset d = make_gaussian_mixture(2000, kDim, kClasses, 41, kClassSpread);
  WeightStore w = init_weights(g, 42);
  auto &wh = w.at("hidden.weight");
  for (std::int64_t j = 0; j < kDim; ++j) wh.values()[static_cast<std::size_t>(kDead * kDim + j)] = 0.0f;
  w.at("hidden.bias").values()[kDead] = 0.0f;
  {
    BatchStream s(d, 64, 43);
    train(g, w, s, 40 * s.batches_per_epoch(), {0.05, 0.9, 0.0});
    train(g, w, s, 20 * s.batches_per_epoch(), {0.005, 0.9, 0.0});
  }
  const double accuracy = evaluate(g, w, d, 250).accuracy;

  std::vector<Batch> batches;
  for (std::int64_t b = 0; b < d.size(); b += 250) batches.push_back(slice_batch(d, b, std::min(b + 250, d.size())));
  FisherAccumulator acc(t);
  const MaskSet ones = MaskSet::all_ones(t);
  const auto masks = layer_input_masks<float>(g, t, ones);
  for (const auto &b : batches) {
    const auto fwd = forward<float>(g, w.tensors(), masks, b.inputs, b.labels, Mode::kEval);
    const auto grads = backward<float>(g, w.tensors(), fwd.tape);
    accumulate_batch(g, t, fwd.tape, grads.act_grads, acc);
    acc.add_samples(static_cast<std::int64_t>(b.labels.size()));
  }
  const auto score = acc.scores(ones);
  const auto increase = ablation_increase(g, t, w, ones, batches, Mode::kEval);
  const std::size_t grp = group_of(g, t, "cls");
  const std::vector<double> s(score[grp].begin(), score[grp].end());
  const std::vector<double> a(increase[grp].begin(), increase[grp].end());
  const double rho = spearman(s, a);
  const bool dead_zero = s[kDead] == 0.0;
  Outcome r;
  r.pass = rho >= kMinSpearman && dead_zero;
  r.detail = fmt("train accuracy %.3f; Spearman(score, ablation increase) over %zu hidden channels = %.3f "
                 "(>= %.1f); dead channel score %.1e, ablation increase %.1e",
                 accuracy, s.size(), rho, kMinSpearman, s[kDead], a[kDead]);
  return r;
}

// ------------------------------------------------------------------ 5

Outcome opposed_members_cancel() {
  // Two consumers of one parent with negated weights feed an Add, so they see the same
  // downstream gradient and their input-mask gradients are exact negatives. Their biases differ,
  // so the sum is not identically zero.
  const CompGraph g = parse_graph(manifest({3, 3, 6, 6}, {conv("p", "x", 4, 3), op("rp", "relu", {"p"}),
                                                          conv("a", "rp", 5, 3), conv("b", "rp", 5, 3),
                                                          op("s", "add", {"a", "b"}), op("r", "relu", {"s"}),
                                                          op("gap", "global_avg_pool", {"r"}), fc("fc", "gap", 3),
                                                          op("out", "output", {"fc"})}));
  const GroupTable t = build_groups(g);
  WeightStore w = busy_weights(g, 5);
  const auto &wa = w.at("a.weight").values();
  auto &wb = w.at("b.weight").values();
  for (std::size_t i = 0; i < wa.size(); ++i) wb[i] = -wa[i];
  const auto x = random_batch(g.shape("x"), 3, 6);
  const auto y = random_labels(3, 3, 7);
  const auto params = w.as<double>();
  const auto fwd = forward<double>(g, params, {}, x, y, Mode::kEval);
  const auto grads = backward<double>(g, params, fwd.tape);
  const auto per_layer = sample_mask_grads<double>(g, fwd.tape, grads.act_grads);
  const std::size_t ia = g.index_of("a"), ib = g.index_of("b");
  bool opposed = true;
  double naive = 0.0;
  for (std::size_t i = 0; i < per_layer[ia].values().size(); ++i) {
    const double u = per_layer[ia].values()[i], v = per_layer[ib].values()[i];
    opposed = opposed && u == -v;
    naive += u * u + v * v;
  }
  FisherAccumulator acc(t);
  accumulate_batch(g, t, fwd.tape, grads.act_grads, acc);
  const std::size_t grp = group_of(g, t, "a");
  const bool shared = grp == group_of(g, t, "b");
  double fisher = 0.0;
  for (double s : acc.squares(grp)) fisher += std::abs(s);
  Outcome r;
  r.pass = shared && opposed && fisher == 0.0 && naive > 0.0;
  r.detail = fmt("members share a group: %s; gradients exactly opposed: %s; summed-then-squared importance %.1e "
                 "over %lld slots; squared-then-summed would be %.3e",
                 shared ? "yes" : "no", opposed ? "yes" : "no", fisher, static_cast<long long>(t.group(grp).width),
                 naive);
  return r;
}

// ------------------------------------------------------------------ 6

Outcome cost_model_exact() {
  std::mt19937_64 rng(6006);
  RandomGraphOptions o;
  o.batch = 2;
  int graphs = 0;
  long long checked = 0, mismatched = 0;
  while (graphs < kCostGraphs) {
    const CompGraph g = parse_graph(random_manifest(rng, o));
    GroupTable t;
    try {
      t = build_groups(g);
    } catch (const Error &) {
      continue;
    }
    ++graphs;
    MaskSet m = MaskSet::all_ones(t);
    for (int step = 0; step < 4; ++step) {
      const auto cands = live_candidates(g, t, m);
      if (cands.empty()) break;
      const std::int64_t flops = flops_of_graph(g, t, m), memory = memory_of_graph(g, t, m);
      for (const auto &[gi, s] : cands) {
        MaskSet after = m;
        after.prune(gi, s);
        const bool ok = delta_flops(g, t, m, gi, s) == flops - flops_of_graph(g, t, after) &&
                        delta_memory(g, t, m, gi, s) == memory - memory_of_graph(g, t, after);
        mismatched += ok ? 0 : 1;
        ++checked;
      }
      const auto [gi, s] = cands[rng() % cands.size()];
      m.prune(gi, s);
    }
  }
  Outcome r;
  r.pass = mismatched == 0 && checked > 0;
  r.detail = fmt("%d graphs, %lld candidates at up to 4 mask states each, %lld mismatches", graphs, checked,
                 mismatched);
  return r;
}

// ------------------------------------------------------------------ 7

Outcome rewrite_equivalence() {
  const CompGraph g = reference_net();
  const GroupTable t = build_groups(g);
  const Dataset train_set = make_pattern_dataset(512, 71);
  const Batch probe = slice_batch(make_pattern_dataset(64, 72), 0, 64);
  WeightStore w = init_weights(g, 73);
  PruneConfig c;
  c.interval = 4;
  c.flops_target = 0.3;
  c.sgd = {0.01, 0.9, 5e-4};
  c.seed = 74;
  struct State {
    MaskSet masks;
    WeightStore weights;
  };
  std::vector<State> states;
  Pruner p(g, t, w, c);
  BatchStream stream(train_set, 32, c.seed);
  p.run(stream, [&](const Pruner &pr, const PruneEvent &) { states.push_back({pr.masks(), pr.weights()}); });

  double worst = 0.0;
  int sampled = 0;
  if (static_cast<int>(states.size()) >= kRewriteStates) {
    for (int i = 0; i < kRewriteStates; ++i) {
      const auto &s = states[static_cast<std::size_t>(i) * (states.size() - 1) / (kRewriteStates - 1)];
      const auto masked = forward<float>(g, s.weights.tensors(), layer_input_masks<float>(g, t, s.masks),
                                         probe.inputs, probe.labels, Mode::kEval);
      const auto rw = rewrite(g, t, s.weights, s.masks);
      const auto slim = forward<float>(rw.graph, rw.weights.tensors(), {}, probe.inputs, probe.labels, Mode::kEval);
      worst = std::max(worst, std::abs(masked.loss - slim.loss));
      ++sampled;
    }
  }
  Outcome r;
  r.pass = sampled == kRewriteStates && worst <= kRewriteLossTol;
  r.detail = fmt("%d of %zu mask states sampled; max |masked loss - rewritten loss| = %.2e (<= %.0e)", sampled,
                 states.size(), worst, kRewriteLossTol);
  return r;
}

// ------------------------------------------------------------------ 8

Outcome prune_loop_mechanics() {
  const CompGraph g = reference_net();
  const GroupTable t = build_groups(g);
  const Dataset d = make_pattern_dataset(512, 81);
  WeightStore w = init_weights(g, 82);
  PruneConfig c;
  c.interval = kInterval;
  c.flops_target = 0.5;
  c.sgd = {0.01, 0.9, 5e-4};
  c.seed = 83;
  Pruner p(g, t, w, c);
  BatchStream stream(d, 16, c.seed);
  p.run(stream);
  const auto &ev = p.events();
  bool on_schedule = !ev.empty(), halted_first = !ev.empty();
  std::int64_t telescoped = p.initial_flops();
  for (std::size_t i = 0; i < ev.size(); ++i) {
    on_schedule = on_schedule && ev[i].iteration == kInterval * static_cast<std::int64_t>(i + 1);
    telescoped -= ev[i].delta_flops;
    const bool last = i + 1 == ev.size();
    halted_first = halted_first && (last ? ev[i].flops_remaining_fraction <= c.flops_target
                                         : ev[i].flops_remaining_fraction > c.flops_target);
  }
  halted_first = halted_first && p.iteration() == ev.back().iteration;
  const std::int64_t final_flops = flops_of_graph(g, t, p.masks());
  const std::int64_t recount = count_macs(rewrite(g, t, w, p.masks()).graph);
  const bool telescopes = telescoped == final_flops && final_flops == p.current_flops() && recount == final_flops;
  Outcome r;
  r.pass = on_schedule && telescopes && halted_first;
  r.detail = fmt("%zu events at multiples of %lld: %s; ledger telescopes to final FLOPs %lld (recount %lld): %s; "
                 "stopped at first event with remaining fraction %.4f <= %.2f: %s",
                 ev.size(), static_cast<long long>(kInterval), on_schedule ? "yes" : "no",
                 static_cast<long long>(final_flops), static_cast<long long>(recount), telescopes ? "yes" : "no",
                 ev.empty() ? 1.0 : ev.back().flops_remaining_fraction, c.flops_target, halted_first ? "yes" : "no");
  return r;
}

// ------------------------------------------------------------------ 9, 10

// Shared desk-scale setup: the reference net trained on noisy synthetic patterns.
struct DeskSetup {
  CompGraph graph = reference_net();
  GroupTable table = build_groups(graph);
  Dataset train_set = make_pattern_dataset(2000, 901, 32, 2.5);
  Dataset test_set = make_pattern_dataset(1000, 902, 32, 2.5);
};

const DeskSetup &desk() {
  static const DeskSetup setup;
  return setup;
}

// The full training budget: a short high-rate phase and a low-rate tail.
void train_budget(const CompGraph &g, WeightStore &w, const Dataset &d, std::uint64_t seed) {
  BatchStream s(d, 32, seed);
  finetune(g, w, s, 8, {0.05, 0.9, 5e-4});
  finetune(g, w, s, 2, {0.005, 0.9, 5e-4});
}

struct Pretrained {
  WeightStore weights;
  double accuracy = 0.0;
};

const Pretrained &pretrained(int seed) {
  static std::map<int, Pretrained> cache;
  auto it = cache.find(seed);
  if (it != cache.end()) return it->second;
  const DeskSetup &s = desk();
  Pretrained p{init_weights(s.graph, static_cast<std::uint64_t>(seed)), 0.0};
  train_budget(s.graph, p.weights, s.train_set, static_cast<std::uint64_t>(1000 + seed));
  p.accuracy = evaluate(s.graph, p.weights, s.test_set, 200).accuracy;
  return cache.emplace(seed, std::move(p)).first->second;
}

struct PruneRun {
  MaskSet masks;
  WeightStore weights;
  std::int64_t memory = 0, params = 0, flops = 0;
};

const PruneRun &pruned(int seed, NormMode norm) {
  static std::map<std::pair<int, NormMode>, PruneRun> cache;
  const auto key = std::make_pair(seed, norm);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const DeskSetup &s = desk();
  WeightStore w = pretrained(seed).weights;
  PruneConfig c;
  c.interval = 10;
  c.flops_target = 0.5;
  c.norm = norm;
  c.sgd = {0.005, 0.9, 5e-4};
  c.seed = static_cast<std::uint64_t>(2000 + seed);
  Pruner p(s.graph, s.table, w, c);
  BatchStream stream(s.train_set, 32, c.seed);
  p.run(stream);
  PruneRun r{p.masks(), w, memory_of_graph(s.graph, s.table, p.masks()),
             params_of_graph(s.graph, s.table, p.masks()), p.current_flops()};
  return cache.emplace(key, std::move(r)).first->second;
}

Outcome normalization_direction() {
  const Stopwatch watch;
  int good = 0;
  std::string rows;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const PruneRun &m = pruned(seed, NormMode::kMemory);
    const PruneRun &f = pruned(seed, NormMode::kFlops);
    const PruneRun &u = pruned(seed, NormMode::kNone);
    const bool memory_ok = m.memory <= f.memory;
    const bool params_ok = u.params <= m.params && u.params <= f.params;
    good += memory_ok && params_ok ? 1 : 0;
    rows += fmt(" [seed %d mem M/F %lld/%lld params U/M/F %lld/%lld/%lld %s]", seed, static_cast<long long>(m.memory),
                static_cast<long long>(f.memory), static_cast<long long>(u.params),
                static_cast<long long>(m.params), static_cast<long long>(f.params),
                memory_ok && params_ok ? "ok" : "x");
  }
  const double seconds = watch.seconds();
  Outcome r;
  r.pass = good >= kSeedsRequired && seconds < kNormBudgetSeconds;
  r.detail = fmt("%d/%d seeds with memory(M) <= memory(F) and params(U) fewest (need %d); %.0f s (< %.0f s);", good,
                 kSeeds, kSeedsRequired, seconds, kNormBudgetSeconds) +
             rows;
  return r;
}

Outcome end_to_end_recovery() {
  const DeskSetup &s = desk();
  int good = 0;
  bool baselines_ok = true;
  std::string rows;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const Pretrained &base = pretrained(seed);
    const PruneRun &run = pruned(seed, NormMode::kMemory);
    RewriteResult slim = rewrite(s.graph, s.table, run.weights, run.masks);
    const double ratio = static_cast<double>(count_macs(slim.graph)) / static_cast<double>(count_macs(s.graph));
    const double before_ft = evaluate(slim.graph, slim.weights, s.test_set, 200).accuracy;
    train_budget(slim.graph, slim.weights, s.train_set, static_cast<std::uint64_t>(3000 + seed));
    const double after = evaluate(slim.graph, slim.weights, s.test_set, 200).accuracy;
    baselines_ok = baselines_ok && base.accuracy >= kMinBaselineAccuracy;
    const bool ok = base.accuracy >= kMinBaselineAccuracy && ratio <= 0.5 && after >= base.accuracy - kMaxAccuracyDrop;
    good += ok ? 1 : 0;
    rows += fmt(" [seed %d base %.3f pruned %.3f finetuned %.3f flops %.3f %s]", seed, base.accuracy, before_ft, after,
                ratio, ok ? "ok" : "x");
  }
  Outcome r;
  r.pass = good >= kSeedsRequired;
  r.detail = fmt("%d/%d seeds within %.0f points of a >= %.0f%% baseline at <= 50%% FLOPs (need %d)%s;", good, kSeeds,
                 kMaxAccuracyDrop * 100, kMinBaselineAccuracy * 100, kSeedsRequired,
                 baselines_ok ? "" : ", some baselines below threshold") +
             rows;
  return r;
}

struct Criterion {
  int id;
  const char *name;
  std::function<Outcome()> run;
};

} // namespace

int main(int argc, char **argv) {
  const std::vector<Criterion> all{
      {1, "grouping matches brute-force oracle", grouping_matches_oracle},
      {2, "bottleneck block parents and coupling", bottleneck_worked_example},
      {3, "gradients match central differences", gradient_fidelity},
      {4, "Fisher scores rank like exact ablation", fisher_tracks_ablation},
      {5, "coupled gradients summed before squaring", opposed_members_cancel},
      {6, "cost model exact", cost_model_exact},
      {7, "masked and rewritten networks agree", rewrite_equivalence},
      {8, "prune loop schedule, ledger and stopping", prune_loop_mechanics},
      {9, "memory vs FLOPs vs no normalization", normalization_direction},
      {10, "accuracy recovers after pruning to 50% FLOPs", end_to_end_recovery},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failed = 0;
  for (const auto &c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const Stopwatch watch;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception &e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s [%d] %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, watch.seconds(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
