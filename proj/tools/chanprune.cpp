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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "chanprune/cost.hpp"
#include "chanprune/dataset.hpp"
#include "chanprune/error.hpp"
#include "chanprune/graph.hpp"
#include "chanprune/grouping.hpp"
#include "chanprune/masks.hpp"
#include "chanprune/pruner.hpp"
#include "chanprune/weights.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace chanprune;
using ojson = nlohmann::ordered_json;

namespace {

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot write '" + path.string() + "'");
  out << text;
}

void write_json(const fs::path &path, const ojson &j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const std::string &path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorCode::kParseError, path + ": " + e.what());
  }
}

void print_shape_table(const CompGraph &graph) {
  std::printf("%-20s %-16s %s\n", "layer", "kind", "shape");
  for (std::size_t k = 0; k < graph.size(); ++k)
    std::printf("%-20s %-16s %s\n", graph.layer(k).id.c_str(),
                std::string(kind_name(graph.layer(k).kind)).c_str(),
                graph.shape(k).to_string().c_str());
}

struct ModelPaths {
  std::string graph, weights, index;
};

void add_model_options(CLI::App *cmd, ModelPaths &p) {
  cmd->add_option("--graph", p.graph, "graph manifest (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--weights", p.weights, "float32 weight blob")->required()->check(CLI::ExistingFile);
  cmd->add_option("--weights-index", p.index, "weight index (JSON)")->required()->check(CLI::ExistingFile);
}

void add_sgd_options(CLI::App *cmd, SgdConfig &sgd) {
  cmd->add_option("--lr", sgd.lr, "learning rate")->capture_default_str();
  cmd->add_option("--momentum", sgd.momentum, "SGD momentum")->capture_default_str();
  cmd->add_option("--weight-decay", sgd.weight_decay, "L2 weight decay")->capture_default_str();
}

ojson model_stats(const CompGraph &graph) {
  const ChannelLiveness live = dense_liveness(graph);
  return {{"flops", flops_of_graph(graph, live)},
          {"memory", memory_of_graph(graph, live)},
          {"params", params_of_graph(graph, live)}};
}

// Remaining output channels of every prunable layer under `masks`.
std::vector<std::pair<std::int64_t, std::int64_t>> layer_remaining(const CompGraph &graph,
                                                                   const GroupTable &table,
                                                                   const MaskSet &masks) {
  const auto live = channel_liveness(graph, table, masks);
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  for (std::size_t k : graph.prunable_indices()) {
    std::int64_t n = 0;
    for (auto v : live[k]) n += v;
    out.emplace_back(n, static_cast<std::int64_t>(live[k].size()));
  }
  return out;
}

// ---------------------------------------------------------------- validate

int cmd_validate(const std::string &graph_path) {
  try {
    const CompGraph graph = load_graph_file(graph_path);
    print_shape_table(graph);
    std::printf("OK\n");
    return 0;
  } catch (const Error &e) {
    if (e.is_internal()) throw;
    std::printf("%s\n", e.what());
    return 1;
  }
}

int cmd_group(const std::string &graph_path) {
  const CompGraph graph = load_graph_file(graph_path);
  const GroupTable table = build_groups(graph);
  std::printf("%s\n", group_table_json(graph, table).dump(2).c_str());
  return 0;
}

// ---------------------------------------------------------------- prune

struct PruneArgs {
  ModelPaths model;
  std::string data, eval_data, out;
  PruneConfig config;
  std::string norm = "memory";
  std::int64_t checkpoint_every = 0;
  std::int64_t finetune_epochs = 0;
  std::int64_t batch_size = 32;
};

void save_model(const fs::path &dir, const std::string &stem, const CompGraph &graph,
                const WeightStore &weights) {
  write_json(dir / (stem + ".json"), serialize_graph(graph));
  save_weights_files(graph, weights, (dir / (stem + ".bin")).string(),
                     (dir / (stem + ".index.json")).string());
}

void write_events(const fs::path &path, const std::vector<PruneEvent> &events) {
  std::string text;
  for (const auto &e : events) text += event_json(e).dump() + "\n";
  write_text(path, text);
}

ojson scores_json(const Pruner &pruner) {
  ojson j = ojson::object();
  const auto scores = pruner.accumulator().scores(pruner.masks(), pruner.config().first_order);
  for (std::size_t g = 0; g < scores.size(); ++g) {
    ojson arr = ojson::array();
    for (double v : scores[g]) arr.push_back(std::isfinite(v) ? ojson(v) : ojson(nullptr));
    j[std::to_string(g)] = std::move(arr);
  }
  return {{"samples", pruner.accumulator().sample_count()}, {"scores", j}};
}

int cmd_prune(PruneArgs &a) {
  const auto norm = norm_mode_from_name(a.norm);
  if (!norm) fail(ErrorCode::kInvalidArgument, "--norm must be memory, flops or none");
  a.config.norm = *norm;
  a.config.validate();
  if (a.checkpoint_every < 0) fail(ErrorCode::kInvalidArgument, "--checkpoint-every must be >= 0");
  if (a.finetune_epochs < 0) fail(ErrorCode::kInvalidArgument, "--finetune-epochs must be >= 0");

  const CompGraph graph = load_graph_file(a.model.graph);
  WeightStore weights = load_weights_files(graph, a.model.weights, a.model.index);
  const Dataset data = read_dataset(a.data);
  const Dataset eval_data = a.eval_data.empty() ? data : read_dataset(a.eval_data);
  const GroupTable table = build_groups(graph);

  const fs::path out(a.out);
  fs::create_directories(out);
  ojson summary;
  summary["status"] = "running";
  summary["config"] = {{"target_flops", a.config.flops_target},
                       {"interval", a.config.interval},
                       {"norm", a.norm},
                       {"lr", a.config.sgd.lr},
                       {"momentum", a.config.sgd.momentum},
                       {"weight_decay", a.config.sgd.weight_decay},
                       {"seed", a.config.seed},
                       {"max_iters", a.config.max_iterations},
                       {"batch_size", a.batch_size},
                       {"finetune_epochs", a.finetune_epochs}};
  const MaskSet ones = MaskSet::all_ones(table);
  summary["initial"] = {{"flops", flops_of_graph(graph, table, ones)},
                        {"memory", memory_of_graph(graph, table, ones)},
                        {"params", params_of_graph(graph, table, ones)}};
  summary["accuracy_before"] = evaluate(graph, weights, eval_data, a.batch_size).accuracy;

  BatchStream stream(data, a.batch_size, a.config.seed);
  Pruner pruner(graph, table, weights, a.config);
  std::int64_t checkpoints = 0;
  auto observer = [&](const Pruner &p, const PruneEvent &) {
    if (a.checkpoint_every == 0 || p.events().size() % static_cast<std::size_t>(a.checkpoint_every) != 0)
      return;
    const fs::path dir = out / "checkpoints" / ("prune_" + std::to_string(p.events().size()));
    fs::create_directories(dir);
    save_model(dir, "model", graph, p.weights());
    write_json(dir / "masks.json", p.masks().to_json());
    ++checkpoints;
  };

  try {
    pruner.run(stream, observer);
  } catch (const Error &e) {
    summary["status"] = "failed";
    summary["partial"] = true;
    summary["error"] = e.what();
    summary["iterations"] = pruner.iteration();
    summary["events"] = pruner.events().size();
    write_events(out / "events.jsonl", pruner.events());
    write_json(out / "masks.json", pruner.masks().to_json());
    write_json(out / "scores.json", scores_json(pruner));
    save_model(out, "state", graph, weights);
    write_json(out / "summary.json", summary);
    throw;
  }
  write_events(out / "events.jsonl", pruner.events());
  write_json(out / "masks.json", pruner.masks().to_json());
  write_json(out / "scores.json", scores_json(pruner));

  const auto masked_flops = flops_of_graph(graph, table, pruner.masks());
  RewriteResult pruned = rewrite(graph, table, weights, pruner.masks());
  const ojson recount = model_stats(pruned.graph);
  if (recount["flops"].get<std::int64_t>() != masked_flops)
    fail(ErrorCode::kInternal, "rewritten graph FLOPs differ from masked accounting");
  summary["accuracy_pruned"] = evaluate(pruned.graph, pruned.weights, eval_data, a.batch_size).accuracy;
  BatchStream ft_stream(data, a.batch_size, a.config.seed + 1);
  const TrainResult ft = finetune(pruned.graph, pruned.weights, ft_stream, a.finetune_epochs, a.config.sgd);
  summary["accuracy_finetuned"] = evaluate(pruned.graph, pruned.weights, eval_data, a.batch_size).accuracy;
  save_model(out, "pruned", pruned.graph, pruned.weights);

  summary["status"] = "complete";
  summary["partial"] = false;
  summary["iterations"] = pruner.iteration();
  summary["events"] = pruner.events().size();
  summary["checkpoints"] = checkpoints;
  summary["finetune_iterations"] = ft.iterations;
  summary["final"] = recount;
  summary["flops_ratio"] = static_cast<double>(masked_flops) /
                           static_cast<double>(summary["initial"]["flops"].get<std::int64_t>());
  write_json(out / "summary.json", summary);
  std::printf("%s\n", summary.dump(2).c_str());
  return 0;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const ModelPaths &m, const std::string &data_path, const std::string &masks_path,
             std::int64_t batch_size) {
  const CompGraph graph = load_graph_file(m.graph);
  const WeightStore weights = load_weights_files(graph, m.weights, m.index);
  const Dataset data = read_dataset(data_path);
  InputMasks<float> input_masks;
  if (!masks_path.empty()) {
    const GroupTable table = build_groups(graph);
    input_masks = layer_input_masks<float>(graph, table, MaskSet::from_json(table, read_json(masks_path)));
  }
  const EvalResult r = evaluate(graph, weights, data, batch_size, input_masks);
  ojson j{{"accuracy", r.accuracy}, {"loss", r.loss}, {"samples", r.samples}};
  std::printf("%s\n", j.dump(2).c_str());
  return 0;
}

// ---------------------------------------------------------------- report

std::vector<PruneEvent> read_ledger(const std::string &path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open ledger '" + path + "'");
  std::vector<PruneEvent> events;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      events.push_back(event_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception &) {
      fail(ErrorCode::kParseError, "ledger line " + std::to_string(n) + " is malformed");
    }
  }
  return events;
}

int cmd_report(const std::string &ledger_path, const std::string &graph_path,
               const std::string &masks_path, bool costs) {
  const CompGraph graph = load_graph_file(graph_path);
  const GroupTable table = build_groups(graph);
  const auto events = read_ledger(ledger_path);
  MaskSet masks = MaskSet::all_ones(table);
  std::vector<std::pair<std::int64_t, std::int64_t>> trajectory{
      {flops_of_graph(graph, table, masks), memory_of_graph(graph, table, masks)}};
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto &e = events[i];
    if (e.group >= table.size())
      fail(ErrorCode::kParseError, "ledger line " + std::to_string(i + 1) + " names unknown group");
    masks.prune(e.group, e.slot);
    trajectory.emplace_back(flops_of_graph(graph, table, masks), memory_of_graph(graph, table, masks));
  }
  const auto from_ledger = layer_remaining(graph, table, masks);
  std::vector<std::pair<std::int64_t, std::int64_t>> from_masks;
  if (!masks_path.empty())
    from_masks = layer_remaining(graph, table, MaskSet::from_json(table, read_json(masks_path)));

  std::printf("layer,channels,remaining,percent%s\n", from_masks.empty() ? "" : ",percent_from_masks");
  const auto prunable = graph.prunable_indices();
  for (std::size_t i = 0; i < prunable.size(); ++i) {
    const auto [live, total] = from_ledger[i];
    std::printf("%s,%lld,%lld,%.2f", graph.layer(prunable[i]).id.c_str(),
                static_cast<long long>(total), static_cast<long long>(live),
                100.0 * static_cast<double>(live) / static_cast<double>(total));
    if (!from_masks.empty())
      std::printf(",%.2f", 100.0 * static_cast<double>(from_masks[i].first) /
                               static_cast<double>(from_masks[i].second));
    std::printf("\n");
  }
  std::printf("\nstep,iteration,flops,memory\n");
  for (std::size_t i = 0; i < trajectory.size(); ++i)
    std::printf("%zu,%lld,%lld,%lld\n", i,
                static_cast<long long>(i == 0 ? 0 : events[i - 1].iteration),
                static_cast<long long>(trajectory[i].first),
                static_cast<long long>(trajectory[i].second));
  if (costs) {
    std::printf("\n%s\n",
                cost_ledger_json(build_cost_ledger(graph, table, masks, NormMode::kMemory)).dump(2).c_str());
  }
  return 0;
}

// ---------------------------------------------------------------- helpers

int cmd_synth(const std::string &kind, std::int64_t count, std::uint64_t seed, std::int64_t dim,
              std::int64_t classes, double noise, const std::string &out) {
  Dataset d;
  if (kind == "patterns")
    d = make_pattern_dataset(count, seed, 32, noise);
  else if (kind == "mixture")
    d = make_gaussian_mixture(count, dim, classes, seed, noise);
  else
    fail(ErrorCode::kInvalidArgument, "--kind must be patterns or mixture");
  write_dataset(out, d);
  return 0;
}

int cmd_init(const std::string &graph_path, std::uint64_t seed, const std::string &weights,
             const std::string &index) {
  const CompGraph graph = load_graph_file(graph_path);
  save_weights_files(graph, init_weights(graph, seed), weights, index);
  return 0;
}

int cmd_train(const ModelPaths &m, const std::string &data_path, std::int64_t epochs,
              std::int64_t batch_size, std::uint64_t seed, const SgdConfig &sgd,
              const std::string &out_weights, const std::string &out_index) {
  const CompGraph graph = load_graph_file(m.graph);
  WeightStore weights = load_weights_files(graph, m.weights, m.index);
  const Dataset data = read_dataset(data_path);
  BatchStream stream(data, batch_size, seed);
  const TrainResult r = finetune(graph, weights, stream, epochs, sgd);
  save_weights_files(graph, weights, out_weights, out_index);
  const double last = r.losses.empty() ? 0.0 : r.losses.back();
  std::printf("%s\n", ojson{{"iterations", r.iterations}, {"last_loss", last}}.dump(2).c_str());
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Group-aware structured channel pruning"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from a TOML/INI file");

  std::string graph_path;
  auto *validate = app.add_subcommand("validate", "check a graph manifest and print its shapes");
  validate->add_option("--graph", graph_path, "graph manifest")->required();

  auto *group = app.add_subcommand("group", "print the layer groups as JSON");
  group->add_option("--graph", graph_path, "graph manifest")->required();

  PruneArgs pa;
  auto *prune = app.add_subcommand("prune", "prune to a FLOPs target, rewrite and fine-tune");
  add_model_options(prune, pa.model);
  prune->add_option("--data", pa.data, "training dataset")->required()->check(CLI::ExistingFile);
  prune->add_option("--eval-data", pa.eval_data, "held-out dataset (defaults to --data)")
      ->check(CLI::ExistingFile);
  prune->add_option("--out", pa.out, "output directory")->required();
  prune->add_option("--target-flops", pa.config.flops_target, "remaining FLOPs fraction")->capture_default_str();
  prune->add_option("--interval", pa.config.interval, "iterations between prunes")->capture_default_str();
  prune->add_option("--norm", pa.norm, "memory, flops or none")->capture_default_str();
  add_sgd_options(prune, pa.config.sgd);
  prune->add_option("--seed", pa.config.seed, "batch order seed")->capture_default_str();
  prune->add_option("--max-iters", pa.config.max_iterations, "iteration cap")->capture_default_str();
  prune->add_option("--checkpoint-every", pa.checkpoint_every, "checkpoint every k prunes (0: never)")
      ->capture_default_str();
  prune->add_option("--finetune-epochs", pa.finetune_epochs, "epochs after rewriting")->capture_default_str();
  prune->add_option("--batch-size", pa.batch_size, "batch size")->capture_default_str();
  prune->add_option("--min-live", pa.config.min_live_slots, "live slots kept per group")->capture_default_str();
  prune->add_flag("--first-order", pa.config.first_order, "add the first-order term to scores");

  ModelPaths em;
  std::string data_path, masks_path;
  std::int64_t batch_size = 64;
  auto *eval = app.add_subcommand("eval", "top-1 accuracy of a model");
  add_model_options(eval, em);
  eval->add_option("--data", data_path, "dataset")->required()->check(CLI::ExistingFile);
  eval->add_option("--masks", masks_path, "optional mask file")->check(CLI::ExistingFile);
  eval->add_option("--batch-size", batch_size, "batch size")->capture_default_str();

  std::string ledger_path;
  bool costs = false;
  auto *report = app.add_subcommand("report", "per-layer profile and trajectories from an event ledger");
  report->add_option("--ledger", ledger_path, "events.jsonl")->required()->check(CLI::ExistingFile);
  report->add_option("--graph", graph_path, "original graph manifest")->required();
  report->add_option("--masks", masks_path, "mask file to cross-check")->check(CLI::ExistingFile);
  report->add_flag("--costs", costs, "also dump the cost ledger of the final masks");

  std::string kind = "patterns", out_path;
  std::int64_t count = 2000, dim = 8, classes = 4;
  std::uint64_t seed = 0;
  double noise = 0.6;
  auto *synth = app.add_subcommand("synth", "write a synthetic dataset");
  synth->add_option("--kind", kind, "patterns or mixture")->capture_default_str();
  synth->add_option("--count", count, "samples")->capture_default_str();
  synth->add_option("--seed", seed, "RNG seed")->capture_default_str();
  synth->add_option("--dim", dim, "mixture dimension")->capture_default_str();
  synth->add_option("--classes", classes, "mixture classes")->capture_default_str();
  synth->add_option("--noise", noise, "pixel noise / cluster spread")->capture_default_str();
  synth->add_option("--out", out_path, "output file")->required();

  std::string out_weights, out_index;
  auto *init = app.add_subcommand("init", "write randomly initialised weights");
  init->add_option("--graph", graph_path, "graph manifest")->required();
  init->add_option("--seed", seed, "RNG seed")->capture_default_str();
  init->add_option("--out-weights", out_weights, "weight blob")->required();
  init->add_option("--out-index", out_index, "weight index")->required();

  ModelPaths tm;
  std::int64_t epochs = 1;
  SgdConfig sgd;
  auto *train_cmd = app.add_subcommand("train", "train a model with momentum SGD");
  add_model_options(train_cmd, tm);
  train_cmd->add_option("--data", data_path, "dataset")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--epochs", epochs, "epochs")->capture_default_str();
  train_cmd->add_option("--batch-size", batch_size, "batch size")->capture_default_str();
  train_cmd->add_option("--seed", seed, "batch order seed")->capture_default_str();
  add_sgd_options(train_cmd, sgd);
  train_cmd->add_option("--out-weights", out_weights, "weight blob")->required();
  train_cmd->add_option("--out-index", out_index, "weight index")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*validate) return cmd_validate(graph_path);
    if (*group) return cmd_group(graph_path);
    if (*prune) return cmd_prune(pa);
    if (*eval) return cmd_eval(em, data_path, masks_path, batch_size);
    if (*report) return cmd_report(ledger_path, graph_path, masks_path, costs);
    if (*synth) return cmd_synth(kind, count, seed, dim, classes, noise, out_path);
    if (*init) return cmd_init(graph_path, seed, out_weights, out_index);
    if (*train_cmd)
      return cmd_train(tm, data_path, epochs, batch_size, seed, sgd, out_weights, out_index);
  } catch (const Error &e) {
    std::fprintf(stderr, "%s\n", e.what());
    return e.is_internal() ? 2 : 1;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "Internal: %s\n", e.what());
    return 2;
  }
  return 1;
}
