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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "chanprune/cost.hpp"
#include "chanprune/dataset.hpp"
#include "chanprune/error.hpp"
#include "chanprune/graph.hpp"
#include "chanprune/grouping.hpp"
#include "chanprune/masks.hpp"
#include "chanprune/pruner.hpp"
#include "chanprune/weights.hpp"

namespace py = pybind11;
using namespace chanprune;

namespace {

struct PruneOutcome {
  std::string events; // JSON array
  std::string masks;
  CompGraph graph;
  WeightStore weights;
  double remaining_fraction = 1.0;
  std::int64_t iterations = 0;
};

PruneOutcome run_prune(const CompGraph &graph, const WeightStore &start, const Dataset &data, double target,
                       std::int64_t interval, const std::string &norm, double lr, double momentum,
                       double weight_decay, std::uint64_t seed, std::int64_t batch_size,
                       std::int64_t max_iters) {
  const auto mode = norm_mode_from_name(norm);
  if (!mode) fail(ErrorCode::kInvalidArgument, "norm must be memory, flops or none");
  PruneConfig c;
  c.flops_target = target;
  c.interval = interval;
  c.norm = *mode;
  c.sgd = {lr, momentum, weight_decay};
  c.seed = seed;
  c.max_iterations = max_iters;
  c.validate();
  const GroupTable table = build_groups(graph);
  WeightStore weights = start;
  Pruner pruner(graph, table, weights, c);
  BatchStream stream(data, batch_size, seed);
  {
    py::gil_scoped_release release;
    pruner.run(stream);
  }
  nlohmann::ordered_json events = nlohmann::ordered_json::array();
  for (const auto &e : pruner.events()) events.push_back(event_json(e));
  RewriteResult slim = rewrite(graph, table, weights, pruner.masks());
  return {events.dump(), pruner.masks().to_json().dump(), std::move(slim.graph), std::move(slim.weights),
          pruner.remaining_fraction(), pruner.iteration()};
}

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Channel pruning with grouped Fisher importance.";
  py::register_exception<Error>(m, "Error");

  py::class_<CompGraph>(m, "Graph")
      .def_static("from_json", &parse_graph_text, py::arg("text"))
      .def_static("load", &load_graph_file, py::arg("path"))
      .def("to_json", [](const CompGraph &g) { return serialize_graph(g).dump(); })
      .def("__len__", &CompGraph::size)
      .def_property_readonly("layer_ids",
                             [](const CompGraph &g) {
                               std::vector<std::string> ids;
                               for (std::size_t k = 0; k < g.size(); ++k) ids.push_back(g.layer(k).id);
                               return ids;
                             })
      .def("shape",
           [](const CompGraph &g, const std::string &id) {
             const Shape &s = g.shape(g.index_of(id));
             return py::make_tuple(s.n, s.c, s.h, s.w);
           })
      .def_property_readonly("flops", [](const CompGraph &g) { return flops_of_graph(g, dense_liveness(g)); })
      .def_property_readonly("memory", [](const CompGraph &g) { return memory_of_graph(g, dense_liveness(g)); })
      .def_property_readonly("params", [](const CompGraph &g) { return params_of_graph(g, dense_liveness(g)); })
      .def("groups", [](const CompGraph &g) { return group_table_json(g, build_groups(g)).dump(); });

  py::class_<WeightStore>(m, "Weights")
      .def_static("init", &init_weights, py::arg("graph"), py::arg("seed"))
      .def_static("load", &load_weights_files, py::arg("graph"), py::arg("blob"), py::arg("index"))
      .def(
          "save",
          [](const WeightStore &w, const CompGraph &g, const std::string &blob, const std::string &index) {
            save_weights_files(g, w, blob, index);
          },
          py::arg("graph"), py::arg("blob"), py::arg("index"))
      .def_property_readonly("names",
                             [](const WeightStore &w) {
                               std::vector<std::string> names;
                               for (const auto &[name, t] : w.tensors()) names.push_back(name);
                               return names;
                             })
      .def("__getitem__", [](const WeightStore &w, const std::string &name) {
        const Tensor<float> &t = w.at(name);
        py::array_t<float> out(std::vector<py::ssize_t>(t.dims().begin(), t.dims().end()));
        std::copy(t.values().begin(), t.values().end(), out.mutable_data());
        return out;
      });

  py::class_<Dataset>(m, "Dataset")
      .def_static("patterns", &make_pattern_dataset, py::arg("count"), py::arg("seed"), py::arg("size") = 32,
                  py::arg("noise") = 0.6)
      .def_static("gaussian_mixture", &make_gaussian_mixture, py::arg("count"), py::arg("dim"),
                  py::arg("classes"), py::arg("seed"), py::arg("spread") = 1.0)
      .def_static("read", &read_dataset, py::arg("path"))
      .def("write", [](const Dataset &d, const std::string &path) { write_dataset(path, d); })
      .def("__len__", &Dataset::size)
      .def_readonly("classes", &Dataset::classes)
      .def_property_readonly("labels", [](const Dataset &d) { return d.labels; });

  m.def(
      "evaluate",
      [](const CompGraph &g, const WeightStore &w, const Dataset &d, std::int64_t batch_size) {
        const EvalResult r = evaluate(g, w, d, batch_size);
        return py::make_tuple(r.loss, r.accuracy);
      },
      py::arg("graph"), py::arg("weights"), py::arg("data"), py::arg("batch_size") = 64);

  m.def(
      "train",
      [](const CompGraph &g, WeightStore &w, const Dataset &d, std::int64_t epochs, double lr, double momentum,
         double weight_decay, std::int64_t batch_size, std::uint64_t seed) {
        BatchStream s(d, batch_size, seed);
        py::gil_scoped_release release;
        return finetune(g, w, s, epochs, {lr, momentum, weight_decay}).iterations;
      },
      py::arg("graph"), py::arg("weights"), py::arg("data"), py::arg("epochs"), py::arg("lr") = 0.05,
      py::arg("momentum") = 0.9, py::arg("weight_decay") = 5e-4, py::arg("batch_size") = 32, py::arg("seed") = 0);

  py::class_<PruneOutcome>(m, "PruneOutcome")
      .def_readonly("events_json", &PruneOutcome::events)
      .def_readonly("masks_json", &PruneOutcome::masks)
      .def_readonly("graph", &PruneOutcome::graph)
      .def_readonly("weights", &PruneOutcome::weights)
      .def_readonly("remaining_fraction", &PruneOutcome::remaining_fraction)
      .def_readonly("iterations", &PruneOutcome::iterations);

  m.def("prune", &run_prune, py::arg("graph"), py::arg("weights"), py::arg("data"), py::arg("target_flops") = 0.5,
        py::arg("interval") = 25, py::arg("norm") = "memory", py::arg("lr") = 0.01, py::arg("momentum") = 0.9,
        py::arg("weight_decay") = 0.0, py::arg("seed") = 0, py::arg("batch_size") = 32,
        py::arg("max_iters") = 100000);
}
