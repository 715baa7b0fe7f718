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

#ifndef CHANPRUNE_TESTS_FIXTURES_HPP
#define CHANPRUNE_TESTS_FIXTURES_HPP

#include <string>

#include "chanprune/graph.hpp"
#include "json.hpp"

namespace chanprune::testing {

inline std::string fixture_path(const std::string &name) {
  return std::string(CHANPRUNE_FIXTURE_DIR) + "/" + name;
}

inline CompGraph reference_net() { return load_graph_file(fixture_path("reference_net.json")); }
inline CompGraph bottleneck_block() { return load_graph_file(fixture_path("bottleneck_block.json")); }

/// Manifest with one Input of shape `shape` and the given layers.
inline nlohmann::json manifest(std::vector<std::int64_t> shape, nlohmann::json layers,
                               const std::string &output = "out") {
  return {{"inputs", {{{"id", "x"}, {"shape", shape}}}}, {"layers", layers}, {"output", output}};
}

inline nlohmann::json conv(const std::string &id, const std::string &in, std::int64_t co, int k = 1,
                           std::int64_t groups = 1, int stride = 1, int pad = -1, bool bias = true) {
  return {{"id", id},
          {"kind", "conv"},
          {"inputs", {in}},
          {"attrs",
           {{"out_channels", co},
            {"kernel", k},
            {"stride", stride},
            {"padding", pad < 0 ? k / 2 : pad},
            {"groups", groups},
            {"bias", bias}}}};
}

inline nlohmann::json fc(const std::string &id, const std::string &in, std::int64_t co) {
  return {{"id", id}, {"kind", "fc"}, {"inputs", {in}}, {"attrs", {{"out_channels", co}}}};
}

inline nlohmann::json op(const std::string &id, const std::string &kind,
                         std::vector<std::string> inputs, nlohmann::json attrs = nullptr) {
  nlohmann::json j{{"id", id}, {"kind", kind}, {"inputs", inputs}};
  if (!attrs.is_null()) j["attrs"] = attrs;
  return j;
}

} // namespace chanprune::testing

#endif
