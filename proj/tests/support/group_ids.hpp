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

#ifndef CHANPRUNE_TESTS_GROUP_IDS_HPP
#define CHANPRUNE_TESTS_GROUP_IDS_HPP

#include <set>
#include <string>
#include <vector>

#include "chanprune/grouping.hpp"

// Id-based views of grouping results, comparable with the oracle's output.
namespace chanprune::testing {

inline std::set<std::string> parent_ids(const CompGraph &g, const ParentMap &p, const std::string &id) {
  std::set<std::string> out;
  for (auto k : p.parents(g.index_of(id))) out.insert(g.layer(k).id);
  return out;
}

inline std::set<std::set<std::string>> partition_ids(const CompGraph &g,
                                                     const std::vector<std::vector<std::size_t>> &groups) {
  std::set<std::set<std::string>> out;
  for (const auto &members : groups) {
    std::set<std::string> s;
    for (auto k : members) s.insert(g.layer(k).id);
    out.insert(s);
  }
  return out;
}

inline std::vector<std::vector<std::size_t>> members_of(const GroupTable &t) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto &gr : t.groups) out.push_back(gr.members);
  return out;
}

} // namespace chanprune::testing

#endif
