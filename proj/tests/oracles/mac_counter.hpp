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

#ifndef CHANPRUNE_TESTS_MAC_COUNTER_HPP
#define CHANPRUNE_TESTS_MAC_COUNTER_HPP

#include <cstdint>

#include "chanprune/graph.hpp"
#include "chanprune/weights.hpp"

namespace chanprune::testing {

/// MACs of a dense graph, straight from layer attributes and output shapes:
/// n * h_o * w_o * k_h * k_w * (c_i / g) * c_o per conv, n * c_i * c_o per FC.
std::int64_t count_macs(const CompGraph &graph);

/// Elements of every layer output except the Output marker.
std::int64_t count_activations(const CompGraph &graph);

/// Trainable scalars actually stored (running statistics excluded).
std::int64_t count_stored_params(const WeightStore &weights);

} // namespace chanprune::testing

#endif
