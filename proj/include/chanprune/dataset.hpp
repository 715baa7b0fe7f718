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

#ifndef CHANPRUNE_DATASET_HPP
#define CHANPRUNE_DATASET_HPP

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "chanprune/tensor.hpp"

namespace chanprune {

/// In-memory labelled samples of shape (channels, height, width).
struct Dataset {
  std::int64_t channels = 1;
  std::int64_t height = 1;
  std::int64_t width = 1;
  std::int64_t classes = 2;
  std::vector<float> features; // size() * channels * height * width
  std::vector<std::uint32_t> labels;

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
  std::int64_t sample_numel() const { return channels * height * width; }
};

/// Binary format: "GFPD", then u32 version, count, channels, height, width,
/// classes, then per record c*h*w float32 values and a u32 label, all LE.
inline constexpr std::uint32_t kDatasetVersion = 1;

Dataset parse_dataset(std::span<const std::byte> bytes);
Dataset read_dataset(const std::string &path);
std::vector<std::byte> serialize_dataset(const Dataset &data);
void write_dataset(const std::string &path, const Dataset &data);

struct Batch {
  Tensor<float> inputs; // (n, c, h, w)
  std::vector<std::uint32_t> labels;
};

/// Samples [begin, end) in file order.
Batch slice_batch(const Dataset &data, std::int64_t begin, std::int64_t end);

/// Endless batches over a dataset, reshuffled each epoch with a seeded RNG.
class BatchStream {
public:
  BatchStream(const Dataset &data, std::int64_t batch_size, std::uint64_t seed,
              bool shuffle = true);

  Batch next();
  std::int64_t batch_size() const { return batch_size_; }
  std::int64_t batches_per_epoch() const;

private:
  void reshuffle();

  const Dataset *data_;
  std::int64_t batch_size_;
  bool shuffle_;
  std::mt19937_64 rng_;
  std::vector<std::int64_t> order_;
  std::int64_t cursor_ = 0;
};

/// Ten-class coloured grating images; the class fixes orientation and hue.
Dataset make_pattern_dataset(std::int64_t count, std::uint64_t seed, std::int64_t size = 32,
                             double noise = 0.6);

/// Isotropic Gaussian clusters in `dim` dimensions, one per class, laid out
/// as (dim, 1, 1) samples.
Dataset make_gaussian_mixture(std::int64_t count, std::int64_t dim, std::int64_t classes,
                              std::uint64_t seed, double spread = 1.0);

} // namespace chanprune

#endif
