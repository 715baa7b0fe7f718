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

#include "chanprune/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>

#include "chanprune/error.hpp"

namespace chanprune {

namespace {

std::uint32_t read_u32(std::span<const std::byte> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | std::to_integer<std::uint32_t>(bytes[at + static_cast<std::size_t>(i)]);
  return v;
}

void put_u32(std::vector<std::byte> &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffu));
}

constexpr std::size_t kHeaderBytes = 4 + 6 * 4;

} // namespace

Dataset parse_dataset(std::span<const std::byte> bytes) {
  if (bytes.size() < kHeaderBytes) fail(ErrorCode::kParseError, "dataset shorter than its header");
  const char magic[4] = {'G', 'F', 'P', 'D'};
  for (std::size_t i = 0; i < 4; ++i)
    if (bytes[i] != static_cast<std::byte>(magic[i]))
      fail(ErrorCode::kParseError, "dataset magic is not GFPD");
  const std::uint32_t version = read_u32(bytes, 4);
  if (version != kDatasetVersion)
    fail(ErrorCode::kParseError, "unsupported dataset version " + std::to_string(version));
  Dataset d;
  const std::uint64_t count = read_u32(bytes, 8);
  d.channels = read_u32(bytes, 12);
  d.height = read_u32(bytes, 16);
  d.width = read_u32(bytes, 20);
  d.classes = read_u32(bytes, 24);
  if (d.channels < 1 || d.height < 1 || d.width < 1 || d.classes < 1)
    fail(ErrorCode::kParseError, "dataset header has a zero dimension");
  const std::uint64_t record = static_cast<std::uint64_t>(d.sample_numel()) * 4 + 4;
  const std::uint64_t expected = kHeaderBytes + count * record;
  if (bytes.size() != expected)
    fail(ErrorCode::kParseError, "dataset length " + std::to_string(bytes.size()) +
                                     " does not match header (expected " +
                                     std::to_string(expected) + ")");
  d.features.resize(static_cast<std::size_t>(count * static_cast<std::uint64_t>(d.sample_numel())));
  d.labels.resize(static_cast<std::size_t>(count));
  std::size_t at = kHeaderBytes;
  std::size_t f = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    for (std::int64_t j = 0; j < d.sample_numel(); ++j, at += 4)
      d.features[f++] = std::bit_cast<float>(read_u32(bytes, at));
    const std::uint32_t label = read_u32(bytes, at);
    at += 4;
    if (label >= d.classes)
      fail(ErrorCode::kParseError, "record " + std::to_string(i) + " has label " +
                                       std::to_string(label) + " >= classes " +
                                       std::to_string(d.classes));
    d.labels[static_cast<std::size_t>(i)] = label;
  }
  return d;
}

Dataset read_dataset(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open dataset '" + path + "'");
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_dataset(std::as_bytes(std::span<const char>(raw)));
}

std::vector<std::byte> serialize_dataset(const Dataset &data) {
  std::vector<std::byte> out;
  out.reserve(kHeaderBytes + static_cast<std::size_t>(data.size() * (data.sample_numel() + 1) * 4));
  for (char ch : {'G', 'F', 'P', 'D'}) out.push_back(static_cast<std::byte>(ch));
  put_u32(out, kDatasetVersion);
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  put_u32(out, static_cast<std::uint32_t>(data.channels));
  put_u32(out, static_cast<std::uint32_t>(data.height));
  put_u32(out, static_cast<std::uint32_t>(data.width));
  put_u32(out, static_cast<std::uint32_t>(data.classes));
  const std::int64_t per = data.sample_numel();
  for (std::int64_t i = 0; i < data.size(); ++i) {
    for (std::int64_t j = 0; j < per; ++j)
      put_u32(out, std::bit_cast<std::uint32_t>(data.features[static_cast<std::size_t>(i * per + j)]));
    put_u32(out, data.labels[static_cast<std::size_t>(i)]);
  }
  return out;
}

void write_dataset(const std::string &path, const Dataset &data) {
  const auto bytes = serialize_dataset(data);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot write dataset '" + path + "'");
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Batch slice_batch(const Dataset &data, std::int64_t begin, std::int64_t end) {
  if (begin < 0 || end > data.size() || begin >= end)
    fail(ErrorCode::kInvalidArgument, "batch range [" + std::to_string(begin) + ", " +
                                          std::to_string(end) + ") of " +
                                          std::to_string(data.size()) + " samples");
  const std::int64_t per = data.sample_numel();
  Batch b;
  b.inputs = Tensor<float>({end - begin, data.channels, data.height, data.width},
                           std::vector<float>(data.features.begin() + begin * per,
                                              data.features.begin() + end * per));
  b.labels.assign(data.labels.begin() + begin, data.labels.begin() + end);
  return b;
}

BatchStream::BatchStream(const Dataset &data, std::int64_t batch_size, std::uint64_t seed,
                         bool shuffle)
    : data_(&data), batch_size_(batch_size), shuffle_(shuffle), rng_(seed) {
  if (data.size() == 0) fail(ErrorCode::kEmptyDataset, "dataset has no samples");
  if (batch_size < 1) fail(ErrorCode::kInvalidArgument, "batch size must be >= 1");
  order_.resize(static_cast<std::size_t>(data.size()));
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::int64_t>(i);
  reshuffle();
}

void BatchStream::reshuffle() {
  if (!shuffle_) return;
  // Own Fisher-Yates so the order does not depend on the standard library.
  for (std::size_t i = order_.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng_() % i);
    std::swap(order_[i - 1], order_[j]);
  }
}

std::int64_t BatchStream::batches_per_epoch() const {
  return (data_->size() + batch_size_ - 1) / batch_size_;
}

Batch BatchStream::next() {
  const std::int64_t n = std::min(batch_size_, data_->size());
  const std::int64_t per = data_->sample_numel();
  std::vector<float> values(static_cast<std::size_t>(n * per));
  Batch b;
  b.labels.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    if (cursor_ == data_->size()) {
      cursor_ = 0;
      reshuffle();
    }
    const std::int64_t src = order_[static_cast<std::size_t>(cursor_++)];
    std::copy(data_->features.begin() + src * per, data_->features.begin() + (src + 1) * per,
              values.begin() + i * per);
    b.labels[static_cast<std::size_t>(i)] = data_->labels[static_cast<std::size_t>(src)];
  }
  b.inputs = Tensor<float>({n, data_->channels, data_->height, data_->width}, std::move(values));
  return b;
}

Dataset make_pattern_dataset(std::int64_t count, std::uint64_t seed, std::int64_t size,
                             double noise) {
  constexpr int kClasses = 10;
  // Two palettes; a class picks one palette and one of five orientations.
  constexpr double palettes[2][3] = {{1.0, 0.4, -0.6}, {-0.5, 0.3, 1.0}};
  Dataset d;
  d.channels = 3;
  d.height = size;
  d.width = size;
  d.classes = kClasses;
  d.features.resize(static_cast<std::size_t>(count * 3 * size * size));
  d.labels.resize(static_cast<std::size_t>(count));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::int64_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % kClasses);
    const double theta = (label % 5) * std::numbers::pi / 5 + 0.15 * (unit(rng) - 0.5);
    const double freq = 2.5 + 2.0 * unit(rng);
    const double phase = 2 * std::numbers::pi * unit(rng);
    const double amp = 0.6 + 0.8 * unit(rng);
    const double *pal = palettes[label / 5];
    const double ct = std::cos(theta), st = std::sin(theta);
    float *img = d.features.data() + i * 3 * size * size;
    for (int c = 0; c < 3; ++c) {
      const double offset = 0.3 * gauss(rng);
      for (std::int64_t y = 0; y < size; ++y)
        for (std::int64_t x = 0; x < size; ++x) {
          const double u = (static_cast<double>(x) * ct + static_cast<double>(y) * st) / static_cast<double>(size);
          const double v = amp * pal[c] * std::sin(2 * std::numbers::pi * freq * u + phase);
          img[(c * size + y) * size + x] = static_cast<float>(v + offset + noise * gauss(rng));
        }
    }
    d.labels[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(label);
  }
  return d;
}

Dataset make_gaussian_mixture(std::int64_t count, std::int64_t dim, std::int64_t classes,
                              std::uint64_t seed, double spread) {
  if (count < 1 || dim < 1 || classes < 2)
    fail(ErrorCode::kInvalidArgument, "gaussian mixture needs count >= 1, dim >= 1, classes >= 2");
  Dataset d;
  d.channels = dim;
  d.classes = classes;
  d.features.resize(static_cast<std::size_t>(count * dim));
  d.labels.resize(static_cast<std::size_t>(count));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> means(static_cast<std::size_t>(classes * dim));
  for (auto &m : means) m = 2.0 * gauss(rng);
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int64_t label = i % classes;
    for (std::int64_t j = 0; j < dim; ++j)
      d.features[static_cast<std::size_t>(i * dim + j)] = static_cast<float>(
          means[static_cast<std::size_t>(label * dim + j)] + spread * gauss(rng));
    d.labels[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(label);
  }
  return d;
}

} // namespace chanprune
