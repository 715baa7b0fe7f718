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

#ifndef CHANPRUNE_TENSOR_HPP
#define CHANPRUNE_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "chanprune/error.hpp"

namespace chanprune {

using Dims = std::vector<std::int64_t>;

inline std::int64_t dims_numel(const Dims &dims) {
  return std::accumulate(dims.begin(), dims.end(), std::int64_t{1},
                         std::multiplies<>());
}

std::string dims_to_string(const Dims &dims);

/// Dense row-major tensor of rank 1..4.
template <typename T> class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Dims dims, T fill = T{})
      : dims_(std::move(dims)), data_(static_cast<std::size_t>(dims_numel(dims_)), fill) {
    check_dims();
  }
  Tensor(Dims dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    check_dims();
    if (static_cast<std::int64_t>(data_.size()) != dims_numel(dims_))
      fail(ErrorCode::kShapeMismatch, "tensor data length " + std::to_string(data_.size()) +
                                          " does not match dims " + dims_to_string(dims_));
  }

  const Dims &dims() const noexcept { return dims_; }
  std::int64_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::int64_t numel() const noexcept { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const noexcept { return data_.empty(); }

  T *data() noexcept { return data_.data(); }
  const T *data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T> &values() noexcept { return data_; }
  const std::vector<T> &values() const noexcept { return data_; }

  T &operator[](std::size_t i) { return data_[i]; }
  const T &operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U> Tensor<U> cast() const {
    return Tensor<U>(dims_, std::vector<U>(data_.begin(), data_.end()));
  }

private:
  void check_dims() const {
    if (dims_.empty() || dims_.size() > 4)
      fail(ErrorCode::kShapeMismatch, "tensor rank must be 1..4, got " + dims_to_string(dims_));
    for (auto d : dims_)
      if (d < 1)
        fail(ErrorCode::kShapeMismatch, "tensor dims must be >= 1, got " + dims_to_string(dims_));
  }

  Dims dims_;
  std::vector<T> data_;
};

} // namespace chanprune

#endif
