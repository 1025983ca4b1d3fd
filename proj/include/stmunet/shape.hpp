/*
 * Copyright 2026 the stmunet authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>

namespace stmunet {

/// Dense tensor shape, rank 0 is reserved for "empty"; rank <= 4.
/// Four-dimensional shapes follow the (N, C, H, W) convention unless an
/// operation documents otherwise.
class Shape {
 public:
  static constexpr int kMaxRank = 4;

  Shape() = default;

  Shape(std::initializer_list<int64_t> dims) {
    init(std::span<const int64_t>(dims.begin(), dims.size()));
  }

  explicit Shape(std::span<const int64_t> dims) { init(dims); }

  int rank() const { return rank_; }

  int64_t operator[](int axis) const { return dims_[static_cast<size_t>(axis)]; }

  int64_t numel() const {
    int64_t n = 1;
    for (int i = 0; i < rank_; ++i) n *= dims_[static_cast<size_t>(i)];
    return rank_ == 0 ? 0 : n;
  }

  bool operator==(const Shape& other) const {
    if (rank_ != other.rank_) return false;
    for (int i = 0; i < rank_; ++i) {
      if (dims_[static_cast<size_t>(i)] != other.dims_[static_cast<size_t>(i)]) return false;
    }
    return true;
  }
  bool operator!=(const Shape& other) const { return !(*this == other); }

  std::string str() const {
    std::string s = "(";
    for (int i = 0; i < rank_; ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[static_cast<size_t>(i)]);
    }
    s += ")";
    return s;
  }

 private:
  void init(std::span<const int64_t> dims) {
    if (dims.size() > kMaxRank) {
      throw std::invalid_argument("shape rank " + std::to_string(dims.size()) +
                                  " exceeds maximum rank 4");
    }
    rank_ = static_cast<int>(dims.size());
    for (size_t i = 0; i < dims.size(); ++i) {
      if (dims[i] < 1) {
        throw std::invalid_argument("shape dimension " + std::to_string(i) +
                                    " must be >= 1, got " + std::to_string(dims[i]));
      }
      dims_[i] = dims[i];
    }
  }

  std::array<int64_t, kMaxRank> dims_{1, 1, 1, 1};
  int rank_ = 0;
};

}  // namespace stmunet
