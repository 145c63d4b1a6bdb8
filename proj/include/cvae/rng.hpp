// Copyright 2026 The cvae Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "cvae/tensor.hpp"

namespace cvae {

/// Counter-based random stream (SplitMix64 output function over a keyed
/// counter).
///
/// A stream is a (key, counter) pair: draw i of a stream is a pure function
/// of its key and i, so results do not depend on the platform's <random>
/// implementation. `split` derives an independent child key from a label
/// without advancing the parent.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : key_(seed) {}

  Stream split(std::string_view label) const;
  Stream split(std::uint64_t index) const;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Standard normal via the Box-Muller transform.
  double normal() noexcept;

  /// Uniform random permutation of 0..n-1 (Fisher-Yates).
  std::vector<std::size_t> permutation(std::size_t n);
  Tensor normal_tensor(const Shape& shape);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// The SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Stable 64-bit FNV-1a hash for stream labels.
std::uint64_t hash_label(std::string_view label) noexcept;

}  // namespace cvae
