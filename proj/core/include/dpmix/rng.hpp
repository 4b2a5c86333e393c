// Copyright 2026 The dpmix Authors
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

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace dpmix {

/// Seeded random stream. Every consumer owns its own instance; independent
/// streams are derived from a master seed with `Rng::stream`.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Stream `index` of the family rooted at `master_seed`. Streams with
  /// different indices are statistically independent.
  static Rng stream(std::uint64_t master_seed, std::uint64_t index);

  std::uint64_t next() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  double exponential() { return -std::log(uniform()); }

  /// Gamma(shape, rate) for any shape > 0 (Marsaglia-Tsang, with the
  /// U^{1/shape} boost for shape < 1).
  double gamma(double shape, double rate = 1.0);
  double beta(double a, double b);

  /// Index drawn with probability proportional to `weights` (need not sum to 1).
  std::size_t categorical(std::span<const double> weights);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace dpmix
