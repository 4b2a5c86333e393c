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

#include <cstddef>
#include <functional>

namespace dpmix {

/// Number of worker threads used by parallel loops (default 1).
void set_thread_count(unsigned threads);
unsigned thread_count();

/// Runs `body(begin, end)` over contiguous slices of [0, n). Slices are
/// disjoint; callers write results into preallocated per-index storage so
/// the outcome does not depend on the number of threads. Calls made from
/// inside a worker run serially.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

/// Fixed-order pairwise sum; the result depends only on the input order.
double pairwise_sum(const double* values, std::size_t n);

}  // namespace dpmix
