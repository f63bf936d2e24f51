// Copyright 2026 The attnseg Authors.
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

#ifndef ATTNSEG_PARALLEL_HPP_
#define ATTNSEG_PARALLEL_HPP_

#include <cstddef>
#include <cstdint>

namespace attnseg {

// Upper bound on worker threads used inside library calls. Initialized from
// the ATTNSEG_THREADS environment variable when set, otherwise from the
// hardware concurrency. Results never depend on this value.
int max_threads();
void set_max_threads(int threads);

// Runs body(i) for i in [begin, end) across up to max_threads() threads with
// a static schedule. body must not throw.
template <typename Body>
void parallel_for(std::int64_t begin, std::int64_t end, Body&& body) {
#if defined(_OPENMP)
  const int threads = max_threads();
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
  for (std::int64_t i = begin; i < end; ++i) body(i);
#else
  for (std::int64_t i = begin; i < end; ++i) body(i);
#endif
}

}  // namespace attnseg

#endif  // ATTNSEG_PARALLEL_HPP_
