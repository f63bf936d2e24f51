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

#include "attnseg/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>

namespace attnseg {

namespace {

int threads_from_environment() {
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("ATTNSEG_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
  }
  return hw;
}

std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{threads_from_environment()};
  return cap;
}

}  // namespace

int max_threads() { return thread_cap().load(std::memory_order_relaxed); }

void set_max_threads(int threads) {
  thread_cap().store(std::max(1, threads), std::memory_order_relaxed);
}

}  // namespace attnseg
