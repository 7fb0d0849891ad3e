// Copyright 2026 The PathLM Authors.
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

namespace pathlm {

// Process-wide cap on worker threads used by the per-sample loops inside the
// encoder and evaluation code. Defaults to the hardware concurrency.
void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks; each index
// is processed by exactly one worker, so results that are written per index do
// not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace pathlm
