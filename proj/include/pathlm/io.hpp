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

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pathlm {

// Bad user input: unreadable files, malformed configs, unknown labels.
// The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partially written output.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t value);

// Mixes a base seed with a stream index (splitmix64 finalizer), used to give
// every sample, step, and mask rate an independent reproducible stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Fixed-format number rendering for CSV outputs ("%.*g").
std::string format_number(double value, int precision = 9);

// Quotes a CSV field when it contains a comma, quote, or newline.
std::string csv_field(std::string_view field);

}  // namespace pathlm
