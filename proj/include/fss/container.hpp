// Copyright 2026 The fss Authors. All Rights Reserved.
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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace fss {

/// Binary container shared by the embedding cache and CRFA stores:
/// 4-byte magic | u32 LE version | u32 LE header length | JSON header | payload.
struct Container {
  std::string magic;
  std::uint32_t version = 1;
  nlohmann::json header;
  std::vector<float> payload;  // serialized as float32 little-endian
};

std::vector<std::uint8_t> encode_container(const Container& c);

/// Throws DataError on bad magic, truncation, or a ragged payload.
Container decode_container(const std::vector<std::uint8_t>& bytes, std::string_view magic);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Writes via a temporary file in the same directory, then renames.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace fss
