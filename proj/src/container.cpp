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

#include "fss/container.hpp"

#include <atomic>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <thread>

#include "fss/error.hpp"

namespace fss {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_container(const Container& c) {
  if (c.magic.size() != 4) throw DataError("container magic must be 4 bytes");
  const std::string header = c.header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(12 + header.size() + c.payload.size() * 4);
  out.insert(out.end(), c.magic.begin(), c.magic.end());
  put_u32(out, c.version);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  for (float f : c.payload) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  return out;
}

Container decode_container(const std::vector<std::uint8_t>& bytes, std::string_view magic) {
  if (bytes.size() < 12) throw DataError("container truncated before header");
  if (std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != magic)
    throw DataError("bad container magic, expected " + std::string(magic));
  Container c;
  c.magic = std::string(magic);
  c.version = get_u32(bytes.data() + 4);
  const std::uint32_t hlen = get_u32(bytes.data() + 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(hlen)) throw DataError("container header truncated");
  try {
    c.header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("container header is not valid JSON: ") + e.what());
  }
  const std::size_t rest = bytes.size() - 12 - hlen;
  if (rest % 4 != 0) throw DataError("container payload is not a whole number of float32");
  c.payload.resize(rest / 4);
  const std::uint8_t* p = bytes.data() + 12 + hlen;
  for (std::size_t i = 0; i < c.payload.size(); ++i) {
    const std::uint32_t bits = get_u32(p + 4 * i);
    std::memcpy(&c.payload[i], &bits, 4);
  }
  return c;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  static std::atomic<std::uint64_t> counter{0};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ostringstream tmp_name;
  tmp_name << path.filename().string() << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id())
           << "." << counter++;
  const auto tmp = path.parent_path() / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace fss
