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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fss/core.hpp"

namespace fss::coco {

/// COCO run-length encoding: alternating runs of 0s and 1s over the mask in
/// column-major order, starting with a (possibly empty) run of 0s.
struct Rle {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> counts;

  friend bool operator==(const Rle&, const Rle&) = default;
};

/// Decodes the compressed LEB128-like string form of `counts`.
Rle rle_from_string(std::string_view s, int height, int width);

/// Inverse of rle_from_string.
std::string rle_to_string(const Rle& rle);

/// Rasterizes one polygon (x0, y0, x1, y1, ...) exactly as the reference
/// cocoapi implementation does (5x upsampled boundary walk).
Rle rle_from_polygon(std::span<const double> xy, int height, int width);

Rle rle_encode(const BoolMask& mask);
BoolMask rle_decode(const Rle& rle);

std::uint64_t rle_area(const Rle& rle);

}  // namespace fss::coco
