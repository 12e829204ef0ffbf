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

#include <array>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>

#include "fss/core.hpp"

namespace fss {

/// Decodes PNG, JPEG or binary PPM (P6), chosen by file signature.
Rgb8Image read_image(const std::filesystem::path& path);

void write_png_rgb(const std::filesystem::path& path, const Rgb8Image& image);
void write_png_gray(const std::filesystem::path& path, const Grid2D<std::uint8_t>& gray);

/// Palette PNG whose pixel indices are the class ids (must be < 256).
void write_png_indexed(const std::filesystem::path& path, const LabelGrid& labels);

/// Raw palette indices of an indexed PNG.
LabelGrid read_png_indices(const std::filesystem::path& path);

/// Fixed color for a class id (PASCAL VOC style bit interleave; 0 is black).
std::array<std::uint8_t, 3> class_color(ClassId c);

/// Image decoded from a file on first access. Missing or undecodable files
/// surface as DataError at that point, not at construction.
class FileImageSource final : public ImageSource {
 public:
  explicit FileImageSource(std::filesystem::path path) : path_(std::move(path)) {}
  Rgb8Image load() const override;
  std::uint64_t content_hash() const override;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::once_flag hash_once_;
  mutable std::uint64_t hash_ = 0;
};

}  // namespace fss
