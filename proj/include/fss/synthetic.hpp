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
#include <vector>

#include "fss/core.hpp"
#include "fss/ingest.hpp"

namespace fss {

/// Generator options for a synthetic world of solid-color blobs. Class c is
/// always drawn with the same color, so the mock backends can separate classes.
struct SyntheticOptions {
  std::uint64_t seed = 7;
  int num_classes = 80;
  int num_images = 320;
  int min_size = 96;
  int max_size = 128;
  int min_blobs = 1;
  int max_blobs = 3;
  int min_blob = 28;     // blob extent in pixels
  int max_blob = 56;
  int min_visible = 160; // every class left in an image keeps this many pixels
  /// Later blobs are placed straddling the edge of an earlier one, so most
  /// images contain touching regions of unrelated classes. Otherwise blobs
  /// keep `blob_gap` pixels between their bounding boxes.
  bool overlapping = false;
  int blob_gap = 6;
  std::uint32_t background_color = 0x141414;
};

struct SyntheticImage {
  std::string id;  // decimal, 1-based
  Rgb8Image pixels;
  MultiClassMask mask;
  std::vector<ClassId> classes;  // visible classes, ascending
};

struct SyntheticWorld {
  SyntheticOptions options;
  std::vector<std::uint32_t> class_colors;  // index c - 1
  std::vector<SyntheticImage> images;

  std::uint32_t color_of(ClassId c) const {
    return c == kBackground ? options.background_color : class_colors.at(c - 1);
  }
};

SyntheticWorld make_world(const SyntheticOptions& options);

/// In-memory dataset over the world (no files). Class c has dataset
/// category id `category_id_for(c)`.
DatasetIndex to_dataset(const SyntheticWorld& world);

/// Sparse category ids, as in COCO.
long category_id_for(ClassId c);

/// Writes <dir>/images/<id>.png and <dir>/annotations.json (one RLE
/// annotation per visible class per image).
void write_world(const SyntheticWorld& world, const std::filesystem::path& dir);

}  // namespace fss
