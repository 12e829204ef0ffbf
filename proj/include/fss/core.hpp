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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fss/error.hpp"

namespace fss {

/// Dense class id. 0 is reserved for background everywhere.
using ClassId = std::int32_t;
inline constexpr ClassId kBackground = 0;

/// Row-major 2D array.
template <typename T>
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& operator()(int x, int y) const {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(const Grid2D& o) const { return width_ == o.width_ && height_ == o.height_; }
  friend bool operator==(const Grid2D&, const Grid2D&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using RealGrid = Grid2D<double>;
using BoolMask = Grid2D<std::uint8_t>;
using LabelGrid = Grid2D<ClassId>;

/// Per-pixel class ids of an annotated image (0 = background).
using MultiClassMask = LabelGrid;
/// Final exclusive prediction, one class id per pixel (0 = unassigned).
using LabelMap = LabelGrid;

inline std::size_t count_true(const BoolMask& m) {
  std::size_t n = 0;
  for (auto v : m.data()) n += v != 0;
  return n;
}

struct Rgb8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major

  Rgb8Image() = default;
  Rgb8Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3) {}

  std::uint32_t rgb(int x, int y) const {
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    return (std::uint32_t{pixels[i]} << 16) | (std::uint32_t{pixels[i + 1]} << 8) | pixels[i + 2];
  }
  void set_rgb(int x, int y, std::uint32_t c) {
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    pixels[i] = static_cast<std::uint8_t>(c >> 16);
    pixels[i + 1] = static_cast<std::uint8_t>(c >> 8);
    pixels[i + 2] = static_cast<std::uint8_t>(c);
  }
};

/// Resolves an ImageRef to pixels. Implementations must be thread-safe.
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual Rgb8Image load() const = 0;
  virtual std::uint64_t content_hash() const = 0;
};

/// Pixels held in memory.
class MemoryImageSource final : public ImageSource {
 public:
  explicit MemoryImageSource(Rgb8Image image);
  Rgb8Image load() const override { return image_; }
  std::uint64_t content_hash() const override { return hash_; }

 private:
  Rgb8Image image_;
  std::uint64_t hash_;
};

struct ImageRef {
  std::string id;
  int width = 0;
  int height = 0;
  std::shared_ptr<const ImageSource> pixel_source;

  Rgb8Image load() const;
};

ImageRef make_memory_image(std::string id, Rgb8Image image);

/// Maps a patch grid back onto original-image pixels. The image is rescaled
/// so its long side equals input_resolution and padded bottom/right to square.
struct SourceGeometry {
  int input_resolution = 0;
  double scale_factor = 1.0;
  int pad_right = 0;
  int pad_bottom = 0;
  int image_width = 0;
  int image_height = 0;

  friend bool operator==(const SourceGeometry&, const SourceGeometry&) = default;
};

SourceGeometry make_geometry(int image_width, int image_height, int input_resolution);

/// Rectangle of a patch in original-image coordinates, clipped to the image.
/// Empty (x1 <= x0 or y1 <= y0) when the patch lies entirely in padding.
struct PixelRect {
  double x0, y0, x1, y1;
  bool empty() const { return x1 <= x0 || y1 <= y0; }
  double area() const { return empty() ? 0.0 : (x1 - x0) * (y1 - y0); }
};

PixelRect patch_rect(const SourceGeometry& geometry, int grid_w, int grid_h, int col, int row);

/// Patch-embedding grid, row-major cells of `dim` floats.
struct FeatureMap {
  int grid_h = 0;
  int grid_w = 0;
  int dim = 0;
  std::vector<float> data;
  bool normalized = false;
  SourceGeometry source_geometry;

  FeatureMap() = default;
  FeatureMap(int gh, int gw, int d)
      : grid_h(gh), grid_w(gw), dim(d), data(static_cast<std::size_t>(gh) * gw * d, 0.0f) {}

  std::size_t cells() const { return static_cast<std::size_t>(grid_h) * grid_w; }
  std::span<float> cell(int row, int col) {
    return {data.data() + (static_cast<std::size_t>(row) * grid_w + col) * dim,
            static_cast<std::size_t>(dim)};
  }
  std::span<const float> cell(int row, int col) const {
    return {data.data() + (static_cast<std::size_t>(row) * grid_w + col) * dim,
            static_cast<std::size_t>(dim)};
  }
  std::span<const float> cell(std::size_t index) const {
    return {data.data() + index * dim, static_cast<std::size_t>(dim)};
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

/// Unit-normalizes every cell. Zero vectors stay zero; a map already flagged
/// normalized is returned unchanged. Throws DataError on non-finite values.
FeatureMap l2_normalize(const FeatureMap& fm);

/// Bilinear patch-grid to pixel resampling restricted to the unpadded content
/// region. Output is exactly out_h x out_w.
RealGrid resample_to_pixels(const RealGrid& grid, const SourceGeometry& geometry, int out_w,
                            int out_h);

/// Bilinear resampling of a 0/1 indicator followed by a >= 0.5 cut.
BoolMask resample_indicator(const BoolMask& grid, const SourceGeometry& geometry, int out_w,
                            int out_h);

double dot(std::span<const float> a, std::span<const float> b);

/// Loads the pixels behind a mask lazily. Implementations must be thread-safe.
class MaskSource {
 public:
  virtual ~MaskSource() = default;
  virtual MultiClassMask load() const = 0;
};

class MemoryMaskSource final : public MaskSource {
 public:
  explicit MemoryMaskSource(MultiClassMask mask) : mask_(std::move(mask)) {}
  MultiClassMask load() const override { return mask_; }

 private:
  MultiClassMask mask_;
};

/// An image together with its (lazily decoded) annotation and the set of
/// classes the annotation declares.
struct AnnotatedImage {
  ImageRef image;
  std::shared_ptr<const MaskSource> mask;
  std::vector<ClassId> classes;  // sorted, without background

  bool has_class(ClassId c) const;
  MultiClassMask load_mask() const;
};

/// One N-way K-shot task.
struct Episode {
  std::size_t episode_id = 0;
  std::vector<ClassId> class_ids;  // sorted ascending
  std::vector<AnnotatedImage> supports;  // distinct images
  std::vector<std::pair<std::string, ClassId>> support_pairs;  // (image id, class id) as drawn
  AnnotatedImage query;
  int n_way = 0;
  int k_shot = 0;
  std::uint64_t seed = 0;

  /// Query annotation restricted to episode classes (others become 0).
  std::optional<MultiClassMask> query_truth() const;
};

}  // namespace fss
