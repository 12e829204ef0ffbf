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

#include "fss/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fss/rng.hpp"

namespace fss {

MemoryImageSource::MemoryImageSource(Rgb8Image image)
    : image_(std::move(image)), hash_(fnv1a64(image_.pixels.data(), image_.pixels.size())) {
  const int dims[2] = {image_.width, image_.height};
  hash_ = fnv1a64(dims, sizeof(dims), hash_);
}

Rgb8Image ImageRef::load() const {
  if (!pixel_source) throw DataError("image '" + id + "' has no pixel source");
  Rgb8Image img = pixel_source->load();
  if (img.width != width || img.height != height) {
    std::ostringstream os;
    os << "image '" << id << "' decoded as " << img.width << "x" << img.height
       << " but is declared " << width << "x" << height;
    throw DataError(os.str());
  }
  return img;
}

ImageRef make_memory_image(std::string id, Rgb8Image image) {
  ImageRef ref;
  ref.id = std::move(id);
  ref.width = image.width;
  ref.height = image.height;
  ref.pixel_source = std::make_shared<MemoryImageSource>(std::move(image));
  return ref;
}

SourceGeometry make_geometry(int image_width, int image_height, int input_resolution) {
  if (image_width < 1 || image_height < 1 || input_resolution < 1)
    throw DataError("geometry requires positive image size and resolution");
  SourceGeometry g;
  g.input_resolution = input_resolution;
  g.image_width = image_width;
  g.image_height = image_height;
  g.scale_factor = static_cast<double>(input_resolution) / std::max(image_width, image_height);
  const int rw = std::clamp(static_cast<int>(std::lround(image_width * g.scale_factor)), 1,
                            input_resolution);
  const int rh = std::clamp(static_cast<int>(std::lround(image_height * g.scale_factor)), 1,
                            input_resolution);
  g.pad_right = input_resolution - rw;
  g.pad_bottom = input_resolution - rh;
  return g;
}

PixelRect patch_rect(const SourceGeometry& g, int grid_w, int grid_h, int col, int row) {
  const double px = static_cast<double>(g.input_resolution) / grid_w / g.scale_factor;
  const double py = static_cast<double>(g.input_resolution) / grid_h / g.scale_factor;
  PixelRect r;
  r.x0 = col * px;
  r.y0 = row * py;
  r.x1 = std::min((col + 1) * px, static_cast<double>(g.image_width));
  r.y1 = std::min((row + 1) * py, static_cast<double>(g.image_height));
  return r;
}

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

FeatureMap l2_normalize(const FeatureMap& fm) {
  for (float v : fm.data) {
    if (!std::isfinite(v)) throw DataError("l2_normalize: feature map contains non-finite values");
  }
  if (fm.normalized) return fm;
  FeatureMap out = fm;
  for (std::size_t i = 0; i < out.cells(); ++i) {
    std::span<float> v{out.data.data() + i * out.dim, static_cast<std::size_t>(out.dim)};
    double ss = 0.0;
    for (float x : v) ss += static_cast<double>(x) * x;
    if (ss == 0.0) continue;
    const double inv = 1.0 / std::sqrt(ss);
    for (float& x : v) x = static_cast<float>(x * inv);
  }
  out.normalized = true;
  return out;
}

namespace {

struct AxisSampler {
  int i0, i1;
  double t;
};

// Sample positions along one axis: pixel centers mapped to fractional patch
// coordinates, clamped to the last patch that still holds image content.
std::vector<AxisSampler> axis_samples(int out_n, int grid_n, int image_n, const SourceGeometry& g) {
  const double content = image_n * g.scale_factor;  // extent in resized units
  const double patch = static_cast<double>(g.input_resolution) / grid_n;
  const int last = std::clamp(static_cast<int>(std::ceil(content / patch - 1e-9)) - 1, 0, grid_n - 1);
  std::vector<AxisSampler> s(out_n);
  for (int x = 0; x < out_n; ++x) {
    const double c = (x + 0.5) / out_n * content;
    const double u = std::clamp(c / patch - 0.5, 0.0, static_cast<double>(last));
    const int i0 = static_cast<int>(std::floor(u));
    s[x] = {i0, std::min(i0 + 1, last), u - i0};
  }
  return s;
}

}  // namespace

RealGrid resample_to_pixels(const RealGrid& grid, const SourceGeometry& g, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw DataError("resample_to_pixels: zero-sized target");
  if (grid.width() < 1 || grid.height() < 1) throw DataError("resample_to_pixels: empty grid");
  if (g.input_resolution < grid.width() || g.input_resolution < grid.height() ||
      g.scale_factor <= 0.0)
    throw DataError("resample_to_pixels: geometry inconsistent with grid shape");
  const int iw = g.image_width > 0 ? g.image_width : out_w;
  const int ih = g.image_height > 0 ? g.image_height : out_h;
  const auto xs = axis_samples(out_w, grid.width(), iw, g);
  const auto ys = axis_samples(out_h, grid.height(), ih, g);
  RealGrid out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const auto& sy = ys[y];
    for (int x = 0; x < out_w; ++x) {
      const auto& sx = xs[x];
      const double a = grid(sx.i0, sy.i0), b = grid(sx.i1, sy.i0);
      const double c = grid(sx.i0, sy.i1), d = grid(sx.i1, sy.i1);
      const double top = a + sx.t * (b - a);
      const double bottom = c + sx.t * (d - c);
      out(x, y) = top + sy.t * (bottom - top);
    }
  }
  return out;
}

BoolMask resample_indicator(const BoolMask& grid, const SourceGeometry& g, int out_w, int out_h) {
  RealGrid r(grid.width(), grid.height());
  for (std::size_t i = 0; i < grid.size(); ++i) r[i] = grid[i] ? 1.0 : 0.0;
  const RealGrid up = resample_to_pixels(r, g, out_w, out_h);
  BoolMask out(out_w, out_h);
  for (std::size_t i = 0; i < up.size(); ++i) out[i] = up[i] >= 0.5;
  return out;
}

bool AnnotatedImage::has_class(ClassId c) const {
  return std::binary_search(classes.begin(), classes.end(), c);
}

MultiClassMask AnnotatedImage::load_mask() const {
  if (!mask) throw DataError("image '" + image.id + "' has no annotation");
  MultiClassMask m = mask->load();
  if (m.width() != image.width || m.height() != image.height)
    throw DataError("annotation of image '" + image.id + "' does not match image dimensions");
  return m;
}

std::optional<MultiClassMask> Episode::query_truth() const {
  if (!query.mask) return std::nullopt;
  MultiClassMask m = query.load_mask();
  for (auto& v : m.data()) {
    if (v != kBackground && !std::binary_search(class_ids.begin(), class_ids.end(), v))
      v = kBackground;
  }
  return m;
}

}  // namespace fss
