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

#include "fss/synthetic.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"

#include "fss/coco_rle.hpp"
#include "fss/container.hpp"
#include "fss/image_io.hpp"
#include "fss/rng.hpp"

namespace fss {
namespace {

struct Blob {
  bool ellipse = false;
  int cx = 0, cy = 0, rx = 0, ry = 0;

  bool contains(int x, int y) const {
    if (!ellipse) return std::abs(x - cx) <= rx && std::abs(y - cy) <= ry;
    const double dx = (x - cx) / (rx + 0.5), dy = (y - cy) / (ry + 0.5);
    return dx * dx + dy * dy <= 1.0;
  }
};

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
}

std::vector<std::uint32_t> make_colors(const SyntheticOptions& o) {
  std::vector<std::uint32_t> colors;
  std::set<std::uint32_t> used{o.background_color};
  std::uint64_t h = splitmix64(o.seed ^ 0xc01042ULL);
  while (static_cast<int>(colors.size()) < o.num_classes) {
    h = splitmix64(h);
    // keep channels away from the dark background
    const std::uint32_t c = (0x40 + (h & 0xbf)) << 16 | (0x40 + ((h >> 8) & 0xbf)) << 8 | (0x40 + ((h >> 16) & 0xbf));
    if (used.insert(c).second) colors.push_back(c);
  }
  return colors;
}

std::optional<SyntheticImage> try_image(const SyntheticOptions& o, const std::vector<std::uint32_t>& colors,
                                        int index, Rng& rng) {
  const int w = uniform_int(rng, o.min_size, o.max_size);
  const int h = uniform_int(rng, o.min_size, o.max_size);
  const int n = uniform_int(rng, o.min_blobs, o.max_blobs);
  auto picks = rng.sample_without_replacement(static_cast<std::size_t>(o.num_classes), n);
  // image i always shows class (i mod C) + 1, so every class is well represented
  const std::size_t anchor = static_cast<std::size_t>(index % o.num_classes);
  if (std::find(picks.begin(), picks.end(), anchor) == picks.end()) picks.back() = anchor;

  SyntheticImage im;
  im.mask = MultiClassMask(w, h, kBackground);
  std::vector<Blob> blobs;
  for (int b = 0; b < n; ++b) {
    Blob blob;
    blob.ellipse = rng.uniform_index(2) == 1;
    blob.rx = uniform_int(rng, o.min_blob, o.max_blob) / 2;
    blob.ry = uniform_int(rng, o.min_blob, o.max_blob) / 2;
    if (o.overlapping && !blobs.empty()) {
      // straddle the boundary of the previous blob
      const Blob& prev = blobs.back();
      const bool horiz = rng.uniform_index(2) == 1;
      const int sign = rng.uniform_index(2) ? 1 : -1;
      blob.cx = prev.cx + (horiz ? sign * prev.rx : uniform_int(rng, -prev.rx / 2, prev.rx / 2));
      blob.cy = prev.cy + (horiz ? uniform_int(rng, -prev.ry / 2, prev.ry / 2) : sign * prev.ry);
      blob.cx = std::clamp(blob.cx, 0, w - 1);
      blob.cy = std::clamp(blob.cy, 0, h - 1);
    } else {
      blob.cx = uniform_int(rng, blob.rx, std::max(blob.rx, w - 1 - blob.rx));
      blob.cy = uniform_int(rng, blob.ry, std::max(blob.ry, h - 1 - blob.ry));
      for (const Blob& other : blobs) {
        // bounding boxes must keep `blob_gap` pixels apart
        const bool apart = std::abs(blob.cx - other.cx) > blob.rx + other.rx + o.blob_gap ||
                           std::abs(blob.cy - other.cy) > blob.ry + other.ry + o.blob_gap;
        if (!apart) return std::nullopt;
      }
    }
    blobs.push_back(blob);
    const ClassId c = static_cast<ClassId>(picks[b] + 1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (blob.contains(x, y)) im.mask(x, y) = c;
  }

  std::vector<std::size_t> area(o.num_classes + 1, 0);
  for (auto v : im.mask.data()) ++area[v];
  for (auto p : picks) {
    const ClassId c = static_cast<ClassId>(p + 1);
    if (area[c] == 0) continue;  // fully covered by a later blob
    if (area[c] < static_cast<std::size_t>(o.min_visible)) return std::nullopt;
    im.classes.push_back(c);
  }
  std::sort(im.classes.begin(), im.classes.end());

  im.pixels = Rgb8Image(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const ClassId c = im.mask(x, y);
      im.pixels.set_rgb(x, y, c == kBackground ? o.background_color : colors[c - 1]);
    }
  }
  return im;
}

}  // namespace

long category_id_for(ClassId c) { return c + (c - 1) / 10; }

SyntheticWorld make_world(const SyntheticOptions& o) {
  if (o.num_classes < 1 || o.num_images < 1) throw UsageError("synthetic world needs classes and images");
  if (o.min_size < 16 || o.max_size < o.min_size) throw UsageError("bad synthetic image size range");
  if (o.min_blobs < 1 || o.max_blobs < o.min_blobs || o.max_blobs > o.num_classes)
    throw UsageError("bad synthetic blob count range");
  SyntheticWorld world;
  world.options = o;
  world.class_colors = make_colors(o);
  for (int i = 0; i < o.num_images; ++i) {
    Rng rng = Rng::derive(o.seed, static_cast<std::uint64_t>(i), "synthetic-image");
    std::optional<SyntheticImage> im;
    for (int attempt = 0; attempt < 1000 && !im; ++attempt) im = try_image(o, world.class_colors, i, rng);
    if (!im) throw DataError("could not place blobs for synthetic image " + std::to_string(i + 1));
    im->id = std::to_string(i + 1);
    world.images.push_back(std::move(*im));
  }
  return world;
}

DatasetIndex to_dataset(const SyntheticWorld& world) {
  DatasetIndex index;
  std::vector<CategoryInfo> table;
  for (int c = 1; c <= world.options.num_classes; ++c)
    table.push_back({category_id_for(c), c, "class_" + std::to_string(c)});
  index.set_class_table(std::move(table));
  for (const auto& im : world.images) {
    AnnotatedImage ai;
    ai.image = make_memory_image(im.id, im.pixels);
    ai.mask = std::make_shared<MemoryMaskSource>(im.mask);
    ai.classes = im.classes;
    index.add_image(std::move(ai));
  }
  return index;
}

void write_world(const SyntheticWorld& world, const std::filesystem::path& dir) {
  using nlohmann::json;
  std::filesystem::create_directories(dir / "images");
  json images = json::array(), annotations = json::array(), categories = json::array();
  for (int c = 1; c <= world.options.num_classes; ++c)
    categories.push_back({{"id", category_id_for(c)}, {"name", "class_" + std::to_string(c)}});
  long ann_id = 1;
  for (const auto& im : world.images) {
    const std::string file = "images/" + im.id + ".png";
    write_png_rgb(dir / file, im.pixels);
    images.push_back({{"id", std::stol(im.id)},
                      {"file_name", file},
                      {"width", im.pixels.width},
                      {"height", im.pixels.height}});
    for (ClassId c : im.classes) {
      BoolMask m(im.mask.width(), im.mask.height(), 0);
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = im.mask[i] == c;
      const coco::Rle rle = coco::rle_encode(m);
      annotations.push_back({{"id", ann_id++},
                             {"image_id", std::stol(im.id)},
                             {"category_id", category_id_for(c)},
                             {"iscrowd", 0},
                             {"area", coco::rle_area(rle)},
                             {"segmentation",
                              {{"size", {rle.height, rle.width}}, {"counts", coco::rle_to_string(rle)}}}});
    }
  }
  const json doc = {{"images", images}, {"annotations", annotations}, {"categories", categories}};
  write_file_atomic(dir / "annotations.json", doc.dump() + "\n");
}

}  // namespace fss
