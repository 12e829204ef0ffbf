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

#include "fss/backends.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <set>

#include <spdlog/spdlog.h>

#include "fss/container.hpp"
#include "fss/rng.hpp"

namespace fss {
namespace {

double hash_unit(std::uint64_t h) { return static_cast<double>(splitmix64(h) >> 11) * 0x1.0p-53; }

// Symmetric hash-seeded direction, not yet normalized.
std::vector<double> hashed_direction(std::uint64_t base, int dim) {
  std::vector<double> v(dim);
  for (int i = 0; i < dim; ++i) v[i] = hash_unit(base + static_cast<std::uint64_t>(i)) * 2.0 - 1.0;
  return v;
}

void normalize_in_place(std::vector<double>& v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  if (ss == 0.0) return;
  const double inv = 1.0 / std::sqrt(ss);
  for (double& x : v) x *= inv;
}

constexpr std::uint32_t kCommonDirection = 0x1000000u;  // outside the 24-bit color range

struct Registry {
  std::mutex mu;
  std::map<std::string, ExtractorFactory, std::less<>> extractors;
  std::map<std::string, SegmenterFactory, std::less<>> segmenters;
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

std::string GroupTag::str() const {
  switch (kind) {
    case Kind::kCenters:
      return "centers";
    case Kind::kGroup:
      return "group(" + std::to_string(index) + ")";
    case Kind::kPair:
      return "pair(" + std::to_string(index) + ")";
  }
  return "?";
}

FeatureMap extract_features(const FeatureExtractor& extractor, const ImageRef& image) {
  const auto& spec = extractor.spec();
  if (spec.patch_size < 1 || spec.input_resolution % spec.patch_size != 0)
    throw BackendError("extractor '" + spec.name + "': input resolution " +
                       std::to_string(spec.input_resolution) + " is not divisible by patch size " +
                       std::to_string(spec.patch_size));
  FeatureMap fm = extractor.extract(image);
  if (fm.grid_h != spec.grid() || fm.grid_w != spec.grid() || fm.dim != spec.dim ||
      fm.data.size() != fm.cells() * static_cast<std::size_t>(fm.dim))
    throw BackendError("extractor '" + spec.name + "' returned a map of unexpected shape");
  return fm;
}

std::vector<std::uint32_t> dominant_colors(const Rgb8Image& image, const SourceGeometry& g, int grid_w,
                                           int grid_h, int col, int row) {
  const PixelRect r = patch_rect(g, grid_w, grid_h, col, row);
  if (r.empty()) return {};
  std::vector<std::pair<std::uint32_t, double>> weights;
  const int xa = static_cast<int>(std::floor(r.x0)), xb = static_cast<int>(std::ceil(r.x1));
  const int ya = static_cast<int>(std::floor(r.y0)), yb = static_cast<int>(std::ceil(r.y1));
  for (int y = ya; y < yb; ++y) {
    const double wy = std::min<double>(y + 1, r.y1) - std::max<double>(y, r.y0);
    if (wy <= 0) continue;
    for (int x = xa; x < xb; ++x) {
      const double wx = std::min<double>(x + 1, r.x1) - std::max<double>(x, r.x0);
      if (wx <= 0) continue;
      const std::uint32_t c = image.rgb(x, y);
      auto it = std::find_if(weights.begin(), weights.end(), [c](const auto& p) { return p.first == c; });
      if (it == weights.end()) {
        weights.emplace_back(c, wx * wy);
      } else {
        it->second += wx * wy;
      }
    }
  }
  if (weights.empty()) return {};
  double best = 0.0;
  for (const auto& p : weights) best = std::max(best, p.second);
  const double tol = 1e-9 * r.area();
  std::vector<std::uint32_t> out;
  for (const auto& p : weights)
    if (p.second >= best - tol) out.push_back(p.first);
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<std::uint32_t> dominant_color(const Rgb8Image& image, const SourceGeometry& g,
                                            int grid_w, int grid_h, int col, int row) {
  const auto d = dominant_colors(image, g, grid_w, grid_h, col, row);
  if (d.empty()) return std::nullopt;
  return d.front();
}

MockFeatureExtractor::MockFeatureExtractor(FeatureExtractorSpec spec, MockFeatureParams params)
    : spec_(std::move(spec)), params_(params) {}

std::vector<float> MockFeatureExtractor::codebook_vector(std::uint32_t color) const {
  auto raw = [&](std::uint32_t c) {
    auto v = hashed_direction(splitmix64(params_.codebook_seed ^ splitmix64(c)), spec_.dim);
    normalize_in_place(v);
    return v;
  };
  std::vector<double> v = raw(color);
  if (params_.common_weight > 0.0) {
    const auto common = raw(kCommonDirection);
    for (int i = 0; i < spec_.dim; ++i)
      v[i] = (1.0 - params_.common_weight) * v[i] + params_.common_weight * common[i];
    normalize_in_place(v);
  }
  return {v.begin(), v.end()};
}

FeatureMap MockFeatureExtractor::extract(const ImageRef& image) const {
  const Rgb8Image img = image.load();
  const int grid = spec_.grid();
  FeatureMap fm(grid, grid, spec_.dim);
  fm.source_geometry = make_geometry(img.width, img.height, spec_.input_resolution);
  std::map<std::uint32_t, std::vector<float>> codebook;
  const std::uint64_t jitter_seed = splitmix64(params_.codebook_seed + 1);
  for (int row = 0; row < grid; ++row) {
    for (int col = 0; col < grid; ++col) {
      const auto colors = dominant_colors(img, fm.source_geometry, grid, grid, col, row);
      if (colors.empty()) continue;
      const auto color = &colors.front();
      std::vector<double> v(spec_.dim, 0.0);
      for (auto c : colors) {
        auto it = codebook.find(c);
        if (it == codebook.end()) it = codebook.emplace(c, codebook_vector(c)).first;
        for (int i = 0; i < spec_.dim; ++i) v[i] += it->second[i];
      }
      if (colors.size() > 1) normalize_in_place(v);

      const std::uint64_t j = splitmix64(jitter_seed ^ splitmix64(*color) ^
                                         splitmix64((static_cast<std::uint64_t>(row) << 32) |
                                                    static_cast<std::uint32_t>(col)));
      auto u = hashed_direction(j, spec_.dim);
      double along = 0.0;
      for (int i = 0; i < spec_.dim; ++i) along += u[i] * v[i];
      for (int i = 0; i < spec_.dim; ++i) u[i] -= along * v[i];
      normalize_in_place(u);
      const double theta = params_.max_jitter * hash_unit(j + static_cast<std::uint64_t>(spec_.dim));
      const double cs = std::cos(theta), sn = std::sin(theta);
      auto cell = fm.cell(row, col);
      for (int i = 0; i < spec_.dim; ++i)
        cell[i] = static_cast<float>(params_.magnitude * (cs * v[i] + sn * u[i]));
    }
  }
  return fm;
}

Grid2D<std::int32_t> color_components(const Rgb8Image& image) {
  Grid2D<std::int32_t> comp(image.width, image.height, -1);
  std::int32_t next = 0;
  std::vector<std::pair<int, int>> stack;
  for (int y0 = 0; y0 < image.height; ++y0) {
    for (int x0 = 0; x0 < image.width; ++x0) {
      if (comp(x0, y0) >= 0) continue;
      const std::uint32_t color = image.rgb(x0, y0);
      comp(x0, y0) = next;
      stack.assign(1, {x0, y0});
      while (!stack.empty()) {
        const auto [x, y] = stack.back();
        stack.pop_back();
        const int nx[4] = {x - 1, x + 1, x, x};
        const int ny[4] = {y, y, y - 1, y + 1};
        for (int k = 0; k < 4; ++k) {
          if (nx[k] < 0 || ny[k] < 0 || nx[k] >= image.width || ny[k] >= image.height) continue;
          if (comp(nx[k], ny[k]) >= 0 || image.rgb(nx[k], ny[k]) != color) continue;
          comp(nx[k], ny[k]) = next;
          stack.emplace_back(nx[k], ny[k]);
        }
      }
      ++next;
    }
  }
  return comp;
}

namespace {

class MockSegmenterSession final : public SegmenterSession {
 public:
  explicit MockSegmenterSession(const Rgb8Image& image) : components_(color_components(image)) {}

  std::vector<MaskCandidate> segment(const PromptSet& prompts) const override {
    std::set<std::int32_t> pos, neg;
    for (const auto& p : prompts.positives) pos.insert(components_(p.x, p.y));
    for (const auto& p : prompts.negatives) neg.insert(components_(p.x, p.y));
    MaskCandidate cand;
    cand.class_id = prompts.class_id;
    cand.prompt = prompts;
    cand.mask = BoolMask(components_.width(), components_.height(), 0);
    const bool contradictory =
        std::any_of(pos.begin(), pos.end(), [&](std::int32_t c) { return neg.count(c) > 0; });
    if (!contradictory) {
      for (std::size_t i = 0; i < components_.size(); ++i)
        cand.mask[i] = pos.count(components_[i]) > 0;
    }
    cand.model_score = count_true(cand.mask) > 0 ? 1.0 : 0.0;
    return {std::move(cand)};
  }

 private:
  Grid2D<std::int32_t> components_;
};

}  // namespace

std::unique_ptr<SegmenterSession> MockSegmenter::open(const ImageRef& image) const {
  return std::make_unique<MockSegmenterSession>(image.load());
}

std::vector<MaskCandidate> segment_with_prompts(const SegmenterSession& session, int image_w,
                                                int image_h, const PromptSet& prompts) {
  if (prompts.positives.empty()) throw BackendError("prompt set has no positive points");
  auto in_bounds = [&](const Point& p) { return p.x >= 0 && p.y >= 0 && p.x < image_w && p.y < image_h; };
  if (!std::all_of(prompts.positives.begin(), prompts.positives.end(), in_bounds) ||
      !std::all_of(prompts.negatives.begin(), prompts.negatives.end(), in_bounds))
    throw BackendError("prompt point outside the image");
  auto cands = session.segment(prompts);
  if (cands.empty()) throw BackendError("segmenter returned no candidates");
  for (auto& c : cands) {
    if (c.mask.width() != image_w || c.mask.height() != image_h)
      throw BackendError("segmenter mask does not match the image size");
    c.model_score = std::clamp(c.model_score, 0.0, 1.0);
  }
  return cands;
}

std::vector<MaskCandidate> segment_with_prompts(const Segmenter& segmenter, const ImageRef& image,
                                                const PromptSet& prompts) {
  const auto session = segmenter.open(image);
  return segment_with_prompts(*session, image.width, image.height, prompts);
}

std::shared_ptr<const FeatureExtractor> make_feature_extractor(std::string_view name) {
  if (name == "mock") {
    return std::make_shared<MockFeatureExtractor>(FeatureExtractorSpec{"mock", "1", 518, 14, 64},
                                                  MockFeatureParams{});
  }
  if (name == "mock-sam") {
    MockFeatureParams p;
    p.max_jitter = 0.6;
    p.common_weight = 0.6;
    return std::make_shared<MockFeatureExtractor>(FeatureExtractorSpec{"mock-sam", "1", 1024, 16, 64}, p);
  }
  auto& r = registry();
  std::lock_guard lock(r.mu);
  auto it = r.extractors.find(name);
  if (it == r.extractors.end())
    throw BackendError("feature backend '" + std::string(name) + "' is not available");
  return it->second();
}

std::shared_ptr<const Segmenter> make_segmenter(std::string_view name) {
  if (name == "mock") return std::make_shared<MockSegmenter>();
  auto& r = registry();
  std::lock_guard lock(r.mu);
  auto it = r.segmenters.find(name);
  if (it == r.segmenters.end())
    throw BackendError("segmenter backend '" + std::string(name) + "' is not available");
  return it->second();
}

void register_feature_extractor(std::string name, ExtractorFactory factory) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  r.extractors[std::move(name)] = std::move(factory);
}

void register_segmenter(std::string name, SegmenterFactory factory) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  r.segmenters[std::move(name)] = std::move(factory);
}

namespace {

constexpr std::uint32_t kCacheVersion = 1;

std::string sanitize(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c == '/' || c == '\\' || c == ':' || c == '\0') c = '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

nlohmann::json geometry_json(const SourceGeometry& g) {
  return {{"input_resolution", g.input_resolution}, {"scale_factor", g.scale_factor},
          {"pad_right", g.pad_right},               {"pad_bottom", g.pad_bottom},
          {"image_width", g.image_width},           {"image_height", g.image_height}};
}

SourceGeometry geometry_from_json(const nlohmann::json& j) {
  SourceGeometry g;
  g.input_resolution = j.at("input_resolution").get<int>();
  g.scale_factor = j.at("scale_factor").get<double>();
  g.pad_right = j.at("pad_right").get<int>();
  g.pad_bottom = j.at("pad_bottom").get<int>();
  g.image_width = j.at("image_width").get<int>();
  g.image_height = j.at("image_height").get<int>();
  return g;
}

void quarantine(const std::filesystem::path& path) {
  std::error_code ec;
  auto target = path;
  target += ".corrupt";
  std::filesystem::rename(path, target, ec);
  if (ec) std::filesystem::remove(path, ec);
  spdlog::warn("feature cache: quarantined corrupt entry {}", path.string());
}

}  // namespace

std::filesystem::path FeatureCache::path_for(const CacheKey& key) const {
  return root_ / sanitize(key.extractor_name) / (sanitize(key.image_id) + ".sacf");
}

std::optional<FeatureMap> FeatureCache::get(const CacheKey& key) const {
  const auto path = path_for(key);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  FeatureMap fm;
  nlohmann::json h;
  try {
    Container c = decode_container(read_file_bytes(path), "SACF");
    if (c.version != kCacheVersion) throw DataError("unsupported cache format version");
    h = c.header;
    fm.grid_h = h.at("grid_h").get<int>();
    fm.grid_w = h.at("grid_w").get<int>();
    fm.dim = h.at("dim").get<int>();
    fm.normalized = h.at("normalized").get<bool>();
    fm.source_geometry = geometry_from_json(h.at("geometry"));
    if (h.at("dtype").get<std::string>() != "f32le") throw DataError("unsupported dtype");
    if (fm.grid_h < 1 || fm.grid_w < 1 || fm.dim < 1 ||
        c.payload.size() != fm.cells() * static_cast<std::size_t>(fm.dim))
      throw DataError("payload size does not match header");
    fm.data = std::move(c.payload);
  } catch (const std::exception&) {
    quarantine(path);
    return std::nullopt;
  }
  // A well-formed entry for another version or different pixels is stale, not corrupt.
  const auto& k = h.value("key", nlohmann::json::object());
  if (h.value("extractor", std::string{}) != key.extractor_name ||
      k.value("extractor_version", std::string{}) != key.extractor_version ||
      k.value("image_id", std::string{}) != key.image_id ||
      k.value("content_hash", std::uint64_t{0}) != key.content_hash)
    return std::nullopt;
  return fm;
}

void FeatureCache::put(const CacheKey& key, const FeatureMap& fm) const {
  Container c;
  c.magic = "SACF";
  c.version = kCacheVersion;
  c.header = {{"grid_h", fm.grid_h},
              {"grid_w", fm.grid_w},
              {"dim", fm.dim},
              {"normalized", fm.normalized},
              {"geometry", geometry_json(fm.source_geometry)},
              {"extractor", key.extractor_name},
              {"dtype", "f32le"},
              {"key",
               {{"extractor_version", key.extractor_version},
                {"image_id", key.image_id},
                {"content_hash", key.content_hash}}}};
  c.payload = fm.data;
  write_file_atomic(path_for(key), encode_container(c));
}

std::vector<CacheEntryInfo> FeatureCache::list() const {
  std::vector<CacheEntryInfo> out;
  std::error_code ec;
  if (!std::filesystem::is_directory(root_, ec)) return out;
  for (const auto& dir : std::filesystem::directory_iterator(root_)) {
    if (!dir.is_directory()) continue;
    for (const auto& f : std::filesystem::directory_iterator(dir.path())) {
      if (f.path().extension() != ".sacf") continue;
      out.push_back({f.path(), dir.path().filename().string(), f.path().stem().string(),
                     f.file_size()});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const CacheEntryInfo& a, const CacheEntryInfo& b) { return a.path < b.path; });
  return out;
}

std::size_t FeatureCache::clear() const {
  std::size_t n = 0;
  std::error_code ec;
  if (!std::filesystem::is_directory(root_, ec)) return 0;
  for (const auto& dir : std::filesystem::directory_iterator(root_)) {
    if (!dir.is_directory()) continue;
    for (const auto& f : std::filesystem::directory_iterator(dir.path())) {
      const auto name = f.path().filename().string();
      if (name.ends_with(".sacf") || name.ends_with(".sacf.corrupt")) {
        std::filesystem::remove(f.path());
        ++n;
      }
    }
  }
  return n;
}

FeatureMap CachingFeatureExtractor::extract(const ImageRef& image) const {
  const auto& s = inner_->spec();
  const CacheKey key{s.name, s.version, image.id,
                     image.pixel_source ? image.pixel_source->content_hash() : 0};
  if (auto hit = cache_.get(key)) return *hit;
  FeatureMap fm = inner_->extract(image);
  cache_.put(key, fm);
  return fm;
}

}  // namespace fss
