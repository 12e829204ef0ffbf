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

#include "fss/crfa.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "fss/container.hpp"

namespace fss {
namespace {

using LabelPredicate = std::function<bool(ClassId)>;

std::vector<double> coverage_where(const SourceGeometry& g, int grid_w, int grid_h,
                                   const MultiClassMask& mask, const LabelPredicate& pred) {
  if (mask.width() != g.image_width || mask.height() != g.image_height)
    throw DataError("mask dimensions do not match the feature map's source image");
  std::vector<double> cov(static_cast<std::size_t>(grid_w) * grid_h, -1.0);
  for (int row = 0; row < grid_h; ++row) {
    for (int col = 0; col < grid_w; ++col) {
      const PixelRect r = patch_rect(g, grid_w, grid_h, col, row);
      if (r.empty()) continue;
      double hit = 0.0;
      const int xa = static_cast<int>(std::floor(r.x0)), xb = static_cast<int>(std::ceil(r.x1));
      const int ya = static_cast<int>(std::floor(r.y0)), yb = static_cast<int>(std::ceil(r.y1));
      for (int y = ya; y < yb; ++y) {
        const double wy = std::min<double>(y + 1, r.y1) - std::max<double>(y, r.y0);
        if (wy <= 0) continue;
        for (int x = xa; x < xb; ++x) {
          if (!pred(mask(x, y))) continue;
          const double wx = std::min<double>(x + 1, r.x1) - std::max<double>(x, r.x0);
          if (wx > 0) hit += wx * wy;
        }
      }
      cov[static_cast<std::size_t>(row) * grid_w + col] = hit / r.area();
    }
  }
  return cov;
}

FeatureBag collect(const FeatureMap& fm, const std::vector<double>& cov, ClassId class_id,
                   const std::string& image_id) {
  if (!fm.normalized) throw DataError("stratify requires a normalized feature map");
  FeatureBag bag;
  bag.class_id = class_id;
  bag.dim = fm.dim;
  for (int row = 0; row < fm.grid_h; ++row) {
    for (int col = 0; col < fm.grid_w; ++col) {
      if (cov[static_cast<std::size_t>(row) * fm.grid_w + col] < kPatchCoverage) continue;
      const auto v = fm.cell(row, col);
      bag.vectors.insert(bag.vectors.end(), v.begin(), v.end());
      bag.provenance.push_back({image_id, row, col});
    }
  }
  return bag;
}

std::vector<float> as_unit_rows(const KMeansResult& km) {
  std::vector<float> rows(km.centroids.size());
  for (int j = 0; j < km.k; ++j) {
    const double* c = &km.centroids[static_cast<std::size_t>(j) * km.dim];
    double ss = 0.0;
    for (int d = 0; d < km.dim; ++d) ss += c[d] * c[d];
    const double inv = ss > 0.0 ? 1.0 / std::sqrt(ss) : 0.0;
    for (int d = 0; d < km.dim; ++d)
      rows[static_cast<std::size_t>(j) * km.dim + d] = static_cast<float>(c[d] * inv);
  }
  return rows;
}

FeatureBag bag_from_pool(ClassId c, int dim, const std::vector<float>& pool) {
  FeatureBag b;
  b.class_id = c;
  b.dim = dim;
  b.vectors = pool;
  return b;
}

// Runs k-means under a stage-specific generator.
std::vector<float> cluster_stage(const FeatureBag& bag, int n_c, std::uint64_t seed,
                                 std::string_view stage) {
  if (bag.size() == 0) return {};
  std::vector<double> pts(bag.vectors.begin(), bag.vectors.end());
  Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(bag.class_id), stage);
  return as_unit_rows(kmeans(pts, bag.dim, n_c, rng));
}

// Adds an image's bag to a class pool under the budget rule.
void absorb(std::vector<float>& pool, const FeatureBag& bag, int n_c, std::size_t budget,
            std::uint64_t seed) {
  if (bag.size() == 0) return;
  const std::size_t have = pool.size() / bag.dim;
  if (have + bag.size() <= budget) {
    pool.insert(pool.end(), bag.vectors.begin(), bag.vectors.end());
    return;
  }
  FeatureBag merged = bag_from_pool(bag.class_id, bag.dim, pool);
  const auto reduced = cluster_stage(bag, n_c, seed, "cluster-image");
  merged.vectors.insert(merged.vectors.end(), reduced.begin(), reduced.end());
  pool = cluster_stage(merged, n_c, seed, "cluster-merge");
}

// Background pool: plain append, then a uniform deterministic subsample down to the cap.
void absorb_background(std::vector<float>& pool, const FeatureBag& bag, std::size_t cap) {
  if (bag.size() == 0) return;
  pool.insert(pool.end(), bag.vectors.begin(), bag.vectors.end());
  const std::size_t n = pool.size() / bag.dim;
  if (n <= cap) return;
  std::vector<float> kept;
  kept.reserve(cap * bag.dim);
  for (std::size_t i = 0; i < cap; ++i) {
    const std::size_t src = i * n / cap;
    kept.insert(kept.end(), pool.begin() + src * bag.dim, pool.begin() + (src + 1) * bag.dim);
  }
  pool = std::move(kept);
}

void add_image(CrfaStore& store, const AnnotatedImage& image, const FeatureExtractor& extractor,
               std::span<const ClassId> class_ids, std::vector<ClassId>& touched) {
  const FeatureMap fm = l2_normalize(extract_features(extractor, image.image));
  if (store.dim == 0) store.dim = fm.dim;
  if (store.dim != fm.dim) throw DataError("feature dimension changed between supports");
  const MultiClassMask mask = image.load_mask();
  for (ClassId c : class_ids) {
    const FeatureBag bag = stratify(fm, mask, c, image.image.id);
    if (bag.size() == 0) continue;
    absorb(store.classes[c].pool, bag, store.n_c, store.budget, store.seed);
    touched.push_back(c);
  }
  const FeatureBag bg = stratify_background(fm, mask, class_ids, image.image.id);
  if (bg.size() > 0) {
    absorb_background(store.classes[kBackground].pool, bg, kBackgroundBudgetFactor * store.budget);
    touched.push_back(kBackground);
  }
  store.support_image_ids.push_back(image.image.id);
}

void recluster(CrfaStore& store, ClassId c) {
  auto& e = store.classes[c];
  e.rows = cluster(bag_from_pool(c, store.dim, e.pool), store.n_c, store.seed);
}

}  // namespace

std::vector<double> patch_coverage(const SourceGeometry& g, int grid_w, int grid_h,
                                   const MultiClassMask& mask, ClassId class_id) {
  return coverage_where(g, grid_w, grid_h, mask, [class_id](ClassId l) { return l == class_id; });
}

FeatureBag stratify(const FeatureMap& fm, const MultiClassMask& mask, ClassId class_id,
                    const std::string& image_id) {
  return collect(fm, patch_coverage(fm.source_geometry, fm.grid_w, fm.grid_h, mask, class_id),
                 class_id, image_id);
}

FeatureBag stratify_background(const FeatureMap& fm, const MultiClassMask& mask,
                               std::span<const ClassId> episode_classes,
                               const std::string& image_id) {
  std::vector<ClassId> sorted(episode_classes.begin(), episode_classes.end());
  std::sort(sorted.begin(), sorted.end());
  auto cov = coverage_where(fm.source_geometry, fm.grid_w, fm.grid_h, mask, [&](ClassId l) {
    return !std::binary_search(sorted.begin(), sorted.end(), l);
  });
  return collect(fm, cov, kBackground, image_id);
}

KMeansResult cluster_detailed(const FeatureBag& bag, int n_c, std::uint64_t seed) {
  if (n_c < 1) throw UsageError("n_cluster must be >= 1");
  std::vector<double> pts(bag.vectors.begin(), bag.vectors.end());
  Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(bag.class_id), "cluster");
  if (bag.size() == 0) return {};
  return kmeans(pts, bag.dim, n_c, rng);
}

std::vector<float> cluster(const FeatureBag& bag, int n_c, std::uint64_t seed) {
  if (bag.size() == 0) {
    if (n_c < 1) throw UsageError("n_cluster must be >= 1");
    return {};
  }
  return as_unit_rows(cluster_detailed(bag, n_c, seed));
}

std::size_t CrfaStore::rows(ClassId c) const {
  auto it = classes.find(c);
  return it == classes.end() || dim == 0 ? 0 : it->second.rows.size() / dim;
}

std::size_t CrfaStore::pool_size(ClassId c) const {
  auto it = classes.find(c);
  return it == classes.end() || dim == 0 ? 0 : it->second.pool.size() / dim;
}

std::span<const float> CrfaStore::row(ClassId c, std::size_t i) const {
  const auto& r = classes.at(c).rows;
  return {r.data() + i * dim, static_cast<std::size_t>(dim)};
}

std::vector<ClassId> CrfaStore::class_ids() const {
  std::vector<ClassId> out;
  for (const auto& [c, e] : classes) {
    if (c != kBackground) out.push_back(c);
  }
  return out;
}

CrfaStore build_store(std::span<const AnnotatedImage> supports, std::span<const ClassId> class_ids,
                      int n_c, const FeatureExtractor& extractor, std::uint64_t seed,
                      std::size_t budget) {
  if (n_c < 1) throw UsageError("n_cluster must be >= 1");
  if (budget < 1) throw UsageError("CRFA budget must be >= 1");
  for (ClassId c : class_ids) {
    if (c == kBackground) throw DataError("class id 0 is reserved for background");
    const bool seen = std::any_of(supports.begin(), supports.end(),
                                  [c](const AnnotatedImage& a) { return a.has_class(c); });
    if (!seen) throw DataError("class " + std::to_string(c) + " appears in no support mask");
  }
  CrfaStore store;
  store.n_c = n_c;
  store.budget = budget;
  store.seed = seed;
  store.extractor = extractor.spec().name;
  for (ClassId c : class_ids) store.classes[c];
  store.classes[kBackground];
  std::vector<ClassId> touched;
  for (const auto& s : supports) add_image(store, s, extractor, class_ids, touched);
  for (auto& [c, e] : store.classes) recluster(store, c);
  return store;
}

CrfaStore append_support(const CrfaStore& store, const AnnotatedImage& image,
                         const FeatureExtractor& extractor, std::size_t budget) {
  if (extractor.spec().name != store.extractor)
    throw DataError("extractor mismatch: store was built with '" + store.extractor + "', got '" +
                    extractor.spec().name + "'");
  CrfaStore out = store;
  out.budget = budget;
  const auto ids = store.class_ids();
  std::vector<ClassId> touched;
  add_image(out, image, extractor, ids, touched);
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  for (ClassId c : touched) recluster(out, c);
  return out;
}

void save_store(const std::filesystem::path& path, const CrfaStore& store) {
  Container c;
  c.magic = "SACS";
  c.version = 1;
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& [id, e] : store.classes) {
    classes.push_back({{"class_id", id}, {"rows", store.rows(id)}, {"pool", store.pool_size(id)}});
    c.payload.insert(c.payload.end(), e.rows.begin(), e.rows.end());
    c.payload.insert(c.payload.end(), e.pool.begin(), e.pool.end());
  }
  c.header = {{"classes", classes},
              {"n_c", store.n_c},
              {"seed", store.seed},
              {"extractor", store.extractor},
              {"dim", store.dim},
              {"budget", store.budget},
              {"support_image_ids", store.support_image_ids},
              {"dtype", "f32le"}};
  write_file_atomic(path, encode_container(c));
}

CrfaStore load_store(const std::filesystem::path& path) {
  const Container c = decode_container(read_file_bytes(path), "SACS");
  CrfaStore s;
  try {
    const auto& h = c.header;
    s.n_c = h.at("n_c").get<int>();
    s.seed = h.at("seed").get<std::uint64_t>();
    s.extractor = h.at("extractor").get<std::string>();
    s.dim = h.at("dim").get<int>();
    s.budget = h.at("budget").get<std::size_t>();
    s.support_image_ids = h.at("support_image_ids").get<std::vector<std::string>>();
    std::size_t offset = 0;
    for (const auto& e : h.at("classes")) {
      const ClassId id = e.at("class_id").get<ClassId>();
      const std::size_t rows = e.at("rows").get<std::size_t>() * s.dim;
      const std::size_t pool = e.at("pool").get<std::size_t>() * s.dim;
      if (offset + rows + pool > c.payload.size()) throw DataError("store payload truncated");
      auto& entry = s.classes[id];
      entry.rows.assign(c.payload.begin() + offset, c.payload.begin() + offset + rows);
      offset += rows;
      entry.pool.assign(c.payload.begin() + offset, c.payload.begin() + offset + pool);
      offset += pool;
    }
    if (offset != c.payload.size()) throw DataError("store payload has trailing data");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed store header: ") + e.what());
  }
  return s;
}

}  // namespace fss
