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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fss/backends.hpp"
#include "fss/core.hpp"
#include "fss/kmeans.hpp"

namespace fss {

/// Unit feature vectors of one class, with their origin.
struct FeatureBag {
  struct Provenance {
    std::string image_id;
    int row = 0;
    int col = 0;
  };

  ClassId class_id = 0;
  int dim = 0;
  std::vector<float> vectors;  // size() x dim
  std::vector<Provenance> provenance;

  std::size_t size() const { return dim ? vectors.size() / dim : 0; }
  std::span<const float> vector(std::size_t i) const {
    return {vectors.data() + i * dim, static_cast<std::size_t>(dim)};
  }
};

/// Patch membership threshold: a patch belongs to a class when at least this
/// fraction of its unpadded area carries the class label.
inline constexpr double kPatchCoverage = 0.5;

/// Features of the patches that class `class_id` covers by >= 50% of their
/// unpadded area. `fm` must be normalized and derived from the mask's image.
FeatureBag stratify(const FeatureMap& fm, const MultiClassMask& mask, ClassId class_id,
                    const std::string& image_id = {});

/// Features of patches covered >= 50% by labels outside `episode_classes`
/// (background and non-episode classes).
FeatureBag stratify_background(const FeatureMap& fm, const MultiClassMask& mask,
                               std::span<const ClassId> episode_classes,
                               const std::string& image_id = {});

/// Area fraction of each patch carrying `class_id`; -1 for fully padded patches.
std::vector<double> patch_coverage(const SourceGeometry& g, int grid_w, int grid_h,
                                   const MultiClassMask& mask, ClassId class_id);

/// k-means (k = min(n_c, |bag|)) seeded from the generator derived from
/// (seed, bag.class_id, "cluster"); rows re-normalized to unit length.
std::vector<float> cluster(const FeatureBag& bag, int n_c, std::uint64_t seed);

/// The underlying k-means run of `cluster`, before re-normalization.
KMeansResult cluster_detailed(const FeatureBag& bag, int n_c, std::uint64_t seed);

inline constexpr std::size_t kDefaultBudget = 4096;
inline constexpr std::size_t kBackgroundBudgetFactor = 4;

struct CrfaEntry {
  std::vector<float> rows;  // clustered representatives, row count x dim
  std::vector<float> pool;  // retained support vectors the rows are clustered from

  friend bool operator==(const CrfaEntry&, const CrfaEntry&) = default;
};

/// Class-representative feature arrays, one entry per class plus class 0 for
/// background. A class whose entry has no rows is absent.
struct CrfaStore {
  int dim = 0;
  int n_c = 5;
  std::size_t budget = kDefaultBudget;
  std::uint64_t seed = 0;
  std::string extractor;
  std::vector<std::string> support_image_ids;
  std::map<ClassId, CrfaEntry> classes;

  std::size_t rows(ClassId c) const;
  std::size_t pool_size(ClassId c) const;
  std::span<const float> row(ClassId c, std::size_t i) const;
  /// Episode classes (non-background), ascending.
  std::vector<ClassId> class_ids() const;

  friend bool operator==(const CrfaStore&, const CrfaStore&) = default;
};

/// Builds the store from supports in order. Per class, vectors accumulate in
/// a pool; once pool + new image would exceed `budget`, the new image's bag is
/// clustered to n_c first and the concatenation re-clustered to n_c. The
/// background pool is capped at 4 x budget by uniform subsampling.
CrfaStore build_store(std::span<const AnnotatedImage> supports, std::span<const ClassId> class_ids,
                      int n_c, const FeatureExtractor& extractor, std::uint64_t seed,
                      std::size_t budget = kDefaultBudget);

/// Adds one support image to a store under the same budget rule. Classes the
/// image lacks keep their entry unchanged.
CrfaStore append_support(const CrfaStore& store, const AnnotatedImage& image,
                         const FeatureExtractor& extractor, std::size_t budget);

/// "SACS" container: JSON header listing classes, n_c, seed, extractor; one
/// payload section per class (rows, then pool).
void save_store(const std::filesystem::path& path, const CrfaStore& store);
CrfaStore load_store(const std::filesystem::path& path);

}  // namespace fss
