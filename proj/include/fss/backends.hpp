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

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fss/core.hpp"

namespace fss {

struct FeatureExtractorSpec {
  std::string name;
  std::string version = "1";
  int input_resolution = 518;
  int patch_size = 14;
  int dim = 64;

  int grid() const { return input_resolution / patch_size; }
};

/// Patch-embedding encoder. Implementations must be safe to call from
/// several threads.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual const FeatureExtractorSpec& spec() const = 0;
  virtual FeatureMap extract(const ImageRef& image) const = 0;
};

/// Validates the spec, runs the extractor and checks the result's shape.
FeatureMap extract_features(const FeatureExtractor& extractor, const ImageRef& image);

struct Point {
  int x = 0;
  int y = 0;
  friend auto operator<=>(const Point&, const Point&) = default;
};

struct GroupTag {
  enum class Kind { kCenters, kGroup, kPair };
  Kind kind = Kind::kPair;
  int index = 0;

  std::string str() const;
  friend bool operator==(const GroupTag&, const GroupTag&) = default;
};

struct PromptSet {
  ClassId class_id = 0;
  std::vector<Point> positives;
  std::vector<Point> negatives;
  GroupTag group_tag;

  friend bool operator==(const PromptSet&, const PromptSet&) = default;
};

struct MaskCandidate {
  ClassId class_id = 0;
  BoolMask mask;
  double model_score = 0.0;
  PromptSet prompt;
};

/// A segmenter bound to one image (image embedding computed once, many prompts).
class SegmenterSession {
 public:
  virtual ~SegmenterSession() = default;
  virtual std::vector<MaskCandidate> segment(const PromptSet& prompts) const = 0;
};

/// Promptable mask generator. Implementations must be safe to call from
/// several threads.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::string name() const = 0;
  virtual std::unique_ptr<SegmenterSession> open(const ImageRef& image) const = 0;
};

/// Checks prompt preconditions against the session's image, then segments.
std::vector<MaskCandidate> segment_with_prompts(const SegmenterSession& session, int image_w,
                                                int image_h, const PromptSet& prompts);
std::vector<MaskCandidate> segment_with_prompts(const Segmenter& segmenter, const ImageRef& image,
                                                const PromptSet& prompts);

/// Mock encoder over synthetic solid-color fixtures. Each patch takes the
/// color with the largest area under it (the normalized sum of codebook
/// vectors when several colors tie); the feature is that vector rotated by a deterministic per-patch angle <= max_jitter, scaled by
/// `magnitude`. Codebook vectors are hash-seeded, optionally blended toward a
/// shared direction (common_weight) to reduce inter-color separation.
/// Fully padded patches get the zero vector.
struct MockFeatureParams {
  std::uint64_t codebook_seed = 0x5eedc0deULL;
  double max_jitter = 0.05;
  double common_weight = 0.0;
  double magnitude = 2.0;
};

class MockFeatureExtractor final : public FeatureExtractor {
 public:
  MockFeatureExtractor(FeatureExtractorSpec spec, MockFeatureParams params);

  const FeatureExtractorSpec& spec() const override { return spec_; }
  FeatureMap extract(const ImageRef& image) const override;

  /// Unit codebook vector for a packed 0xRRGGBB color.
  std::vector<float> codebook_vector(std::uint32_t color) const;
  const MockFeatureParams& params() const { return params_; }

 private:
  FeatureExtractorSpec spec_;
  MockFeatureParams params_;
};

/// Colors with the largest area-weighted coverage of a patch (several when
/// tied within 1e-9 of the patch area), ascending. Empty for padded patches.
std::vector<std::uint32_t> dominant_colors(const Rgb8Image& image, const SourceGeometry& g,
                                           int grid_w, int grid_h, int col, int row);

/// Smallest of dominant_colors, or nullopt for fully padded patches.
std::optional<std::uint32_t> dominant_color(const Rgb8Image& image, const SourceGeometry& g,
                                            int grid_w, int grid_h, int col, int row);

/// Mock segmenter: 4-connected components of identical color. A mask is the
/// union of components holding positives minus those holding negatives;
/// a component holding both a positive and a negative yields an empty mask
/// with score 0. Non-empty masks score 1.
class MockSegmenter final : public Segmenter {
 public:
  std::string name() const override { return "mock"; }
  std::unique_ptr<SegmenterSession> open(const ImageRef& image) const override;
};

/// 4-connected components of identical color; labels are 0-based in scan order.
Grid2D<std::int32_t> color_components(const Rgb8Image& image);

using ExtractorFactory = std::function<std::shared_ptr<const FeatureExtractor>()>;
using SegmenterFactory = std::function<std::shared_ptr<const Segmenter>()>;

/// Built-in names: "mock" (518 px, patch 14) and "mock-sam" (1024 px, patch 16,
/// weaker separation) for features; "mock" for the segmenter. Other names
/// resolve through adapters registered at startup; unknown names throw
/// BackendError.
std::shared_ptr<const FeatureExtractor> make_feature_extractor(std::string_view name);
std::shared_ptr<const Segmenter> make_segmenter(std::string_view name);
void register_feature_extractor(std::string name, ExtractorFactory factory);
void register_segmenter(std::string name, SegmenterFactory factory);

struct CacheKey {
  std::string extractor_name;
  std::string extractor_version;
  std::string image_id;
  std::uint64_t content_hash = 0;
};

struct CacheEntryInfo {
  std::filesystem::path path;
  std::string extractor_name;
  std::string image_id;
  std::uintmax_t bytes = 0;
};

/// On-disk embedding cache, <root>/<extractor_name>/<image_id>.sacf.
///
/// File layout: "SACF" | u32 LE format version | u32 LE header length |
/// UTF-8 JSON header | row-major float32 LE payload. Writers go through a
/// temporary file and rename, so readers never observe partial files. A file
/// that fails to parse is renamed to *.corrupt and reported as a miss.
class FeatureCache {
 public:
  explicit FeatureCache(std::filesystem::path root) : root_(std::move(root)) {}

  std::optional<FeatureMap> get(const CacheKey& key) const;
  void put(const CacheKey& key, const FeatureMap& fm) const;
  std::filesystem::path path_for(const CacheKey& key) const;
  std::vector<CacheEntryInfo> list() const;
  std::size_t clear() const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

/// Extractor decorator that consults a FeatureCache first.
class CachingFeatureExtractor final : public FeatureExtractor {
 public:
  CachingFeatureExtractor(std::shared_ptr<const FeatureExtractor> inner, FeatureCache cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}
  const FeatureExtractorSpec& spec() const override { return inner_->spec(); }
  FeatureMap extract(const ImageRef& image) const override;

 private:
  std::shared_ptr<const FeatureExtractor> inner_;
  FeatureCache cache_;
};

}  // namespace fss
