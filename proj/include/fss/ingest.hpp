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
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fss/core.hpp"

namespace fss {

struct CategoryInfo {
  long dataset_id = 0;  // category id as written in the annotation file
  ClassId class_id = 0;  // dense id, 1-based
  std::string name;
};

/// Images with their annotations and the dense class table. Immutable once
/// built; images are kept in ascending id order.
class DatasetIndex {
 public:
  void add_image(AnnotatedImage image);
  void set_class_table(std::vector<CategoryInfo> table);

  const std::vector<AnnotatedImage>& images() const { return images_; }
  const std::vector<CategoryInfo>& class_table() const { return class_table_; }
  std::size_t num_classes() const { return class_table_.size(); }

  const AnnotatedImage& image(std::string_view id) const;
  bool contains(std::string_view id) const;

 private:
  const AnnotatedImage* find(std::string_view id) const;

  std::vector<AnnotatedImage> images_;
  std::vector<CategoryInfo> class_table_;
};

/// Parses a COCO-format annotation file. Image pixels are resolved lazily
/// under `image_root`; masks are decoded on demand. The result does not depend
/// on the order of records in the file.
DatasetIndex load_dataset(const std::filesystem::path& annotation_path,
                          const std::filesystem::path& image_root);

/// Same as load_dataset, from an in-memory JSON document.
DatasetIndex parse_dataset(std::string_view json_text, const std::filesystem::path& image_root);

struct FoldSpec {
  int fold_id = 0;
  std::vector<ClassId> test_classes;  // ascending
};

inline constexpr int kNumFolds = 4;
inline constexpr std::size_t kCocoClasses = 80;

/// With exactly 80 classes, fold f holds {4k + f + 1 : k = 0..19}. Any other
/// class count is split into contiguous blocks of ceil(n / 4).
FoldSpec make_fold(const DatasetIndex& dataset, int fold_id);
FoldSpec make_fold(std::size_t num_classes, int fold_id);

/// Draws `count` N-way K-shot episodes. Episode i uses the generator derived
/// from (seed, i, "episode"):
///   1. n_way classes without replacement from the fold, sorted ascending;
///   2. per class, k_shot distinct images containing it (images may serve
///      several classes);
///   3. one query image containing at least one episode class and not among
///      the supports.
std::vector<Episode> sample_episodes(const DatasetIndex& dataset, const FoldSpec& fold, int n_way,
                                     int k_shot, std::size_t count, std::uint64_t seed);

/// Episode manifest as JSON lines: a header line, then one episode per line
/// {episode_id, class_ids, support: [[image_id, class_id]...], query_image_id, seed}.
void write_manifest(std::ostream& out, const std::vector<Episode>& episodes);
std::vector<Episode> read_manifest(std::istream& in, const DatasetIndex& dataset);

}  // namespace fss
