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

#include <filesystem>
#include <span>
#include <vector>

#include "fss/core.hpp"
#include "fss/crfa.hpp"

namespace fss {

struct ClassSimilarity {
  ClassId class_id = 0;
  std::vector<RealGrid> per_row;  // one cosine map per CRFA row
  RealGrid best;                  // element-wise max over rows
};

/// Cosine maps of a query against every CRFA row, on the patch grid.
/// Classes are ascending and always include background (class 0).
struct SimilarityStack {
  int grid_w = 0;
  int grid_h = 0;
  SourceGeometry geometry;
  std::vector<ClassSimilarity> classes;

  const ClassSimilarity* find(ClassId c) const;
};

/// Dot products of normalized query features with every store row. Classes
/// without rows are left out, except background, which falls back to a
/// constant -1 map when the store has no background rows.
SimilarityStack similarity_stack(const FeatureMap& query_fm, const CrfaStore& store);

/// Per patch, the class with the highest best-map value. Ties go to
/// background, then to the lowest class id.
LabelGrid assign_classes(const SimilarityStack& stack);

/// Histogram binning used by Otsu: `bins` equal bins over [lo, hi]. A value's
/// bin is the largest k with value >= edge(k).
struct OtsuHistogram {
  double lo = 0.0;
  double hi = 0.0;
  int bins = 256;

  double edge(int k) const { return lo + (hi - lo) * k / bins; }
  int bin_of(double v) const;
};

struct OtsuResult {
  double threshold = 0.0;
  int bin = 0;             // values with bin >= this one are kept
  bool degenerate = false; // all values equal; threshold is that value, keep all
};

/// Otsu threshold over a `bins`-bin histogram of `values`, maximizing the
/// between-class variance over the candidate edges edge(0)..edge(bins-1).
/// Class means use bin indices as levels; variances are compared exactly.
/// The first maximizer wins. Throws DataError on empty or non-finite input.
OtsuResult otsu(std::span<const double> values, int bins = 256);
double otsu_threshold(std::span<const double> values, int bins = 256);

struct ClassProposal {
  ClassId class_id = 0;
  BoolMask crp;          // pixel resolution
  BoolMask bgrp;         // pixel resolution
  RealGrid best_sim;     // resampled best map
  BoolMask crp_patches;  // patch resolution, after intra-class filtering
  double otsu_threshold = 0.0;
};

struct RegionProposalSet {
  int width = 0;
  int height = 0;
  BoolMask background;  // pixels assigned to class 0
  std::vector<ClassProposal> classes;  // ascending class id

  const ClassProposal* find(ClassId c) const;
};

/// CRPs and BGRPs for each episode class.
///
/// Candidates of class c are the unpadded patches assigned to c. With
/// intra-class filtering, only those whose best-map value reaches the Otsu
/// threshold of the candidates' values remain. The surviving indicator is
/// resampled bilinearly and cut at 0.5; a pixel reaching 0.5 for two classes
/// goes to the one with the larger interpolated value (then the lower id).
/// BGRP_c is every other class's CRP plus background-assigned pixels, minus CRP_c.
RegionProposalSet build_proposals(const SimilarityStack& stack, const LabelGrid& assignment,
                                  std::span<const ClassId> class_ids, int image_w, int image_h,
                                  bool intra_class_filter = true);

/// Writes best_sim_<c>.png (8-bit, cosine mapped from [-1, 1]) and crp_<c>.png
/// (binary) per class.
void dump_proposals(const std::filesystem::path& dir, const RegionProposalSet& set);

}  // namespace fss
