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
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "fss/backends.hpp"
#include "fss/proposal.hpp"
#include "fss/rng.hpp"

namespace fss {

struct PromptParams {
  int grid_spacing = 16;  // pixels at query resolution
  int max_positives = 32;
  int pairs_per_positive = 1;
  int n_spatial = 8;
};

struct PromptPlan {
  PromptParams params;
  std::uint64_t seed = 0;
  std::map<ClassId, std::vector<PromptSet>> sets;

  std::size_t total_sets() const;
};

/// Lattice points at stride `spacing` (offset spacing/2). A point outside the
/// CRP snaps to the nearest CRP pixel within Euclidean distance spacing/2, or
/// is dropped. Duplicates are removed keeping first occurrence. If nothing
/// survives on a non-empty CRP, the CRP pixel with the highest `best_sim` is
/// used. More than `max_positives` points are subsampled uniformly with `rng`.
std::vector<Point> grid_positives(const BoolMask& crp, const RealGrid& best_sim, int spacing,
                                  int max_positives, Rng& rng);

/// One set per (positive, repetition), each with that positive and a uniform
/// random BGRP pixel (no negative when the BGRP is empty).
std::vector<PromptSet> pair_prompts(ClassId class_id, const std::vector<Point>& positives,
                                    const BoolMask& bgrp, int pairs_per_positive, Rng& rng);

struct SpatialGroups {
  PromptSet centers;
  std::vector<PromptSet> groups;
};

/// k-means on point coordinates (k = min(n_spatial, |positives|), best of
/// several k-means++ restarts). `centers` holds the cluster centers snapped
/// to the nearest CRP pixel; `groups` holds each cluster's member points.
/// Every set gets one random BGRP negative when the BGRP is non-empty.
SpatialGroups spatial_groups(ClassId class_id, const std::vector<Point>& positives,
                             const BoolMask& crp, const BoolMask& bgrp, int n_spatial, Rng& rng);

/// Per class with a non-empty CRP: pair sets, then the centers set, then the
/// group sets. Generators derive from (seed, class id, stage). With
/// `use_bgrp` false no negatives are drawn.
PromptPlan build_plan(const RegionProposalSet& proposals, const PromptParams& params,
                      std::uint64_t seed, bool use_bgrp = true);

nlohmann::json plan_to_json(const PromptPlan& plan);

}  // namespace fss
