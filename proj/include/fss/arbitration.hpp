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

#include <vector>

#include "fss/backends.hpp"
#include "fss/prompting.hpp"
#include "fss/proposal.hpp"

namespace fss {

/// Pipeline component switches, used for ablations.
struct Switches {
  bool intra_class = true;
  bool inter_class = true;
  bool bgrp = true;
  bool backbone_swap = false;  // use the alternate feature backend
};

struct FilterParams {
  double overlap_threshold = 0.3;
  double sim_threshold = 0.55;
  Switches switches;
};

/// Runs every prompt set of the plan once on a single segmenter session.
/// A set whose call throws is skipped with a warning.
std::vector<MaskCandidate> collect_candidates(const PromptPlan& plan, const ImageRef& query,
                                              const Segmenter& segmenter);

/// Mean of `sim` over the set pixels of `mask`; 0 for an empty mask.
double mean_over(const RealGrid& sim, const BoolMask& mask);

/// Empty masks are always dropped. With inter-class filtering on, a candidate
/// of class c is dropped when its class CRP is empty, when more than
/// overlap_threshold of its area lies in another class's CRP, or when its
/// mean best-similarity for c is below sim_threshold. Order is preserved.
std::vector<MaskCandidate> inter_class_filter(const std::vector<MaskCandidate>& candidates,
                                              const RegionProposalSet& proposals,
                                              const FilterParams& params);

/// Exclusive label map. A pixel covered by masks of several classes goes to
/// the class whose covering mask has the highest mean best-similarity; ties
/// go to the lower class id. Uncovered pixels are 0.
LabelMap assemble_label_map(const std::vector<MaskCandidate>& candidates,
                            const RegionProposalSet& proposals, int image_w, int image_h);

/// Blends class colors over the image (alpha in [0, 1]); background stays as is.
Rgb8Image render_overlay(const Rgb8Image& image, const LabelMap& labels, double alpha = 0.5);

}  // namespace fss
