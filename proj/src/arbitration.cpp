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

#include "fss/arbitration.hpp"

#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "fss/image_io.hpp"

namespace fss {

std::vector<MaskCandidate> collect_candidates(const PromptPlan& plan, const ImageRef& query,
                                              const Segmenter& segmenter) {
  std::vector<MaskCandidate> out;
  if (plan.total_sets() == 0) return out;
  const auto session = segmenter.open(query);
  for (const auto& [c, sets] : plan.sets) {
    for (const auto& s : sets) {
      try {
        for (auto& m : segment_with_prompts(*session, query.width, query.height, s)) {
          m.class_id = s.class_id;
          m.prompt = s;
          out.push_back(std::move(m));
        }
      } catch (const std::exception& e) {
        spdlog::warn("prompt set {} of class {} on {} skipped: {}", s.group_tag.str(), c, query.id,
                     e.what());
      }
    }
  }
  return out;
}

double mean_over(const RealGrid& sim, const BoolMask& mask) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      sum += sim[i];
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

std::vector<MaskCandidate> inter_class_filter(const std::vector<MaskCandidate>& candidates,
                                              const RegionProposalSet& proposals,
                                              const FilterParams& params) {
  std::vector<MaskCandidate> out;
  for (const auto& m : candidates) {
    const std::size_t area = count_true(m.mask);
    if (area == 0) continue;
    if (!params.switches.inter_class) {
      out.push_back(m);
      continue;
    }
    const ClassProposal* own = proposals.find(m.class_id);
    if (!own || count_true(own->crp) == 0) continue;
    if (!m.mask.same_shape(own->crp)) throw DataError("candidate mask does not match the proposal size");

    bool drop = false;
    for (const auto& other : proposals.classes) {
      if (other.class_id == m.class_id) continue;
      std::size_t inter = 0;
      for (std::size_t i = 0; i < m.mask.size(); ++i) inter += m.mask[i] && other.crp[i];
      if (static_cast<double>(inter) / static_cast<double>(area) > params.overlap_threshold) {
        drop = true;
        break;
      }
    }
    if (drop || mean_over(own->best_sim, m.mask) < params.sim_threshold) continue;
    out.push_back(m);
  }
  return out;
}

LabelMap assemble_label_map(const std::vector<MaskCandidate>& candidates,
                            const RegionProposalSet& proposals, int image_w, int image_h) {
  LabelMap out(image_w, image_h, kBackground);
  RealGrid score(image_w, image_h, -std::numeric_limits<double>::infinity());
  for (const auto& m : candidates) {
    if (m.mask.width() != image_w || m.mask.height() != image_h)
      throw DataError("candidate mask does not match the label map size");
    const ClassProposal* p = proposals.find(m.class_id);
    const double s = p ? mean_over(p->best_sim, m.mask) : 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!m.mask[i]) continue;
      if (out[i] == kBackground || s > score[i] || (s == score[i] && m.class_id < out[i])) {
        out[i] = m.class_id;
        score[i] = s;
      }
    }
  }
  return out;
}

Rgb8Image render_overlay(const Rgb8Image& image, const LabelMap& labels, double alpha) {
  if (image.width != labels.width() || image.height != labels.height())
    throw DataError("overlay: image and label map sizes differ");
  Rgb8Image out = image;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const ClassId c = labels(x, y);
      if (c == kBackground) continue;
      const auto col = class_color(c);
      const std::size_t i = (static_cast<std::size_t>(y) * image.width + x) * 3;
      for (int k = 0; k < 3; ++k)
        out.pixels[i + k] = static_cast<std::uint8_t>(
            std::lround((1.0 - alpha) * image.pixels[i + k] + alpha * col[k]));
    }
  }
  return out;
}

}  // namespace fss
