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

#include "fss/prompting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "fss/kmeans.hpp"

namespace fss {
namespace {

constexpr int kSpatialRestarts = 10;

std::vector<std::size_t> true_indices(const BoolMask& m) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) idx.push_back(i);
  return idx;
}

Point point_at(const BoolMask& m, std::size_t i) {
  return {static_cast<int>(i % m.width()), static_cast<int>(i / m.width())};
}

// Nearest set pixel to (x, y) within `radius` (row-major first on ties).
std::optional<Point> nearest_in(const BoolMask& m, double x, double y, double radius) {
  const int x0 = std::max(0, static_cast<int>(std::floor(x - radius)));
  const int x1 = std::min(m.width() - 1, static_cast<int>(std::ceil(x + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(y - radius)));
  const int y1 = std::min(m.height() - 1, static_cast<int>(std::ceil(y + radius)));
  std::optional<Point> best;
  double bd = radius * radius;
  for (int py = y0; py <= y1; ++py) {
    for (int px = x0; px <= x1; ++px) {
      if (!m(px, py)) continue;
      const double d = (px - x) * (px - x) + (py - y) * (py - y);
      if (d < bd || (d == bd && !best)) {
        bd = d;
        best = Point{px, py};
      }
    }
  }
  return best;
}

void add_negative(PromptSet& s, const std::vector<std::size_t>& bg, const BoolMask& bgrp, Rng& rng) {
  if (bg.empty()) return;
  s.negatives.push_back(point_at(bgrp, bg[rng.uniform_index(bg.size())]));
}

}  // namespace

std::size_t PromptPlan::total_sets() const {
  std::size_t n = 0;
  for (const auto& [c, v] : sets) n += v.size();
  return n;
}

std::vector<Point> grid_positives(const BoolMask& crp, const RealGrid& best_sim, int spacing,
                                  int max_positives, Rng& rng) {
  if (spacing < 1) throw UsageError("grid spacing must be >= 1");
  std::vector<Point> pts;
  if (count_true(crp) == 0) return pts;
  const double radius = spacing / 2.0;
  for (int y = spacing / 2; y < crp.height(); y += spacing) {
    for (int x = spacing / 2; x < crp.width(); x += spacing) {
      std::optional<Point> p;
      if (crp(x, y)) {
        p = Point{x, y};
      } else {
        p = nearest_in(crp, x, y, radius);
      }
      if (p && std::find(pts.begin(), pts.end(), *p) == pts.end()) pts.push_back(*p);
    }
  }
  if (pts.empty()) {
    std::size_t best = 0;
    double bv = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < crp.size(); ++i) {
      if (crp[i] && best_sim[i] > bv) {
        bv = best_sim[i];
        best = i;
      }
    }
    pts.push_back(point_at(crp, best));
  }
  if (max_positives >= 0 && pts.size() > static_cast<std::size_t>(max_positives)) {
    auto keep = rng.sample_without_replacement(pts.size(), max_positives);
    std::sort(keep.begin(), keep.end());
    std::vector<Point> sub;
    for (auto i : keep) sub.push_back(pts[i]);
    pts = std::move(sub);
  }
  return pts;
}

std::vector<PromptSet> pair_prompts(ClassId class_id, const std::vector<Point>& positives,
                                    const BoolMask& bgrp, int pairs_per_positive, Rng& rng) {
  const auto bg = true_indices(bgrp);
  std::vector<PromptSet> out;
  int index = 0;
  for (const auto& p : positives) {
    for (int r = 0; r < pairs_per_positive; ++r) {
      PromptSet s;
      s.class_id = class_id;
      s.positives = {p};
      s.group_tag = {GroupTag::Kind::kPair, index++};
      add_negative(s, bg, bgrp, rng);
      out.push_back(std::move(s));
    }
  }
  return out;
}

SpatialGroups spatial_groups(ClassId class_id, const std::vector<Point>& positives,
                             const BoolMask& crp, const BoolMask& bgrp, int n_spatial, Rng& rng) {
  if (positives.empty()) throw DataError("spatial_groups: no positive points");
  if (n_spatial < 1) throw UsageError("n_spatial must be >= 1");
  std::vector<double> xy;
  for (const auto& p : positives) {
    xy.push_back(p.x);
    xy.push_back(p.y);
  }
  const int k = static_cast<int>(std::min<std::size_t>(n_spatial, positives.size()));
  KMeansResult best;
  for (int r = 0; r < kSpatialRestarts; ++r) {
    KMeansResult km = kmeans(xy, 2, k, rng);
    if (r == 0 || km.objective.back() < best.objective.back()) best = std::move(km);
  }

  const auto bg = true_indices(bgrp);
  const double far = std::hypot(crp.width(), crp.height()) + 1.0;
  SpatialGroups out;
  out.centers.class_id = class_id;
  out.centers.group_tag = {GroupTag::Kind::kCenters, 0};
  for (int j = 0; j < best.k; ++j) {
    const double cx = best.centroids[2 * j], cy = best.centroids[2 * j + 1];
    auto snapped = nearest_in(crp, cx, cy, far);
    out.centers.positives.push_back(snapped.value_or(positives.front()));
  }
  add_negative(out.centers, bg, bgrp, rng);
  for (int j = 0; j < best.k; ++j) {
    PromptSet g;
    g.class_id = class_id;
    g.group_tag = {GroupTag::Kind::kGroup, j};
    for (std::size_t i = 0; i < positives.size(); ++i)
      if (best.assignment[i] == j) g.positives.push_back(positives[i]);
    if (g.positives.empty()) continue;
    add_negative(g, bg, bgrp, rng);
    out.groups.push_back(std::move(g));
  }
  return out;
}

PromptPlan build_plan(const RegionProposalSet& proposals, const PromptParams& params,
                      std::uint64_t seed, bool use_bgrp) {
  PromptPlan plan;
  plan.params = params;
  plan.seed = seed;
  for (const auto& p : proposals.classes) {
    if (count_true(p.crp) == 0) continue;
    const BoolMask none(p.crp.width(), p.crp.height(), 0);
    const BoolMask& bgrp = use_bgrp ? p.bgrp : none;
    const auto cid = static_cast<std::uint64_t>(p.class_id);
    Rng grid_rng = Rng::derive(seed, cid, "prompt-grid");
    Rng pair_rng = Rng::derive(seed, cid, "prompt-pairs");
    Rng spatial_rng = Rng::derive(seed, cid, "prompt-spatial");
    const auto pos = grid_positives(p.crp, p.best_sim, params.grid_spacing, params.max_positives, grid_rng);
    auto& sets = plan.sets[p.class_id];
    sets = pair_prompts(p.class_id, pos, bgrp, params.pairs_per_positive, pair_rng);
    auto groups = spatial_groups(p.class_id, pos, p.crp, bgrp, params.n_spatial, spatial_rng);
    sets.push_back(std::move(groups.centers));
    for (auto& g : groups.groups) sets.push_back(std::move(g));
  }
  return plan;
}

nlohmann::json plan_to_json(const PromptPlan& plan) {
  auto pts = [](const std::vector<Point>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : v) a.push_back({p.x, p.y});
    return a;
  };
  nlohmann::json sets = nlohmann::json::array();
  for (const auto& [c, v] : plan.sets) {
    for (const auto& s : v) {
      sets.push_back({{"class_id", c},
                      {"tag", s.group_tag.str()},
                      {"positives", pts(s.positives)},
                      {"negatives", pts(s.negatives)}});
    }
  }
  return {{"seed", plan.seed},
          {"params",
           {{"grid_spacing", plan.params.grid_spacing},
            {"max_positives", plan.params.max_positives},
            {"pairs_per_positive", plan.params.pairs_per_positive},
            {"n_spatial", plan.params.n_spatial}}},
          {"sets", sets}};
}

}  // namespace fss
