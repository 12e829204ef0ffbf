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

#include "fss/proposal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fss/image_io.hpp"

namespace fss {
namespace {

using u128 = unsigned __int128;

// Between-class variance up to a constant factor: num^2 / den with
// num = |n1*S0 - n0*S1| and den = n0*n1 (S = sums of bin levels).
struct Score {
  std::uint64_t num = 0;
  std::uint64_t den = 0;  // 0 means an empty side, score zero
};

// a < b, exactly. num^2 fits in 128 bits while num < 2^64; the quotient and
// remainder split keeps the cross products below 2^128 for den < 2^64.
bool score_less(const Score& a, const Score& b) {
  if (b.den == 0 || b.num == 0) return false;
  if (a.den == 0 || a.num == 0) return true;
  const u128 na = u128{a.num} * a.num, nb = u128{b.num} * b.num;
  const u128 qa = na / a.den, qb = nb / b.den;
  if (qa != qb) return qa < qb;
  const u128 ra = na % a.den, rb = nb % b.den;
  return ra * b.den < rb * a.den;
}

std::vector<bool> content_patches(const SourceGeometry& g, int grid_w, int grid_h) {
  std::vector<bool> c(static_cast<std::size_t>(grid_w) * grid_h);
  for (int row = 0; row < grid_h; ++row)
    for (int col = 0; col < grid_w; ++col)
      c[static_cast<std::size_t>(row) * grid_w + col] = !patch_rect(g, grid_w, grid_h, col, row).empty();
  return c;
}

}  // namespace

const ClassSimilarity* SimilarityStack::find(ClassId c) const {
  for (const auto& s : classes)
    if (s.class_id == c) return &s;
  return nullptr;
}

SimilarityStack similarity_stack(const FeatureMap& q, const CrfaStore& store) {
  if (!q.normalized) throw DataError("similarity_stack requires a normalized query map");
  bool any = false;
  for (const auto& [c, e] : store.classes) any = any || store.rows(c) > 0;
  if (!any) throw DataError("similarity_stack: CRFA store is empty");
  if (q.dim != store.dim) throw DataError("query feature dimension does not match the store");

  SimilarityStack s;
  s.grid_w = q.grid_w;
  s.grid_h = q.grid_h;
  s.geometry = q.source_geometry;
  std::vector<ClassId> ids = {kBackground};
  for (const auto& [c, e] : store.classes)
    if (c != kBackground) ids.push_back(c);
  for (ClassId c : ids) {
    const std::size_t n = store.rows(c);
    if (n == 0 && c != kBackground) continue;
    ClassSimilarity cs;
    cs.class_id = c;
    cs.best = RealGrid(q.grid_w, q.grid_h, n == 0 ? -1.0 : -2.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = store.row(c, i);
      RealGrid m(q.grid_w, q.grid_h);
      for (std::size_t p = 0; p < q.cells(); ++p) {
        m[p] = dot(q.cell(p), row);
        cs.best[p] = std::max(cs.best[p], m[p]);
      }
      cs.per_row.push_back(std::move(m));
    }
    s.classes.push_back(std::move(cs));
  }
  return s;
}

LabelGrid assign_classes(const SimilarityStack& stack) {
  LabelGrid out(stack.grid_w, stack.grid_h, kBackground);
  if (stack.classes.empty() || stack.classes.front().class_id != kBackground)
    throw DataError("assign_classes: similarity stack lacks the background class");
  for (std::size_t p = 0; p < out.size(); ++p) {
    double best = stack.classes.front().best[p];
    for (const auto& cs : stack.classes) {
      if (cs.best[p] > best) {
        best = cs.best[p];
        out[p] = cs.class_id;
      }
    }
  }
  return out;
}

int OtsuHistogram::bin_of(double v) const {
  if (!(hi > lo)) return 0;
  int k = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
  k = std::clamp(k, 0, bins - 1);
  while (k + 1 < bins && v >= edge(k + 1)) ++k;
  while (k > 0 && v < edge(k)) --k;
  return k;
}

OtsuResult otsu(std::span<const double> values, int bins) {
  if (values.empty()) throw DataError("otsu: empty input");
  if (bins < 2) throw DataError("otsu: need at least 2 bins");
  double lo = values[0], hi = values[0];
  for (double v : values) {
    if (!std::isfinite(v)) throw DataError("otsu: non-finite value");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo == hi) return {lo, 0, true};
  const OtsuHistogram h{lo, hi, bins};
  std::vector<std::uint64_t> count(bins, 0);
  for (double v : values) ++count[h.bin_of(v)];

  const bool exact = values.size() < (std::uint64_t{1} << 20);
  std::uint64_t n_total = values.size(), s_total = 0;
  for (int b = 0; b < bins; ++b) s_total += count[b] * static_cast<std::uint64_t>(b);

  // Candidate k splits bins [0, k) from [k, bins).
  std::uint64_t n0 = 0, s0 = 0;
  Score best;
  long double best_ld = 0.0L;
  int best_k = 0;
  for (int k = 0; k < bins; ++k) {
    if (k > 0) {
      n0 += count[k - 1];
      s0 += count[k - 1] * static_cast<std::uint64_t>(k - 1);
    }
    const std::uint64_t n1 = n_total - n0, s1 = s_total - s0;
    if (n0 == 0 || n1 == 0) continue;
    const std::int64_t diff = static_cast<std::int64_t>(n1 * s0) - static_cast<std::int64_t>(n0 * s1);
    if (exact) {
      const Score sc{static_cast<std::uint64_t>(diff < 0 ? -diff : diff), n0 * n1};
      if (score_less(best, sc)) {
        best = sc;
        best_k = k;
      }
    } else {
      const long double sc = static_cast<long double>(diff) * diff / (static_cast<long double>(n0) * n1);
      if (sc > best_ld) {
        best_ld = sc;
        best_k = k;
      }
    }
  }
  return {h.edge(best_k), best_k, false};
}

double otsu_threshold(std::span<const double> values, int bins) { return otsu(values, bins).threshold; }

const ClassProposal* RegionProposalSet::find(ClassId c) const {
  for (const auto& p : classes)
    if (p.class_id == c) return &p;
  return nullptr;
}

RegionProposalSet build_proposals(const SimilarityStack& stack, const LabelGrid& assignment,
                                  std::span<const ClassId> class_ids, int image_w, int image_h,
                                  bool intra_class_filter) {
  if (assignment.width() != stack.grid_w || assignment.height() != stack.grid_h)
    throw DataError("build_proposals: assignment does not match the similarity grid");
  std::vector<ClassId> ids(class_ids.begin(), class_ids.end());
  std::sort(ids.begin(), ids.end());
  const auto content = content_patches(stack.geometry, stack.grid_w, stack.grid_h);

  RegionProposalSet set;
  set.width = image_w;
  set.height = image_h;
  std::vector<RealGrid> level;  // interpolated CRP indicator per class
  for (ClassId c : ids) {
    ClassProposal p;
    p.class_id = c;
    p.crp_patches = BoolMask(stack.grid_w, stack.grid_h, 0);
    const ClassSimilarity* cs = stack.find(c);
    if (cs) {
      std::vector<std::size_t> cand;
      std::vector<double> values;
      for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i] == c && content[i]) {
          cand.push_back(i);
          values.push_back(cs->best[i]);
        }
      }
      double thr = -std::numeric_limits<double>::infinity();
      if (!values.empty() && intra_class_filter) {
        const OtsuResult o = otsu(values);
        if (!o.degenerate) thr = o.threshold;
        p.otsu_threshold = o.threshold;
      }
      for (std::size_t j = 0; j < cand.size(); ++j)
        if (values[j] >= thr) p.crp_patches[cand[j]] = 1;
      p.best_sim = resample_to_pixels(cs->best, stack.geometry, image_w, image_h);
    } else {
      p.best_sim = RealGrid(image_w, image_h, -1.0);
    }
    RealGrid ind(stack.grid_w, stack.grid_h);
    for (std::size_t i = 0; i < ind.size(); ++i) ind[i] = p.crp_patches[i] ? 1.0 : 0.0;
    level.push_back(resample_to_pixels(ind, stack.geometry, image_w, image_h));
    set.classes.push_back(std::move(p));
  }

  BoolMask bg_patches(stack.grid_w, stack.grid_h, 0);
  for (std::size_t i = 0; i < assignment.size(); ++i)
    bg_patches[i] = assignment[i] == kBackground && content[i];
  set.background = resample_indicator(bg_patches, stack.geometry, image_w, image_h);

  for (auto& p : set.classes) p.crp = BoolMask(image_w, image_h, 0);
  const std::size_t npix = static_cast<std::size_t>(image_w) * image_h;
  for (std::size_t px = 0; px < npix; ++px) {
    int winner = -1;
    double wv = 0.5;
    for (std::size_t j = 0; j < level.size(); ++j) {
      if (level[j][px] >= 0.5 && (winner < 0 || level[j][px] > wv)) {
        winner = static_cast<int>(j);
        wv = level[j][px];
      }
    }
    if (winner >= 0) set.classes[winner].crp[px] = 1;
  }

  for (auto& p : set.classes) {
    p.bgrp = BoolMask(image_w, image_h, 0);
    for (std::size_t px = 0; px < npix; ++px) {
      if (p.crp[px]) continue;
      bool other = set.background[px] != 0;
      for (const auto& q : set.classes) other = other || (q.class_id != p.class_id && q.crp[px]);
      p.bgrp[px] = other;
    }
  }
  return set;
}

void dump_proposals(const std::filesystem::path& dir, const RegionProposalSet& set) {
  std::filesystem::create_directories(dir);
  for (const auto& p : set.classes) {
    Grid2D<std::uint8_t> sim(set.width, set.height), crp(set.width, set.height);
    for (std::size_t i = 0; i < sim.size(); ++i) {
      sim[i] = static_cast<std::uint8_t>(std::lround(std::clamp((p.best_sim[i] + 1.0) / 2.0, 0.0, 1.0) * 255));
      crp[i] = p.crp[i] ? 255 : 0;
    }
    write_png_gray(dir / ("best_sim_" + std::to_string(p.class_id) + ".png"), sim);
    write_png_gray(dir / ("crp_" + std::to_string(p.class_id) + ".png"), crp);
  }
}

}  // namespace fss
