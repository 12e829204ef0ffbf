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

#include <gtest/gtest.h>

#include <set>

#include "fss/prompting.hpp"
#include "test_util.hpp"

namespace fss {
namespace {

BoolMask rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
  BoolMask m(w, h, 0);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m(x, y) = 1;
  return m;
}

TEST(GridPositives, FullImageLattice) {
  const BoolMask crp(64, 64, 1);
  Rng rng(1);
  const auto pts = grid_positives(crp, RealGrid(64, 64, 0.0), 16, 100, rng);
  ASSERT_EQ(pts.size(), 16u);
  std::set<Point> want;
  for (int y = 8; y < 64; y += 16)
    for (int x = 8; x < 64; x += 16) want.insert({x, y});
  EXPECT_EQ(std::set<Point>(pts.begin(), pts.end()), want);
}

TEST(GridPositives, EmptyCrp) {
  Rng rng(1);
  EXPECT_TRUE(grid_positives(BoolMask(32, 32, 0), RealGrid(32, 32), 16, 32, rng).empty());
  EXPECT_THROW(grid_positives(BoolMask(4, 4, 1), RealGrid(4, 4), 0, 32, rng), UsageError);
}

TEST(GridPositives, FallbackPicksMaxSimilarity) {
  // three pixels around (0, 31), more than spacing/2 from every lattice point
  BoolMask crp(64, 64, 0);
  RealGrid sim(64, 64, 0.0);
  crp(0, 31) = crp(0, 32) = crp(1, 32) = 1;
  sim(0, 31) = 0.4;
  sim(0, 32) = 0.9;
  sim(1, 32) = 0.7;
  sim(20, 20) = 5.0;  // outside the CRP, must be ignored
  Rng rng(1);
  const auto pts = grid_positives(crp, sim, 16, 32, rng);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0], (Point{0, 32}));
}

TEST(GridPositives, SnapsWithinHalfSpacing) {
  // CRP column x = 13..14 misses lattice x = 8 and 24; distance 5 <= 8 snaps
  const auto crp = rect_mask(32, 32, 13, 0, 15, 32);
  Rng rng(1);
  const auto pts = grid_positives(crp, RealGrid(32, 32), 16, 32, rng);
  ASSERT_EQ(pts.size(), 2u);
  for (const auto& p : pts) {
    EXPECT_EQ(p.x, 13);
    EXPECT_TRUE(crp(p.x, p.y));
  }
}

TEST(GridPositives, SubsampleIsBoundedAndDeterministic) {
  const BoolMask crp(128, 128, 1);
  Rng a(5), b(5);
  const auto pa = grid_positives(crp, RealGrid(128, 128), 8, 10, a);
  const auto pb = grid_positives(crp, RealGrid(128, 128), 8, 10, b);
  EXPECT_EQ(pa.size(), 10u);
  EXPECT_EQ(pa, pb);
  EXPECT_EQ(std::set<Point>(pa.begin(), pa.end()).size(), 10u);
}

TEST(PairPrompts, CardinalityAndNegatives) {
  const std::vector<Point> pos = {{1, 1}, {5, 5}, {9, 9}};
  const auto bg = rect_mask(20, 20, 15, 15, 20, 20);
  Rng r1(3), r2(3);
  const auto sets = pair_prompts(4, pos, bg, 1, r1);
  ASSERT_EQ(sets.size(), 3u);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    EXPECT_EQ(sets[i].class_id, 4);
    EXPECT_EQ(sets[i].positives, std::vector<Point>{pos[i]});
    ASSERT_EQ(sets[i].negatives.size(), 1u);
    EXPECT_TRUE(bg(sets[i].negatives[0].x, sets[i].negatives[0].y));
    EXPECT_EQ(sets[i].group_tag.str(), "pair(" + std::to_string(i) + ")");
  }
  EXPECT_EQ(pair_prompts(4, pos, bg, 1, r2), sets);
  Rng r3(3);
  const auto none = pair_prompts(4, pos, BoolMask(20, 20, 0), 1, r3);
  ASSERT_EQ(none.size(), 3u);
  for (const auto& s : none) EXPECT_TRUE(s.negatives.empty());
  Rng r4(3);
  EXPECT_EQ(pair_prompts(4, pos, bg, 3, r4).size(), 9u);
}

TEST(SpatialGroups, SquareCorners) {
  const auto crp = rect_mask(11, 11, 0, 0, 11, 11);
  const std::vector<Point> pos = {{0, 0}, {10, 0}, {0, 10}, {10, 10}};
  Rng rng(8);
  const auto g = spatial_groups(2, pos, crp, BoolMask(11, 11, 0), 2, rng);
  ASSERT_EQ(g.groups.size(), 2u);
  for (const auto& s : g.groups) EXPECT_EQ(s.positives.size(), 2u);
  const std::set<Point> centers(g.centers.positives.begin(), g.centers.positives.end());
  const std::set<Point> lr = {{0, 5}, {10, 5}}, tb = {{5, 0}, {5, 10}};
  EXPECT_TRUE(centers == lr || centers == tb);
  EXPECT_EQ(g.centers.group_tag.str(), "centers");
}

TEST(SpatialGroups, CentersSnapIntoCrp) {
  // ring-shaped CRP: the centroid of its points is the empty middle
  BoolMask crp = rect_mask(21, 21, 0, 0, 21, 21);
  for (int y = 3; y < 18; ++y)
    for (int x = 3; x < 18; ++x) crp(x, y) = 0;
  const std::vector<Point> pos = {{1, 10}, {19, 10}, {10, 1}, {10, 19}};
  Rng rng(1);
  const auto g = spatial_groups(1, pos, crp, BoolMask(21, 21, 0), 1, rng);
  ASSERT_EQ(g.centers.positives.size(), 1u);
  const auto c = g.centers.positives[0];
  EXPECT_TRUE(crp(c.x, c.y));
}

TEST(SpatialGroups, SinglePointClampsK) {
  const auto crp = rect_mask(10, 10, 2, 2, 6, 6);
  Rng rng(1);
  const auto g = spatial_groups(1, {{3, 3}}, crp, rect_mask(10, 10, 8, 8, 10, 10), 8, rng);
  EXPECT_EQ(g.centers.positives, (std::vector<Point>{{3, 3}}));
  ASSERT_EQ(g.groups.size(), 1u);
  EXPECT_EQ(g.centers.negatives.size(), 1u);
  EXPECT_THROW(spatial_groups(1, {}, crp, crp, 8, rng), DataError);
}

TEST(SpatialGroups, TwoBlobsSeparate) {
  const BoolMask crp(100, 50, 1);
  std::vector<Point> pos;
  Rng gen(4);
  for (int i = 0; i < 40; ++i) {
    const int base = i < 20 ? 5 : 75;
    pos.push_back({base + static_cast<int>(gen.uniform_index(20)), 10 + static_cast<int>(gen.uniform_index(30))});
  }
  Rng rng(2);
  const auto g = spatial_groups(1, pos, crp, BoolMask(100, 50, 0), 2, rng);
  ASSERT_EQ(g.groups.size(), 2u);
  for (const auto& s : g.groups) {
    EXPECT_EQ(s.positives.size(), 20u);
    const bool left = s.positives[0].x < 50;
    for (const auto& p : s.positives) EXPECT_EQ(p.x < 50, left);
  }
}

// Two-class proposal fixture built directly.
RegionProposalSet fixture_proposals() {
  RegionProposalSet set;
  set.width = 80;
  set.height = 60;
  set.background = BoolMask(80, 60, 0);
  const auto a = rect_mask(80, 60, 5, 5, 35, 40);
  const auto b = rect_mask(80, 60, 45, 20, 75, 55);
  for (std::size_t i = 0; i < a.size(); ++i) set.background[i] = !a[i] && !b[i];
  for (ClassId c : {1, 2}) {
    ClassProposal p;
    p.class_id = c;
    p.crp = c == 1 ? a : b;
    p.bgrp = BoolMask(80, 60, 0);
    for (std::size_t i = 0; i < a.size(); ++i) p.bgrp[i] = !p.crp[i];
    p.best_sim = RealGrid(80, 60, 0.5);
    set.classes.push_back(p);
  }
  ClassProposal empty;
  empty.class_id = 3;
  empty.crp = BoolMask(80, 60, 0);
  empty.bgrp = BoolMask(80, 60, 1);
  empty.best_sim = RealGrid(80, 60, -1.0);
  set.classes.push_back(empty);
  return set;
}

TEST(BuildPlan, ContainmentScannerAndBounds) {
  const auto set = fixture_proposals();
  PromptParams params;
  params.grid_spacing = 6;
  params.max_positives = 12;
  params.n_spatial = 4;
  const auto plan = build_plan(set, params, 77);
  ASSERT_EQ(plan.sets.size(), 2u);
  EXPECT_FALSE(plan.sets.count(3));
  for (const auto& [c, sets] : plan.sets) {
    const auto& p = *set.find(c);
    EXPECT_LE(sets.size(), static_cast<std::size_t>(params.max_positives * params.pairs_per_positive + 1 +
                                                    params.n_spatial));
    EXPECT_EQ(sets.front().group_tag.str(), "pair(0)");
    for (const auto& s : sets) {
      EXPECT_EQ(s.class_id, c);
      EXPECT_FALSE(s.positives.empty());
      for (const auto& q : s.positives) EXPECT_TRUE(p.crp(q.x, q.y)) << c;
      EXPECT_EQ(s.negatives.size(), 1u);
      for (const auto& q : s.negatives) EXPECT_TRUE(p.bgrp(q.x, q.y)) << c;
    }
  }
  EXPECT_EQ(plan_to_json(plan).dump(), plan_to_json(build_plan(set, params, 77)).dump());
  EXPECT_NE(plan_to_json(plan).dump(), plan_to_json(build_plan(set, params, 78)).dump());
}

TEST(BuildPlan, WithoutBgrpNoNegatives) {
  const auto plan = build_plan(fixture_proposals(), PromptParams{}, 1, false);
  for (const auto& [c, sets] : plan.sets)
    for (const auto& s : sets) EXPECT_TRUE(s.negatives.empty());
}

TEST(BuildPlan, EmptyProposalSet) {
  EXPECT_EQ(build_plan(RegionProposalSet{}, PromptParams{}, 1).total_sets(), 0u);
}

TEST(BuildPlan, ClassStreamsAreIndependent) {
  // dropping class 2 must not change class 1's prompts
  auto set = fixture_proposals();
  const auto full = build_plan(set, PromptParams{}, 9);
  set.classes.erase(set.classes.begin() + 1);
  const auto one = build_plan(set, PromptParams{}, 9);
  EXPECT_EQ(full.sets.at(1), one.sets.at(1));
}

}  // namespace
}  // namespace fss
