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

#include <cmath>

#include "fss/evalmetrics.hpp"
#include "fss/ingest.hpp"
#include "fss/synthetic.hpp"
#include "test_util.hpp"

namespace fss {
namespace {

// Brute-force confusion matrix over labels 0..L-1.
std::map<ClassId, ClassCounts> confusion_oracle(const LabelMap& pred, const MultiClassMask& truth,
                                                const std::vector<ClassId>& ids, int labels) {
  std::vector<std::vector<std::uint64_t>> cm(labels, std::vector<std::uint64_t>(labels, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) ++cm[pred[i]][truth[i]];
  std::map<ClassId, ClassCounts> out;
  for (ClassId c : ids) {
    ClassCounts k;
    for (int j = 0; j < labels; ++j) {
      k.prediction_area += cm[c][j];
      k.truth_area += cm[j][c];
    }
    k.intersection = cm[c][c];
    k.union_ = k.prediction_area + k.truth_area - k.intersection;
    out[c] = k;
  }
  return out;
}

TEST(ScoreEpisode, MatchesConfusionMatrix) {
  Rng rng(99);
  for (int t = 0; t < 500; ++t) {
    const int labels = 2 + static_cast<int>(rng.uniform_index(5));
    LabelMap pred(16, 16), truth(16, 16);
    for (auto& v : pred.data()) v = static_cast<ClassId>(rng.uniform_index(labels));
    for (auto& v : truth.data()) v = static_cast<ClassId>(rng.uniform_index(labels));
    std::vector<ClassId> ids;
    for (ClassId c = 1; c < labels; ++c)
      if (rng.uniform01() < 0.8) ids.push_back(c);
    const auto r = score_episode(pred, truth, ids);
    EXPECT_EQ(r.classes, confusion_oracle(pred, truth, ids, labels));
    for (const auto& [c, k] : r.classes) {
      EXPECT_LE(k.intersection, std::min(k.prediction_area, k.truth_area));
      EXPECT_EQ(k.union_, k.prediction_area + k.truth_area - k.intersection);
    }
    if (auto m = r.miou()) {
      EXPECT_GE(*m, 0.0);
      EXPECT_LE(*m, 1.0);
    }
  }
}

TEST(ScoreEpisode, FourByFour) {
  LabelMap pred(4, 4, 0), truth(4, 4, 0);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) pred(x, y) = 1;  // rows 0-1
  for (int y = 1; y < 3; ++y)
    for (int x = 0; x < 4; ++x) truth(x, y) = 1;  // rows 1-2
  const std::vector<ClassId> ids = {1};
  const auto r = score_episode(pred, truth, ids);
  EXPECT_EQ(r.classes.at(1).intersection, 4u);
  EXPECT_EQ(r.classes.at(1).union_, 12u);
  EXPECT_DOUBLE_EQ(*r.miou(), 4.0 / 12.0);
}

TEST(ScoreEpisode, DegenerateCases) {
  MultiClassMask truth(5, 5, 0);
  truth(1, 1) = 2;
  const std::vector<ClassId> ids = {2, 3};
  EXPECT_EQ(*score_episode(truth, truth, ids).miou(), 1.0);
  const auto bg = score_episode(LabelMap(5, 5, 0), truth, ids);
  EXPECT_EQ(*bg.miou(), 0.0);
  EXPECT_EQ(bg.classes.at(3).union_, 0u);  // absent everywhere, excluded
  const std::vector<ClassId> only3 = {3};
  EXPECT_FALSE(score_episode(LabelMap(5, 5, 0), truth, only3).miou());
  EXPECT_THROW(score_episode(LabelMap(4, 5, 0), truth, ids), DataError);
  // misclassification counts against both classes
  LabelMap wrong(5, 5, 0);
  wrong(1, 1) = 3;
  const auto w = score_episode(wrong, truth, ids);
  EXPECT_EQ(w.classes.at(2).union_, 1u);
  EXPECT_EQ(w.classes.at(3).union_, 1u);
  EXPECT_EQ(*w.miou(), 0.0);
}

EpisodeResult result_of(std::map<ClassId, std::pair<int, int>> iu) {
  EpisodeResult r;
  for (auto [c, p] : iu) {
    r.classes[c].intersection = p.first;
    r.classes[c].union_ = p.second;
  }
  return r;
}

TEST(AggregateFold, PooledAndPerEpisode) {
  const std::vector<EpisodeResult> rs = {result_of({{1, {1, 2}}, {2, {0, 0}}}),
                                         result_of({{1, {9, 10}}, {2, {3, 4}}}),
                                         result_of({{3, {0, 0}}})};
  const std::vector<ClassId> test = {1, 2, 3};
  const auto pooled = aggregate_fold(0, test, rs, Pooling::kPooled);
  EXPECT_DOUBLE_EQ(pooled.classes.at(1).iou, 10.0 / 12.0);
  EXPECT_EQ(pooled.classes.at(1).n_episodes, 2u);
  EXPECT_EQ(pooled.classes.at(2).n_episodes, 1u);
  EXPECT_FALSE(pooled.classes.count(3));
  EXPECT_DOUBLE_EQ(*pooled.miou, (10.0 / 12.0 + 0.75) / 2);
  const auto per = aggregate_fold(0, test, rs, Pooling::kPerEpisode);
  EXPECT_DOUBLE_EQ(per.classes.at(1).iou, (0.5 + 0.9) / 2);
  EXPECT_DOUBLE_EQ(*per.miou, (0.7 + 0.75) / 2);
  EXPECT_FALSE(aggregate_fold(0, test, {}, Pooling::kPooled).miou);
}

const DatasetIndex& standard_world() {
  static const DatasetIndex ds = to_dataset(make_world({}));
  return ds;
}

TEST(RunEpisode, FixtureEpisodeAndDeterminism) {
  const auto& ds = standard_world();
  const RunConfig cfg;
  const auto backends = make_backends(cfg);
  const auto eps = sample_episodes(ds, make_fold(ds, 1), 3, 1, 4, 12);
  for (const auto& e : eps) {
    const auto a = run_episode(e, cfg, backends);
    ASSERT_TRUE(a.result.miou());
    EXPECT_GE(*a.result.miou(), 0.9) << "episode " << e.episode_id;
    EXPECT_EQ(run_episode(e, cfg, backends).labels, a.labels);
    for (auto v : a.labels.data())
      EXPECT_TRUE(v == 0 || std::find(e.class_ids.begin(), e.class_ids.end(), v) != e.class_ids.end());
  }
}

TEST(RunEpisode, InterClassFilterHelpsOnOverlappingFixture) {
  SyntheticOptions o;
  o.overlapping = true;
  const auto ds = to_dataset(make_world(o));
  RunConfig on;
  RunConfig off = ablation_config(on, AblationRow::kNoInterClass);
  EXPECT_FALSE(off.filter.switches.inter_class);
  const std::vector<int> folds = {0};
  const auto a = run_benchmark(ds, folds, 2, 1, 20, 3, on);
  const auto b = run_benchmark(ds, folds, 2, 1, 20, 3, off);
  EXPECT_GT(*a.grand_mean, *b.grand_mean);
}

TEST(Predict, ExtractorMismatchIsDataError) {
  const auto& ds = standard_world();
  const auto e = sample_episodes(ds, make_fold(ds, 0), 1, 1, 1, 0).front();
  RunConfig cfg;
  const auto b = make_backends(cfg);
  const auto store = build_store(e.supports, e.class_ids, 5, *b.features, 0);
  RunConfig other;
  other.filter.switches.backbone_swap = true;
  EXPECT_THROW(predict(store, e.query.image, other, make_backends(other), 0), DataError);
  EXPECT_EQ(make_backends(other).features->spec().name, "mock-sam");
}

TEST(RunBenchmark, ReportShapeAndDeterminism) {
  const auto& ds = standard_world();
  RunConfig cfg;
  cfg.workers = 3;
  const std::vector<int> folds = {0, 2};
  const auto a = run_benchmark(ds, folds, 5, 1, 12, 4, cfg);
  cfg.workers = 1;
  const auto b = run_benchmark(ds, folds, 5, 1, 12, 4, cfg);
  EXPECT_EQ(report_to_json(a).dump(), report_to_json(b).dump());
  EXPECT_EQ(report_to_csv(a), report_to_csv(b));
  ASSERT_EQ(a.folds.size(), 2u);
  double sum = 0;
  for (const auto& f : a.folds) {
    EXPECT_EQ(f.episodes_completed, 12u);
    EXPECT_EQ(f.episodes_failed, 0u);
    double s = 0;
    for (const auto& [c, k] : f.classes) {
      s += k.iou;
      EXPECT_GE(k.iou, 0.0);
      EXPECT_LE(k.iou, 1.0);
    }
    EXPECT_NEAR(*f.miou, s / f.classes.size(), 1e-12);
    sum += *f.miou;
  }
  EXPECT_NEAR(*a.grand_mean, sum / 2, 1e-12);
  const auto j = report_to_json(a);
  EXPECT_EQ(j["format"], "fss-report");
  EXPECT_EQ(j["version"], 1);
  EXPECT_EQ(j["folds"][0]["fold"], 0);
  EXPECT_FALSE(j["partial"].get<bool>());
  EXPECT_TRUE(j["config"].contains("n_cluster"));
  const auto csv = report_to_csv(a);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "fold,class_id,iou,n_episodes");
}

TEST(RunBenchmark, ZeroEpisodesAndCancel) {
  const auto& ds = standard_world();
  const std::vector<int> folds = {0};
  EXPECT_THROW(run_benchmark(ds, folds, 1, 1, 0, 0, RunConfig{}), UsageError);
  std::atomic<bool> stop{true};
  const auto r = run_benchmark(ds, folds, 1, 1, 5, 0, RunConfig{}, &stop);
  EXPECT_TRUE(r.partial);
  EXPECT_EQ(r.folds[0].episodes_completed, 0u);
}

TEST(Ablation, RowsAndErrors) {
  const auto rows = all_ablation_rows();
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(ablation_row_name(rows.front()), "w/o feature-backbone swap");
  EXPECT_EQ(ablation_row_name(rows.back()), "complete");
  const RunConfig base;
  EXPECT_TRUE(ablation_config(base, AblationRow::kBackboneSwap).filter.switches.backbone_swap);
  EXPECT_FALSE(ablation_config(base, AblationRow::kNoBgrp).filter.switches.bgrp);
  EXPECT_FALSE(ablation_config(base, AblationRow::kNoIntraClass).filter.switches.intra_class);
  const auto c = ablation_config(base, AblationRow::kComplete).filter.switches;
  EXPECT_TRUE(c.intra_class && c.inter_class && c.bgrp && !c.backbone_swap);

  const auto& ds = standard_world();
  const std::vector<int> folds = {0};
  EXPECT_THROW(run_ablation(ds, folds, {}, 2, 0, base), UsageError);
  const std::vector<AblationRow> two = {AblationRow::kNoBgrp, AblationRow::kComplete};
  const auto t = run_ablation(ds, folds, two, 3, 1, base, {1, 2});
  ASSERT_EQ(t.lines.size(), 2u);
  EXPECT_EQ(t.lines[1].miou_by_way.size(), 2u);
  EXPECT_EQ(ablation_to_json(t).dump(), ablation_to_json(run_ablation(ds, folds, two, 3, 1, base, {1, 2})).dump());
  const auto csv = ablation_to_csv(t);
  EXPECT_NE(csv.find("complete"), std::string::npos);
}

}  // namespace
}  // namespace fss
