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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fss/arbitration.hpp"
#include "fss/config.hpp"
#include "fss/ingest.hpp"

namespace fss {

struct ClassCounts {
  std::uint64_t intersection = 0;
  std::uint64_t union_ = 0;
  std::uint64_t prediction_area = 0;
  std::uint64_t truth_area = 0;

  /// I / U; only meaningful when union_ > 0.
  double iou() const { return union_ ? static_cast<double>(intersection) / static_cast<double>(union_) : 0.0; }
  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

struct EpisodeResult {
  std::size_t episode_id = 0;
  std::map<ClassId, ClassCounts> classes;  // every episode class, present or not
  double wall_time = 0.0;                  // seconds, never written to reports

  /// Mean IoU over classes with a non-empty union; nullopt when there are none.
  std::optional<double> miou() const;
};

/// Per-class pixel counts of `pred` against `truth`. Background is never a
/// scored class. Throws DataError when the sizes differ.
EpisodeResult score_episode(const LabelMap& pred, const MultiClassMask& truth,
                            std::span<const ClassId> class_ids);

struct Backends {
  std::shared_ptr<const FeatureExtractor> features;
  std::shared_ptr<const Segmenter> segmenter;
};

/// Resolves the configured backends. The feature backend is the swap one when
/// switches.backbone_swap is set; cache_root, when non-empty, enables the
/// embedding cache.
Backends make_backends(const RunConfig& cfg);

struct Prediction {
  LabelMap labels;
  RegionProposalSet proposals;
  PromptPlan plan;
  std::vector<MaskCandidate> candidates;
  std::vector<MaskCandidate> survivors;
};

/// Phase two for one query against a built store.
Prediction predict(const CrfaStore& store, const ImageRef& query, const RunConfig& cfg,
                   const Backends& backends, std::uint64_t seed);

struct EpisodeOutput {
  LabelMap labels;
  EpisodeResult result;
};

/// Generator seed of an episode's pipeline stages.
std::uint64_t episode_pipeline_seed(const Episode& episode);

/// Full pipeline on one episode, scored against the query annotation.
EpisodeOutput run_episode(const Episode& episode, const RunConfig& cfg, const Backends& backends);

struct ClassScore {
  double iou = 0.0;
  std::size_t n_episodes = 0;  // episodes where the class was predicted or present
  std::uint64_t intersection = 0;
  std::uint64_t union_ = 0;
};

struct FoldReport {
  int fold_id = 0;
  std::size_t episodes_requested = 0;
  std::size_t episodes_completed = 0;
  std::size_t episodes_failed = 0;
  std::map<ClassId, ClassScore> classes;  // fold test classes with data
  std::optional<double> miou;
};

struct BenchmarkReport {
  nlohmann::json config;
  std::uint64_t seed = 0;
  int n_way = 1;
  int k_shot = 1;
  std::vector<FoldReport> folds;
  std::optional<double> grand_mean;  // mean of fold means
  bool partial = false;              // cancelled before all episodes ran
};

/// Per class: pooled I / U across episodes (metric.pooling = pooled) or the
/// mean of per-episode IoU (per_episode), over episodes with a non-empty
/// union. Fold mIoU is the mean over test classes with data.
FoldReport aggregate_fold(int fold_id, std::span<const ClassId> test_classes,
                          std::span<const EpisodeResult> results, Pooling pooling);

/// Samples `episodes` episodes per fold and runs them on cfg.workers threads.
/// Setting `*cancel` stops scheduling new episodes; the report is then partial.
BenchmarkReport run_benchmark(const DatasetIndex& dataset, std::span<const int> folds, int n_way,
                              int k_shot, std::size_t episodes, std::uint64_t seed,
                              const RunConfig& cfg, const std::atomic<bool>* cancel = nullptr);

nlohmann::json report_to_json(const BenchmarkReport& report);
/// Columns fold,class_id,iou,n_episodes.
std::string report_to_csv(const BenchmarkReport& report);
/// report.json and report.csv under `dir`.
void write_report(const std::filesystem::path& dir, const BenchmarkReport& report);

enum class AblationRow { kBackboneSwap, kNoInterClass, kNoBgrp, kNoIntraClass, kComplete };

std::string ablation_row_name(AblationRow row);
/// All five rows in table order.
std::vector<AblationRow> all_ablation_rows();
/// The base config with that row's single switch toggled.
RunConfig ablation_config(const RunConfig& base, AblationRow row);

struct AblationLine {
  AblationRow row = AblationRow::kComplete;
  std::string name;
  std::map<int, std::optional<double>> miou_by_way;  // n_way -> grand mean
};

struct AblationTable {
  int k_shot = 1;
  std::vector<int> ways;
  std::vector<AblationLine> lines;
  bool partial = false;
};

/// One benchmark per (row, way). Throws UsageError for an empty row list.
AblationTable run_ablation(const DatasetIndex& dataset, std::span<const int> folds,
                           std::span<const AblationRow> rows, std::size_t episodes,
                           std::uint64_t seed, const RunConfig& base,
                           std::vector<int> ways = {1, 5}, int k_shot = 1,
                           const std::atomic<bool>* cancel = nullptr);

nlohmann::json ablation_to_json(const AblationTable& table);
/// Columns row,<n>-way... with mIoU in percent.
std::string ablation_to_csv(const AblationTable& table);
void write_ablation(const std::filesystem::path& dir, const AblationTable& table);

}  // namespace fss
