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

#include "fss/evalmetrics.hpp"

#include <algorithm>
#include <chrono>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "fss/container.hpp"

namespace fss {
namespace {

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string percent(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
  return buf;
}

}  // namespace

std::optional<double> EpisodeResult::miou() const {
  std::vector<double> v;
  for (const auto& [c, k] : classes)
    if (k.union_ > 0) v.push_back(k.iou());
  return mean_of(v);
}

EpisodeResult score_episode(const LabelMap& pred, const MultiClassMask& truth,
                            std::span<const ClassId> class_ids) {
  if (!pred.same_shape(truth)) throw DataError("score_episode: prediction and truth sizes differ");
  EpisodeResult r;
  for (ClassId c : class_ids) {
    if (c == kBackground) continue;
    ClassCounts k;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool p = pred[i] == c, t = truth[i] == c;
      k.intersection += p && t;
      k.union_ += p || t;
      k.prediction_area += p;
      k.truth_area += t;
    }
    r.classes[c] = k;
  }
  return r;
}

Backends make_backends(const RunConfig& cfg) {
  Backends b;
  auto fx = make_feature_extractor(cfg.filter.switches.backbone_swap ? cfg.swap_features : cfg.features);
  if (!cfg.cache_root.empty())
    fx = std::make_shared<CachingFeatureExtractor>(std::move(fx), FeatureCache(cfg.cache_root));
  b.features = std::move(fx);
  b.segmenter = make_segmenter(cfg.segmenter);
  return b;
}

Prediction predict(const CrfaStore& store, const ImageRef& query, const RunConfig& cfg,
                   const Backends& backends, std::uint64_t seed) {
  if (store.extractor != backends.features->spec().name)
    throw DataError("store was built with extractor '" + store.extractor + "' but the query uses '" +
                    backends.features->spec().name + "'");
  const auto ids = store.class_ids();
  Prediction p;
  const FeatureMap q = l2_normalize(extract_features(*backends.features, query));
  const SimilarityStack stack = similarity_stack(q, store);
  const LabelGrid assignment = assign_classes(stack);
  p.proposals = build_proposals(stack, assignment, ids, query.width, query.height,
                                cfg.filter.switches.intra_class);
  p.plan = build_plan(p.proposals, cfg.prompt, seed, cfg.filter.switches.bgrp);
  p.candidates = collect_candidates(p.plan, query, *backends.segmenter);
  p.survivors = inter_class_filter(p.candidates, p.proposals, cfg.filter);
  p.labels = assemble_label_map(p.survivors, p.proposals, query.width, query.height);
  return p;
}

std::uint64_t episode_pipeline_seed(const Episode& episode) {
  return Rng::derive(episode.seed, episode.episode_id, "pipeline").next();
}

EpisodeOutput run_episode(const Episode& episode, const RunConfig& cfg, const Backends& backends) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = episode_pipeline_seed(episode);
  const CrfaStore store = build_store(episode.supports, episode.class_ids, cfg.n_cluster,
                                      *backends.features, seed, cfg.crfa_budget);
  const auto truth = episode.query_truth();
  if (!truth) throw DataError("episode " + std::to_string(episode.episode_id) + ": query has no annotation");
  EpisodeOutput out;
  out.labels = predict(store, episode.query.image, cfg, backends, seed).labels;
  out.result = score_episode(out.labels, *truth, episode.class_ids);
  out.result.episode_id = episode.episode_id;
  out.result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

FoldReport aggregate_fold(int fold_id, std::span<const ClassId> test_classes,
                          std::span<const EpisodeResult> results, Pooling pooling) {
  FoldReport f;
  f.fold_id = fold_id;
  std::map<ClassId, std::vector<double>> per_episode;
  for (const auto& r : results) {
    for (const auto& [c, k] : r.classes) {
      if (k.union_ == 0) continue;
      auto& s = f.classes[c];
      s.intersection += k.intersection;
      s.union_ += k.union_;
      ++s.n_episodes;
      per_episode[c].push_back(k.iou());
    }
  }
  std::vector<double> means;
  for (auto& [c, s] : f.classes) {
    s.iou = pooling == Pooling::kPooled ? static_cast<double>(s.intersection) / static_cast<double>(s.union_)
                                        : *mean_of(per_episode[c]);
    if (std::find(test_classes.begin(), test_classes.end(), c) != test_classes.end()) means.push_back(s.iou);
  }
  f.miou = mean_of(means);
  return f;
}

BenchmarkReport run_benchmark(const DatasetIndex& dataset, std::span<const int> folds, int n_way,
                              int k_shot, std::size_t episodes, std::uint64_t seed,
                              const RunConfig& cfg, const std::atomic<bool>* cancel) {
  if (episodes == 0) throw UsageError("episode count must be positive");
  if (folds.empty()) throw UsageError("no folds requested");
  validate(cfg);
  const Backends backends = make_backends(cfg);

  BenchmarkReport report;
  report.config = to_json(cfg);
  report.seed = seed;
  report.n_way = n_way;
  report.k_shot = k_shot;
  std::vector<double> fold_means;
  for (int fold_id : folds) {
    const FoldSpec fold = make_fold(dataset, fold_id);
    const auto eps = sample_episodes(dataset, fold, n_way, k_shot, episodes,
                                     Rng::derive(seed, static_cast<std::uint64_t>(fold_id), "fold").next());
    std::vector<std::optional<EpisodeResult>> results(eps.size());
    std::vector<char> failed(eps.size(), 0);  // not vector<bool>: written concurrently
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (;;) {
        if (cancel && cancel->load()) return;
        const std::size_t i = next.fetch_add(1);
        if (i >= eps.size()) return;
        try {
          results[i] = run_episode(eps[i], cfg, backends).result;
        } catch (const Error& e) {
          spdlog::warn("fold {} episode {} failed and is excluded: {}", fold_id, eps[i].episode_id, e.what());
          failed[i] = 1;
        }
      }
    };
    const int n_threads = static_cast<int>(std::min<std::size_t>(cfg.workers, eps.size()));
    if (n_threads <= 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
      for (auto& t : pool) t.join();
    }

    std::vector<EpisodeResult> done;
    for (auto& r : results)
      if (r) done.push_back(std::move(*r));
    FoldReport f = aggregate_fold(fold_id, fold.test_classes, done, cfg.pooling);
    f.episodes_requested = eps.size();
    f.episodes_completed = done.size();
    f.episodes_failed = static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
    if (f.episodes_completed + f.episodes_failed < eps.size()) report.partial = true;
    if (f.miou) fold_means.push_back(*f.miou);
    report.folds.push_back(std::move(f));
    if (cancel && cancel->load()) {
      report.partial = true;
      break;
    }
  }
  report.grand_mean = mean_of(fold_means);
  return report;
}

nlohmann::json report_to_json(const BenchmarkReport& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.folds) {
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& [c, s] : f.classes) {
      classes[std::to_string(c)] = {{"iou", s.iou},
                                    {"n_episodes", s.n_episodes},
                                    {"intersection", s.intersection},
                                    {"union", s.union_}};
    }
    folds.push_back({{"fold", f.fold_id},
                     {"miou", opt(f.miou)},
                     {"episodes_requested", f.episodes_requested},
                     {"episodes_completed", f.episodes_completed},
                     {"episodes_failed", f.episodes_failed},
                     {"classes", classes}});
  }
  return {{"format", "fss-report"},
          {"version", 1},
          {"config", r.config},
          {"seed", r.seed},
          {"n_way", r.n_way},
          {"k_shot", r.k_shot},
          {"folds", folds},
          {"grand_mean", opt(r.grand_mean)},
          {"partial", r.partial}};
}

std::string report_to_csv(const BenchmarkReport& r) {
  std::ostringstream o;
  o << "fold,class_id,iou,n_episodes\n";
  for (const auto& f : r.folds) {
    for (const auto& [c, s] : f.classes) {
      const auto j = nlohmann::json(s.iou).dump();
      o << f.fold_id << ',' << c << ',' << j << ',' << s.n_episodes << '\n';
    }
  }
  return o.str();
}

void write_report(const std::filesystem::path& dir, const BenchmarkReport& report) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "report.json", report_to_json(report).dump(2) + "\n");
  write_file_atomic(dir / "report.csv", report_to_csv(report));
}

std::string ablation_row_name(AblationRow row) {
  switch (row) {
    case AblationRow::kBackboneSwap: return "w/o feature-backbone swap";
    case AblationRow::kNoInterClass: return "w/o inter-class filtering";
    case AblationRow::kNoBgrp: return "w/o backgd reg prop";
    case AblationRow::kNoIntraClass: return "w/o intra-class filtering";
    case AblationRow::kComplete: return "complete";
  }
  return "?";
}

std::vector<AblationRow> all_ablation_rows() {
  return {AblationRow::kBackboneSwap, AblationRow::kNoInterClass, AblationRow::kNoBgrp,
          AblationRow::kNoIntraClass, AblationRow::kComplete};
}

RunConfig ablation_config(const RunConfig& base, AblationRow row) {
  RunConfig c = base;
  auto& s = c.filter.switches;
  switch (row) {
    case AblationRow::kBackboneSwap: s.backbone_swap = !s.backbone_swap; break;
    case AblationRow::kNoInterClass: s.inter_class = false; break;
    case AblationRow::kNoBgrp: s.bgrp = false; break;
    case AblationRow::kNoIntraClass: s.intra_class = false; break;
    case AblationRow::kComplete: break;
  }
  return c;
}

AblationTable run_ablation(const DatasetIndex& dataset, std::span<const int> folds,
                           std::span<const AblationRow> rows, std::size_t episodes,
                           std::uint64_t seed, const RunConfig& base, std::vector<int> ways,
                           int k_shot, const std::atomic<bool>* cancel) {
  if (rows.empty()) throw UsageError("ablation needs at least one row");
  if (ways.empty()) throw UsageError("ablation needs at least one way setting");
  AblationTable t;
  t.k_shot = k_shot;
  t.ways = ways;
  for (AblationRow row : rows) {
    AblationLine line;
    line.row = row;
    line.name = ablation_row_name(row);
    const RunConfig cfg = ablation_config(base, row);
    for (int n : ways) {
      const BenchmarkReport r = run_benchmark(dataset, folds, n, k_shot, episodes, seed, cfg, cancel);
      line.miou_by_way[n] = r.grand_mean;
      t.partial = t.partial || r.partial;
    }
    t.lines.push_back(std::move(line));
    if (cancel && cancel->load()) break;
  }
  return t;
}

nlohmann::json ablation_to_json(const AblationTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& l : t.lines) {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [n, v] : l.miou_by_way) m[std::to_string(n) + "-way"] = opt(v);
    rows.push_back({{"row", l.name}, {"miou", m}});
  }
  return {{"format", "fss-ablation"}, {"version", 1}, {"k_shot", t.k_shot},
          {"ways", t.ways},           {"rows", rows},  {"partial", t.partial}};
}

std::string ablation_to_csv(const AblationTable& t) {
  std::ostringstream o;
  o << "row";
  for (int n : t.ways) o << ',' << n << "-way";
  o << '\n';
  for (const auto& l : t.lines) {
    o << '"' << l.name << '"';
    for (int n : t.ways) {
      const auto it = l.miou_by_way.find(n);
      o << ',' << (it == l.miou_by_way.end() ? std::string{} : percent(it->second));
    }
    o << '\n';
  }
  return o.str();
}

void write_ablation(const std::filesystem::path& dir, const AblationTable& table) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "ablation.json", ablation_to_json(table).dump(2) + "\n");
  write_file_atomic(dir / "ablation.csv", ablation_to_csv(table));
}

}  // namespace fss
