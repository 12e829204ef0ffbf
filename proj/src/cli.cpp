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

#include "fss/cli.hpp"

#include <algorithm>
#include <csignal>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fss/container.hpp"
#include "fss/evalmetrics.hpp"
#include "fss/image_io.hpp"

namespace fss {
namespace {

namespace fs = std::filesystem;

struct ConfigArgs {
  std::string config_file;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  int workers = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* workers_opt = nullptr;
};

void add_config_options(CLI::App* cmd, ConfigArgs& c, bool with_workers) {
  cmd->add_option("--config", c.config_file, "key = value config file");
  cmd->add_option("--set", c.overrides, "config override key=value (repeatable)");
  c.seed_opt = cmd->add_option("--seed", c.seed, "random seed (overrides config)");
  if (with_workers) c.workers_opt = cmd->add_option("--workers", c.workers, "worker threads");
}

// defaults < config file < --set < dedicated flags
RunConfig resolve_config(const ConfigArgs& c) {
  RunConfig cfg;
  if (!c.config_file.empty()) apply_config_file(cfg, c.config_file);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  if (c.seed_opt && c.seed_opt->count()) cfg.seed = c.seed;
  if (c.workers_opt && c.workers_opt->count()) cfg.workers = c.workers;
  validate(cfg);
  return cfg;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string(what) + " is required");
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path);
}

DatasetIndex open_dataset(const std::string& annotations, const std::string& images) {
  require_file(annotations, "annotation file");
  const fs::path root = images.empty() ? fs::path(annotations).parent_path() : fs::path(images);
  return load_dataset(annotations, root);
}

std::vector<int> parse_folds(const std::string& s) {
  if (s == "all") return {0, 1, 2, 3};
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int f = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(f);
    } catch (const std::exception&) {
      throw UsageError("bad fold '" + item + "'");
    }
  }
  for (int f : out)
    if (f < 0 || f >= kNumFolds) throw UsageError("fold must be in 0.." + std::to_string(kNumFolds - 1));
  if (out.empty()) throw UsageError("no fold given");
  return out;
}

std::vector<int> parse_ways(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw UsageError("bad way count '" + item + "'");
    }
    if (out.back() < 1) throw UsageError("way counts must be >= 1");
  }
  if (out.empty()) throw UsageError("no way counts given");
  return out;
}

std::vector<AblationRow> parse_rows(const std::string& s) {
  if (s == "all") return all_ablation_rows();
  static const std::map<std::string, AblationRow> keys = {{"backbone", AblationRow::kBackboneSwap},
                                                          {"inter", AblationRow::kNoInterClass},
                                                          {"bgrp", AblationRow::kNoBgrp},
                                                          {"intra", AblationRow::kNoIntraClass},
                                                          {"complete", AblationRow::kComplete}};
  std::vector<AblationRow> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto it = keys.find(item);
    if (it == keys.end())
      throw UsageError("unknown ablation row '" + item + "' (backbone, inter, bgrp, intra, complete, all)");
    out.push_back(it->second);
  }
  if (out.empty()) throw UsageError("ablation needs at least one row");
  return out;
}

void on_sigint(int) { cancel_flag().store(true); }

// Installs the SIGINT handler for the lifetime of a command.
class SigintScope {
 public:
  SigintScope() {
    cancel_flag().store(false);
    previous_ = std::signal(SIGINT, on_sigint);
  }
  ~SigintScope() { std::signal(SIGINT, previous_); }

 private:
  void (*previous_)(int) = SIG_DFL;
};

std::string fmt_miou(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
  return buf;
}

int cmd_build_crfa(const std::string& annotations, const std::string& images,
                   const std::vector<std::string>& support_ids, const std::vector<int>& classes,
                   const std::string& out_path, const ConfigArgs& ca, std::ostream& out) {
  const DatasetIndex ds = open_dataset(annotations, images);
  const RunConfig cfg = resolve_config(ca);
  if (support_ids.empty()) throw UsageError("at least one --support image id is required");
  if (out_path.empty()) throw UsageError("--out is required");
  std::vector<AnnotatedImage> supports;
  for (const auto& id : support_ids) {
    if (!ds.contains(id)) throw DataError("unknown support image id " + id);
    supports.push_back(ds.image(id));
  }
  std::vector<ClassId> ids(classes.begin(), classes.end());
  if (ids.empty()) {
    for (const auto& s : supports) ids.insert(ids.end(), s.classes.begin(), s.classes.end());
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.empty()) throw DataError("supports carry no annotated classes");

  const Backends be = make_backends(cfg);
  CrfaStore store = build_store(supports, ids, cfg.n_cluster, *be.features, cfg.seed, cfg.crfa_budget);
  save_store(out_path, store);
  for (const auto& [c, e] : store.classes)
    out << "class " << c << ": " << store.rows(c) << " vectors (pool " << store.pool_size(c) << ")\n";
  out << "wrote " << out_path << "\n";
  return kExitOk;
}

int cmd_predict(const std::string& store_path, const std::string& image_path, const std::string& out_root,
                bool dump_crp, const ConfigArgs& ca, std::ostream& out) {
  require_file(store_path, "store file");
  require_file(image_path, "query image");
  const RunConfig cfg = resolve_config(ca);
  const CrfaStore store = load_store(store_path);
  const Backends be = make_backends(cfg);

  ImageRef query;
  query.id = fs::path(image_path).stem().string();
  auto src = std::make_shared<FileImageSource>(image_path);
  const Rgb8Image pixels = src->load();
  query.width = pixels.width;
  query.height = pixels.height;
  query.pixel_source = src;

  const Prediction p = predict(store, query, cfg, be, cfg.seed);
  const fs::path dir = make_run_dir(out_root, cfg.seed);
  write_file_atomic(dir / "config.txt", to_text(cfg));
  write_png_indexed(dir / "labels.png", p.labels);
  write_png_rgb(dir / "overlay.png", render_overlay(pixels, p.labels));
  std::map<ClassId, std::size_t> counts;
  for (auto v : p.labels.data()) ++counts[v];
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [c, n] : counts) j[std::to_string(c)] = n;
  write_file_atomic(dir / "labels.json", j.dump(2) + "\n");
  write_file_atomic(dir / "plan.json", plan_to_json(p.plan).dump(2) + "\n");
  if (dump_crp) dump_proposals(dir / "crp", p.proposals);
  for (const auto& [c, n] : counts) out << "class " << c << ": " << n << " px\n";
  out << "wrote " << dir.string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string annotations, images, folds = "0", out_root = "runs";
  int n_way = 1, k_shot = 1;
  std::size_t episodes = 1000;
};

int cmd_evaluate(const EvalArgs& a, const ConfigArgs& ca, std::ostream& out) {
  const DatasetIndex ds = open_dataset(a.annotations, a.images);
  const auto folds = parse_folds(a.folds);
  const RunConfig cfg = resolve_config(ca);
  SigintScope sig;
  const BenchmarkReport r = run_benchmark(ds, folds, a.n_way, a.k_shot, a.episodes, cfg.seed, cfg, &cancel_flag());
  const fs::path dir = make_run_dir(a.out_root, cfg.seed);
  write_file_atomic(dir / "config.txt", to_text(cfg));
  write_report(dir, r);
  for (const auto& f : r.folds)
    out << "fold " << f.fold_id << ": mIoU " << fmt_miou(f.miou) << " (" << f.episodes_completed << " episodes, "
        << f.episodes_failed << " failed)\n";
  out << "mean: " << fmt_miou(r.grand_mean) << (r.partial ? " (partial)" : "") << "\n";
  out << "wrote " << dir.string() << "\n";
  return kExitOk;
}

int cmd_ablate(const EvalArgs& a, const std::string& rows, const std::string& ways, const ConfigArgs& ca,
               std::ostream& out) {
  const DatasetIndex ds = open_dataset(a.annotations, a.images);
  const auto folds = parse_folds(a.folds);
  const auto row_list = parse_rows(rows);
  const auto way_list = parse_ways(ways);
  const RunConfig cfg = resolve_config(ca);
  SigintScope sig;
  const AblationTable t =
      run_ablation(ds, folds, row_list, a.episodes, cfg.seed, cfg, way_list, a.k_shot, &cancel_flag());
  const fs::path dir = make_run_dir(a.out_root, cfg.seed);
  write_file_atomic(dir / "config.txt", to_text(cfg));
  write_ablation(dir, t);
  out << ablation_to_csv(t);
  out << "wrote " << dir.string() << "\n";
  return kExitOk;
}

std::string cache_root_of(const std::string& root, const ConfigArgs& ca) {
  if (!root.empty()) return root;
  const RunConfig cfg = resolve_config(ca);
  if (cfg.cache_root.empty()) throw UsageError("no cache root: pass --root or set cache_root");
  return cfg.cache_root;
}

}  // namespace

std::atomic<bool>& cancel_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

fs::path make_run_dir(const fs::path& root, std::uint64_t seed) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  const std::string base = std::string(stamp) + "-seed" + std::to_string(seed);
  fs::create_directories(root);
  for (int i = 0;; ++i) {
    const fs::path p = root / (i == 0 ? base : base + "-" + std::to_string(i));
    if (fs::create_directory(p)) return p;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Training-free few-shot segmentation with class region proposals"};
  app.name("fss");
  app.require_subcommand(1);

  ConfigArgs build_cfg, predict_cfg, eval_cfg, ablate_cfg, cache_cfg;

  auto* build = app.add_subcommand("build-crfa", "cluster support features into a store file");
  std::string b_ann, b_img, b_out;
  std::vector<std::string> b_support;
  std::vector<int> b_classes;
  build->add_option("--annotations", b_ann, "COCO-format annotation file");
  build->add_option("--images", b_img, "image root (default: the annotation file's directory)");
  build->add_option("--support", b_support, "support image id (repeatable)");
  build->add_option("--classes", b_classes, "class ids (default: every class in the supports)");
  build->add_option("--out", b_out, "output .sacs file");
  add_config_options(build, build_cfg, false);

  auto* pred = app.add_subcommand("predict", "segment a query image with a store");
  std::string p_store, p_image, p_out = "runs";
  bool p_dump = false;
  pred->add_option("--store", p_store, "store file from build-crfa");
  pred->add_option("--image", p_image, "query image");
  pred->add_option("--out-root", p_out, "directory receiving the run directory");
  pred->add_flag("--dump-crp", p_dump, "write per-class proposal images");
  add_config_options(pred, predict_cfg, false);

  EvalArgs ev, ab;
  auto add_eval = [](CLI::App* cmd, EvalArgs& a) {
    cmd->add_option("--annotations", a.annotations, "COCO-format annotation file");
    cmd->add_option("--images", a.images, "image root (default: the annotation file's directory)");
    cmd->add_option("--fold", a.folds, "fold id, comma list, or 'all'");
    cmd->add_option("--n-way", a.n_way, "classes per episode");
    cmd->add_option("--k-shot", a.k_shot, "support images per class");
    cmd->add_option("--episodes", a.episodes, "episodes per fold");
    cmd->add_option("--out-root", a.out_root, "directory receiving the run directory");
  };
  auto* eval = app.add_subcommand("evaluate", "run the episode benchmark");
  add_eval(eval, ev);
  add_config_options(eval, eval_cfg, true);

  auto* abl = app.add_subcommand("ablate", "run the component ablation table");
  std::string a_rows = "all", a_ways = "1,5";
  add_eval(abl, ab);
  abl->add_option("--ablate", a_rows, "rows: all or a comma list of backbone,inter,bgrp,intra,complete");
  abl->add_option("--ways", a_ways, "comma list of way counts");
  add_config_options(abl, ablate_cfg, true);

  auto* cache = app.add_subcommand("cache", "inspect the embedding cache");
  cache->require_subcommand(1);
  std::string c_root;
  cache->add_option("--root", c_root, "cache root (default: cache_root from config)");
  add_config_options(cache, cache_cfg, false);
  auto* ls = cache->add_subcommand("ls", "list cached embeddings");
  auto* clear = cache->add_subcommand("clear", "delete cached embeddings");
  ls->fallthrough();
  clear->fallthrough();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (build->parsed()) return cmd_build_crfa(b_ann, b_img, b_support, b_classes, b_out, build_cfg, out);
    if (pred->parsed()) return cmd_predict(p_store, p_image, p_out, p_dump, predict_cfg, out);
    if (eval->parsed()) return cmd_evaluate(ev, eval_cfg, out);
    if (abl->parsed()) return cmd_ablate(ab, a_rows, a_ways, ablate_cfg, out);
    if (cache->parsed()) {
      const FeatureCache fc(cache_root_of(c_root, cache_cfg));
      if (ls->parsed()) {
        for (const auto& e : fc.list())
          out << e.extractor_name << '\t' << e.image_id << '\t' << e.bytes << '\t' << e.path.string() << '\n';
      } else if (clear->parsed()) {
        out << "removed " << fc.clear() << " entries\n";
      }
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace fss
