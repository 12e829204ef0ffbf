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

#include <fstream>
#include <regex>
#include <sstream>

#include "fss/cli.hpp"
#include "fss/config.hpp"
#include "fss/crfa.hpp"
#include "fss/image_io.hpp"
#include "fss/synthetic.hpp"
#include "test_util.hpp"

namespace fss {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path last_dir(const std::string& out) {
  std::smatch m;
  std::regex re("wrote (.*)\n");
  std::string last;
  for (auto it = std::sregex_iterator(out.begin(), out.end(), re); it != std::sregex_iterator(); ++it)
    last = (*it)[1];
  return last;
}

// An 8-class world written to disk once for the whole suite.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("cli");
    SyntheticOptions o;
    o.num_classes = 8;
    o.num_images = 48;
    world_ = new SyntheticWorld(make_world(o));
    write_world(*world_, dir_->path() / "world");
  }
  static void TearDownTestSuite() {
    delete world_;
    delete dir_;
  }
  static std::string ann() { return (dir_->path() / "world" / "annotations.json").string(); }
  static fs::path root() { return dir_->path(); }
  static inline testing::TempDir* dir_ = nullptr;
  static inline SyntheticWorld* world_ = nullptr;
};

TEST(Config, TextRoundTripAndErrors) {
  RunConfig c;
  c.n_cluster = 7;
  c.filter.sim_threshold = 0.125;
  c.filter.switches.bgrp = false;
  c.pooling = Pooling::kPerEpisode;
  c.seed = 123;
  RunConfig back;
  apply_config_text(back, to_text(c));
  EXPECT_EQ(to_text(back), to_text(c));
  EXPECT_EQ(to_json(back), to_json(c));

  RunConfig x;
  EXPECT_THROW(set_config_value(x, "no.such.key", "1"), UsageError);
  EXPECT_THROW(set_config_value(x, "n_cluster", "five"), UsageError);
  try {
    apply_config_text(x, "# comment\nseed = 1\nbogus = 2\n");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos) << e.what();
  }
  RunConfig bad;
  bad.n_cluster = 0;
  EXPECT_THROW(validate(bad), UsageError);
  bad = RunConfig{};
  bad.filter.overlap_threshold = 1.5;
  EXPECT_THROW(validate(bad), UsageError);
  for (const auto& k : config_keys()) EXPECT_NE(to_text(RunConfig{}).find(k + " ="), std::string::npos) << k;
}

TEST(Config, OverrideSyntax) {
  RunConfig c;
  apply_override(c, "switches.inter_class=false");
  EXPECT_FALSE(c.filter.switches.inter_class);
  apply_override(c, "metric.pooling = per_episode");
  EXPECT_EQ(c.pooling, Pooling::kPerEpisode);
  EXPECT_THROW(apply_override(c, "n_cluster"), UsageError);
}

TEST(RunDir, NeverReused) {
  testing::TempDir d("runs");
  const auto a = make_run_dir(d.path(), 4);
  const auto b = make_run_dir(d.path(), 4);
  EXPECT_NE(a, b);
  EXPECT_TRUE(fs::is_directory(a));
  EXPECT_TRUE(fs::is_directory(b));
  EXPECT_TRUE(std::regex_match(a.filename().string(), std::regex(R"(\d{8}T\d{6}Z-seed4(-\d+)?)")));
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
  EXPECT_EQ(cli({"evaluate", "--annotations", "/nonexistent.json"}).code, kExitUsage);
  const auto r = cli({"evaluate", "--annotations", ann(), "--fold", "4", "--episodes", "1"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("fold"), std::string::npos);
  EXPECT_EQ(cli({"evaluate", "--annotations", ann(), "--episodes", "1", "--set", "n_cluster=0"}).code, kExitUsage);
  EXPECT_EQ(cli({"evaluate", "--annotations", ann(), "--episodes", "1", "--out-root", (root() / "r").string(),
                 "--set", "backend.features=nope"})
                .code,
            kExitBackend);
  const auto bad = root() / "bad.json";
  std::ofstream(bad) << "{\"images\": [";
  EXPECT_EQ(cli({"evaluate", "--annotations", bad.string(), "--episodes", "1"}).code, kExitData);
  // sampler errors surface verbatim
  const auto many = cli({"evaluate", "--annotations", ann(), "--n-way", "3", "--episodes", "1"});
  EXPECT_EQ(many.code, kExitUsage);
  EXPECT_NE(many.err.find("n_way"), std::string::npos) << many.err;
}

TEST_F(CliTest, ConfigPrecedence) {
  const auto cfg = root() / "prec.conf";
  std::ofstream(cfg) << "seed = 5\nn_cluster = 3\nworkers = 2\n";
  auto run = [&](std::vector<std::string> extra) {
    std::vector<std::string> a = {"evaluate", "--annotations", ann(), "--episodes", "1", "--out-root",
                                  (root() / "prec").string(), "--config", cfg.string()};
    a.insert(a.end(), extra.begin(), extra.end());
    const auto r = cli(a);
    EXPECT_EQ(r.code, 0) << r.err;
    RunConfig c;
    apply_config_file(c, last_dir(r.out) / "config.txt");
    return c;
  };
  const auto file_only = run({});
  EXPECT_EQ(file_only.seed, 5u);
  EXPECT_EQ(file_only.n_cluster, 3);
  EXPECT_EQ(file_only.prompt.grid_spacing, 16);  // default
  const auto with_set = run({"--set", "seed=6", "--set", "prompt.grid_spacing=12"});
  EXPECT_EQ(with_set.seed, 6u);
  EXPECT_EQ(with_set.prompt.grid_spacing, 12);
  const auto with_flag = run({"--set", "seed=6", "--seed", "7", "--workers", "1"});
  EXPECT_EQ(with_flag.seed, 7u);
  EXPECT_EQ(with_flag.workers, 1);
}

TEST_F(CliTest, BuildCrfaRoundTrip) {
  const auto& img = world_->images[0];
  const auto out = root() / "s.sacs";
  const auto r = cli({"build-crfa", "--annotations", ann(), "--support", img.id, "--out", out.string(),
                      "--seed", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto store = load_store(out);
  EXPECT_EQ(store.class_ids(), img.classes);
  EXPECT_NE(r.out.find("class " + std::to_string(img.classes[0]) + ": 5 vectors"), std::string::npos) << r.out;

  const auto ds = load_dataset(ann(), root() / "world");
  const std::vector<AnnotatedImage> sup = {ds.image(img.id)};
  EXPECT_EQ(build_store(sup, img.classes, 5, *make_feature_extractor("mock"), 3), store);

  EXPECT_EQ(cli({"build-crfa", "--support", img.id, "--out", out.string()}).code, kExitUsage);
  EXPECT_EQ(cli({"build-crfa", "--annotations", ann(), "--support", "9999", "--out", out.string()}).code,
            kExitData);
  EXPECT_EQ(cli({"build-crfa", "--annotations", ann(), "--support", img.id, "--out", out.string(), "--set",
                 "n_cluster=0"})
                .code,
            kExitUsage);
}

TEST_F(CliTest, PredictOutputs) {
  // support and query share a class
  const auto& sup = world_->images[0];
  const ClassId c = sup.classes.front();
  const SyntheticImage* query = nullptr;
  for (const auto& im : world_->images)
    if (im.id != sup.id && std::count(im.classes.begin(), im.classes.end(), c)) query = &im;
  ASSERT_NE(query, nullptr);
  const auto store = root() / "p.sacs";
  ASSERT_EQ(cli({"build-crfa", "--annotations", ann(), "--support", sup.id, "--classes", std::to_string(c),
                 "--out", store.string()})
                .code,
            0);
  const auto img = root() / "world" / "images" / (query->id + ".png");
  const auto r = cli({"predict", "--store", store.string(), "--image", img.string(), "--out-root",
                      (root() / "pred").string(), "--dump-crp"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto dir = last_dir(r.out);
  for (const char* f : {"config.txt", "labels.png", "overlay.png", "labels.json", "plan.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_TRUE(fs::exists(dir / "crp" / ("crp_" + std::to_string(c) + ".png")));
  std::size_t crp_files = 0;
  for (const auto& e : fs::directory_iterator(dir / "crp")) crp_files += e.path().filename().string().starts_with("crp_");
  EXPECT_EQ(crp_files, 1u);
  const auto counts = nlohmann::json::parse(slurp(dir / "labels.json"));
  ASSERT_TRUE(counts.contains(std::to_string(c)));
  std::size_t truth = 0;
  for (auto v : query->mask.data()) truth += v == c;
  EXPECT_NEAR(counts[std::to_string(c)].get<double>(), double(truth), 0.1 * truth);

  // a query with none of the store's classes
  Rgb8Image blank(40, 30);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) blank.set_rgb(x, y, world_->options.background_color);
  write_png_rgb(root() / "blank.png", blank);
  const auto b = cli({"predict", "--store", store.string(), "--image", (root() / "blank.png").string(),
                      "--out-root", (root() / "pred").string()});
  ASSERT_EQ(b.code, 0) << b.err;
  const auto bc = nlohmann::json::parse(slurp(last_dir(b.out) / "labels.json"));
  EXPECT_EQ(bc.size(), 1u);
  EXPECT_EQ(bc["0"], 1200);

  EXPECT_EQ(cli({"predict", "--store", store.string(), "--image", img.string(), "--set",
                 "switches.backbone_swap=true", "--out-root", (root() / "pred").string()})
                .code,
            kExitData);
}

TEST_F(CliTest, EvaluateIsDeterministic) {
  const std::vector<std::string> a = {"evaluate", "--annotations", ann(), "--fold", "0,1", "--n-way", "2",
                                      "--episodes", "5", "--seed", "1", "--out-root", (root() / "ev").string()};
  const auto r1 = cli(a);
  auto a2 = a;
  a2.insert(a2.end(), {"--workers", "3"});
  const auto r2 = cli(a2);
  ASSERT_EQ(r1.code, 0) << r1.err;
  ASSERT_EQ(r2.code, 0) << r2.err;
  EXPECT_NE(last_dir(r1.out), last_dir(r2.out));
  EXPECT_EQ(slurp(last_dir(r1.out) / "report.json"), slurp(last_dir(r2.out) / "report.json"));
  EXPECT_EQ(slurp(last_dir(r1.out) / "report.csv"), slurp(last_dir(r2.out) / "report.csv"));
  EXPECT_NE(r1.out.find("fold 1: mIoU"), std::string::npos);
}

TEST_F(CliTest, AblateAllHasFiveRows) {
  const auto r = cli({"ablate", "--annotations", ann(), "--ablate", "all", "--ways", "1,2", "--episodes", "2",
                      "--out-root", (root() / "ab").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(last_dir(r.out) / "ablation.json"));
  ASSERT_EQ(j["rows"].size(), 5u);
  std::vector<std::string> names;
  for (const auto& row : j["rows"]) names.push_back(row["row"]);
  EXPECT_EQ(names, (std::vector<std::string>{"w/o feature-backbone swap", "w/o inter-class filtering",
                                             "w/o backgd reg prop", "w/o intra-class filtering", "complete"}));
  EXPECT_EQ(cli({"ablate", "--annotations", ann(), "--ablate", "nope", "--episodes", "1"}).code, kExitUsage);
}

TEST_F(CliTest, CacheCommands) {
  const auto cache = root() / "cache";
  const auto r = cli({"evaluate", "--annotations", ann(), "--episodes", "2", "--set", "cache_root=" + cache.string(),
                      "--out-root", (root() / "cr").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ls = cli({"cache", "ls", "--root", cache.string()});
  ASSERT_EQ(ls.code, 0) << ls.err;
  const auto lines = std::count(ls.out.begin(), ls.out.end(), '\n');
  EXPECT_GT(lines, 0);
  const auto clr = cli({"cache", "clear", "--root", cache.string()});
  EXPECT_EQ(clr.out, "removed " + std::to_string(lines) + " entries\n");
  EXPECT_EQ(cli({"cache", "ls", "--root", cache.string()}).out, "");
  EXPECT_EQ(cli({"cache", "ls"}).code, kExitUsage);
}

}  // namespace
}  // namespace fss
