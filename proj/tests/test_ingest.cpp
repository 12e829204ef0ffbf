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

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

#include <unistd.h>

#include "fss/coco_rle.hpp"
#include "fss/ingest.hpp"
#include "fss/rng.hpp"
#include "fss/synthetic.hpp"

namespace fss {
namespace {

const std::string kToy = std::string(FSS_TEST_DATA) + "/toy_coco.json";

LabelGrid grid_of(const std::vector<std::vector<int>>& rows) {
  LabelGrid g(static_cast<int>(rows[0].size()), static_cast<int>(rows.size()));
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) g(x, y) = rows[y][x];
  return g;
}

TEST(LoadDataset, ToyFixture) {
  const auto ds = load_dataset(kToy, FSS_TEST_DATA);
  ASSERT_EQ(ds.images().size(), 3u);
  EXPECT_EQ(ds.num_classes(), 2u);
  // numeric id order, independent of file order
  EXPECT_EQ(ds.images()[0].image.id, "3");
  EXPECT_EQ(ds.images()[1].image.id, "7");
  EXPECT_EQ(ds.images()[2].image.id, "11");
  // dense ids follow ascending category id: 5 -> 1, 18 -> 2
  EXPECT_EQ(ds.class_table()[0].dataset_id, 5);
  EXPECT_EQ(ds.class_table()[0].class_id, 1);
  EXPECT_EQ(ds.class_table()[1].name, "dog");
}

// Expected masks were produced with the reference cocoapi implementation.
TEST(LoadDataset, ToyMasksMatchReferenceDecoder) {
  const auto ds = load_dataset(kToy, FSS_TEST_DATA);
  EXPECT_EQ(ds.image("3").load_mask(), grid_of({{0, 0, 0, 0, 0, 0, 0, 0},
                                               {0, 1, 1, 1, 1, 1, 1, 0},
                                               {0, 1, 1, 1, 1, 1, 0, 0},
                                               {0, 1, 1, 1, 1, 1, 0, 0},
                                               {0, 0, 1, 1, 1, 1, 0, 0},
                                               {0, 0, 0, 0, 0, 0, 0, 0}}));
  EXPECT_EQ(ds.image("7").load_mask(),
            grid_of({{0, 0, 0, 0, 0}, {0, 2, 2, 2, 0}, {0, 2, 2, 2, 0}, {0, 0, 0, 0, 0}}));
  // annotations paint in ascending annotation id, so class 2 wins the overlap
  EXPECT_EQ(ds.image("11").load_mask(), grid_of({{1, 1, 1, 1, 0, 0},
                                                {1, 1, 1, 1, 0, 0},
                                                {1, 1, 2, 2, 2, 2},
                                                {1, 1, 2, 2, 2, 2},
                                                {0, 0, 2, 2, 2, 2}}));
  EXPECT_EQ(ds.image("11").classes, (std::vector<ClassId>{1, 2}));
}

TEST(LoadDataset, EmptyAnnotationList) {
  const auto ds = parse_dataset(R"({"images": [], "annotations": [], "categories": []})", ".");
  EXPECT_TRUE(ds.images().empty());
}

TEST(LoadDataset, UnknownImageIdIsNamed) {
  const char* doc = R"({"images": [{"id": 1, "file_name": "a.png", "width": 2, "height": 2}],
    "categories": [{"id": 1}],
    "annotations": [{"id": 9, "image_id": 77, "category_id": 1, "segmentation": [[0,0,1,0,1,1]]}]})";
  try {
    parse_dataset(doc, ".");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("77"), std::string::npos) << e.what();
  }
}

TEST(LoadDataset, MalformedRecordIsNamed) {
  const char* doc = R"({"images": [{"id": 1, "file_name": "a.png", "width": 2, "height": 2}],
    "categories": [{"id": 1}],
    "annotations": [{"id": 5, "image_id": 1, "category_id": 1}]})";
  try {
    parse_dataset(doc, ".");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("annotation"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("5"), std::string::npos) << e.what();
  }
}

TEST(LoadDataset, RecordOrderDoesNotMatter) {
  const char* a = R"({"images": [{"id": 2, "file_name": "b", "width": 3, "height": 1},
                                 {"id": 1, "file_name": "a", "width": 3, "height": 1}],
    "categories": [{"id": 9}, {"id": 4}],
    "annotations": [{"id": 1, "image_id": 1, "category_id": 9, "segmentation": {"size": [1,3], "counts": [1,2]}},
                    {"id": 2, "image_id": 1, "category_id": 4, "segmentation": {"size": [1,3], "counts": [2,1]}}]})";
  const char* b = R"({"categories": [{"id": 4}, {"id": 9}],
    "annotations": [{"id": 2, "image_id": 1, "category_id": 4, "segmentation": {"size": [1,3], "counts": [2,1]}},
                    {"id": 1, "image_id": 1, "category_id": 9, "segmentation": {"size": [1,3], "counts": [1,2]}}],
    "images": [{"id": 1, "file_name": "a", "width": 3, "height": 1},
               {"id": 2, "file_name": "b", "width": 3, "height": 1}]})";
  const auto da = parse_dataset(a, "."), db = parse_dataset(b, ".");
  ASSERT_EQ(da.images().size(), db.images().size());
  for (std::size_t i = 0; i < da.images().size(); ++i) {
    EXPECT_EQ(da.images()[i].image.id, db.images()[i].image.id);
    EXPECT_EQ(da.images()[i].load_mask(), db.images()[i].load_mask());
  }
  EXPECT_EQ(da.image("1").load_mask(), grid_of({{0, 2, 1}}));
}

TEST(LoadDataset, MissingImageFileFailsOnlyAtPixelAccess) {
  const auto ds = load_dataset(kToy, "/nonexistent");
  EXPECT_THROW(ds.image("3").image.load(), DataError);
}

// Reference values from pycocotools (frPyObjects / encode).
TEST(CocoRle, PolygonMatchesReference) {
  struct Case {
    std::vector<double> xy;
    int h, w;
    const char* counts;
    std::uint64_t area;
  };
  const std::vector<Case> cases = {
      {{10.5, 5.2, 40.1, 8.9, 35.7, 30.3, 12.2, 25.0},
       32, 48, "U;;e09HO01O000000001O01O0001O0000000010O000001O000001L3K5K5Kl7", 552},
      {{0, 0, 47.9, 0, 47.9, 31.9, 0, 31.9}, 32, 48, "0P`1", 1536},
      {{3.3, 3.3, 20, 4, 11, 18.6}, 24, 24, "S32f02O1N2N2N2N2N1ON2N2O1N2O1N2N2Om2", 116},
  };
  for (const auto& c : cases) {
    const auto rle = coco::rle_from_polygon(c.xy, c.h, c.w);
    EXPECT_EQ(coco::rle_to_string(rle), c.counts);
    EXPECT_EQ(coco::rle_area(rle), c.area);
  }
}

TEST(CocoRle, EncodeMatchesReference) {
  const std::vector<std::vector<int>> rows = {
      {1, 1, 0, 1, 1, 1, 0, 0, 0}, {0, 0, 0, 1, 0, 1, 1, 0, 1}, {0, 0, 0, 1, 0, 0, 1, 1, 0},
      {0, 0, 1, 1, 1, 1, 1, 0, 0}, {1, 1, 0, 0, 0, 0, 0, 0, 0}, {1, 1, 0, 0, 0, 0, 0, 1, 0},
      {0, 0, 1, 1, 1, 1, 0, 1, 0}};
  BoolMask m(9, 7);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 9; ++x) m(x, y) = static_cast<std::uint8_t>(rows[y][x]);
  const auto rle = coco::rle_encode(m);
  EXPECT_EQ(coco::rle_to_string(rle), "0131NO211ON40M0O02ON10O24NM1OO4");
  EXPECT_EQ(coco::rle_decode(coco::rle_from_string("0131NO211ON40M0O02ON10O24NM1OO4", 7, 9)), m);

  BoolMask big(60, 50, 0);
  for (int y = 5; y < 45; ++y)
    for (int x = 7; x < 52; ++x) big(x, y) = 1;
  for (int y = 20; y < 30; ++y)
    for (int x = 0; x < 60; ++x) big(x, y) = 1;
  const auto br = coco::rle_encode(big);
  EXPECT_EQ(coco::rle_to_string(br),
            "d0:X100000000000An0A0000000000000000000000000000000000000000000000000000000000000000000000000"
            "00000000000000?RO?0000000000000\\O");
  EXPECT_EQ(coco::rle_area(br), 1950u);
}

TEST(CocoRle, StringRoundTripOnRandomMasks) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const int w = 1 + static_cast<int>(rng.uniform_index(40)), h = 1 + static_cast<int>(rng.uniform_index(40));
    BoolMask m(w, h);
    const double p = rng.uniform01();
    for (auto& v : m.data()) v = rng.uniform01() < p;
    const auto rle = coco::rle_encode(m);
    const auto back = coco::rle_from_string(coco::rle_to_string(rle), h, w);
    EXPECT_EQ(back, rle);
    EXPECT_EQ(coco::rle_decode(back), m);
    EXPECT_EQ(coco::rle_area(rle), count_true(m));
  }
}

TEST(Folds, InterleavedSplitFor80Classes) {
  const auto f0 = make_fold(80, 0);
  ASSERT_EQ(f0.test_classes.size(), 20u);
  for (int k = 0; k < 20; ++k) EXPECT_EQ(f0.test_classes[k], 4 * k + 1);
  EXPECT_EQ(f0.test_classes.back(), 77);
}

TEST(Folds, PartitionProperty) {
  for (std::size_t n : {8u, 13u, 80u, 81u, 3u}) {
    std::set<ClassId> all;
    std::size_t total = 0;
    for (int f = 0; f < kNumFolds; ++f) {
      const auto fold = make_fold(n, f);
      total += fold.test_classes.size();
      all.insert(fold.test_classes.begin(), fold.test_classes.end());
    }
    EXPECT_EQ(total, n) << n;
    EXPECT_EQ(all.size(), n) << n;
    EXPECT_EQ(*all.begin(), 1);
    EXPECT_EQ(*all.rbegin(), static_cast<ClassId>(n));
  }
}

TEST(Folds, GenericCountUsesCeilBlocks) {
  EXPECT_EQ(make_fold(8, 0).test_classes, (std::vector<ClassId>{1, 2}));
  EXPECT_EQ(make_fold(13, 3).test_classes, (std::vector<ClassId>{13}));
}

TEST(Folds, BadFoldId) {
  EXPECT_THROW(make_fold(80, 5), UsageError);
  EXPECT_THROW(make_fold(80, -1), UsageError);
  EXPECT_THROW(make_fold(80, 4), UsageError);
}

// Re-validates every sampler postcondition independently.
void check_episodes(const DatasetIndex& ds, const FoldSpec& fold, int n_way, int k_shot,
                    const std::vector<Episode>& eps, std::size_t count) {
  ASSERT_EQ(eps.size(), count);
  for (const auto& e : eps) {
    ASSERT_EQ(e.class_ids.size(), static_cast<std::size_t>(n_way));
    EXPECT_TRUE(std::is_sorted(e.class_ids.begin(), e.class_ids.end()));
    EXPECT_EQ(std::set<ClassId>(e.class_ids.begin(), e.class_ids.end()).size(), e.class_ids.size());
    std::set<std::string> support_ids;
    for (const auto& s : e.supports) support_ids.insert(s.image.id);
    EXPECT_EQ(support_ids.size(), e.supports.size());
    for (ClassId c : e.class_ids) {
      EXPECT_NE(std::find(fold.test_classes.begin(), fold.test_classes.end(), c), fold.test_classes.end());
      std::set<std::string> drawn;
      for (const auto& [id, cc] : e.support_pairs) {
        if (cc != c) continue;
        EXPECT_TRUE(drawn.insert(id).second) << "duplicate support for class " << c;
        EXPECT_TRUE(ds.image(id).has_class(c));
        EXPECT_TRUE(support_ids.count(id));
      }
      EXPECT_EQ(drawn.size(), static_cast<std::size_t>(k_shot));
    }
    EXPECT_FALSE(support_ids.count(e.query.image.id));
    bool has = false;
    for (ClassId c : e.class_ids) has = has || e.query.has_class(c);
    EXPECT_TRUE(has);
  }
}

TEST(Sampler, ToyDatasetPostconditions) {
  const auto ds = load_dataset(kToy, FSS_TEST_DATA);
  FoldSpec fold{0, {1, 2}};
  const auto eps = sample_episodes(ds, fold, 2, 1, 5, 9);
  check_episodes(ds, fold, 2, 1, eps, 5);
}

TEST(Sampler, SyntheticWorldPostconditionsAndDeterminism) {
  SyntheticOptions o;
  o.num_images = 200;
  const auto ds = to_dataset(make_world(o));
  for (int f = 0; f < 4; ++f) {
    const auto fold = make_fold(ds, f);
    const auto a = sample_episodes(ds, fold, 5, 2, 30, 7);
    check_episodes(ds, fold, 5, 2, a, 30);
    const auto b = sample_episodes(ds, fold, 5, 2, 30, 7);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].class_ids, b[i].class_ids);
      EXPECT_EQ(a[i].support_pairs, b[i].support_pairs);
      EXPECT_EQ(a[i].query.image.id, b[i].query.image.id);
    }
  }
}

TEST(Sampler, TooManyWays) {
  const auto ds = to_dataset(make_world({}));
  EXPECT_THROW(sample_episodes(ds, make_fold(ds, 0), 21, 1, 1, 0), UsageError);
}

TEST(Sampler, TooFewSupportImagesNamesTheClass) {
  const auto ds = load_dataset(kToy, FSS_TEST_DATA);
  FoldSpec fold{0, {1, 2}};
  try {
    sample_episodes(ds, fold, 1, 5, 3, 1);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("class"), std::string::npos) << e.what();
  }
}

TEST(Manifest, RoundTrip) {
  const auto ds = to_dataset(make_world({}));
  const auto eps = sample_episodes(ds, make_fold(ds, 2), 3, 1, 12, 5);
  std::stringstream ss;
  write_manifest(ss, eps);
  const std::string text = ss.str();
  EXPECT_EQ(text.substr(0, text.find('\n')),
            R"({"format":"fss-episodes","query_rule":"at_least_one_episode_class","version":1})");
  const auto back = read_manifest(ss, ds);
  ASSERT_EQ(back.size(), eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    EXPECT_EQ(back[i].episode_id, eps[i].episode_id);
    EXPECT_EQ(back[i].class_ids, eps[i].class_ids);
    EXPECT_EQ(back[i].support_pairs, eps[i].support_pairs);
    EXPECT_EQ(back[i].query.image.id, eps[i].query.image.id);
    EXPECT_EQ(back[i].seed, eps[i].seed);
  }
  std::stringstream again;
  write_manifest(again, back);
  EXPECT_EQ(again.str(), text);
}

TEST(SyntheticWorld, WrittenFilesReloadIdentically) {
  SyntheticOptions o;
  o.num_images = 12;
  o.num_classes = 8;
  const auto w = make_world(o);
  const auto dir = std::filesystem::temp_directory_path() / ("fss-world-" + std::to_string(::getpid()));
  write_world(w, dir);
  const auto ds = load_dataset(dir / "annotations.json", dir);
  ASSERT_EQ(ds.images().size(), 12u);
  for (const auto& im : w.images) {
    const auto& a = ds.image(im.id);
    EXPECT_EQ(a.load_mask(), im.mask);
    EXPECT_EQ(a.classes, im.classes);
    EXPECT_EQ(a.image.load().pixels, im.pixels.pixels);
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace fss
