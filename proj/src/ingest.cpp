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

#include "fss/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "fss/coco_rle.hpp"
#include "fss/image_io.hpp"
#include "fss/rng.hpp"

namespace fss {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Segment {
  long annotation_id = 0;
  ClassId class_id = 0;
  std::vector<std::vector<double>> polygons;
  std::optional<coco::Rle> rle;
};

class CocoMaskSource final : public MaskSource {
 public:
  CocoMaskSource(int width, int height, std::vector<Segment> segments)
      : width_(width), height_(height), segments_(std::move(segments)) {}

  // Segments are painted in ascending annotation id; later ones win overlaps.
  MultiClassMask load() const override {
    MultiClassMask m(width_, height_, kBackground);
    for (const auto& seg : segments_) {
      BoolMask region(width_, height_, 0);
      if (seg.rle) {
        region = coco::rle_decode(*seg.rle);
      } else {
        for (const auto& poly : seg.polygons) {
          const BoolMask part = coco::rle_decode(coco::rle_from_polygon(poly, height_, width_));
          for (std::size_t i = 0; i < part.size(); ++i) region[i] |= part[i];
        }
      }
      for (std::size_t i = 0; i < region.size(); ++i) {
        if (region[i]) m[i] = seg.class_id;
      }
    }
    return m;
  }

 private:
  int width_, height_;
  std::vector<Segment> segments_;
};

std::string id_string(const json& v, const std::string& what) {
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_string()) return v.get<std::string>();
  throw DataError(what + ": id must be an integer or string");
}

// Numeric ids sort numerically ahead of non-numeric ones.
bool id_less(const std::string& a, const std::string& b) {
  auto numeric = [](const std::string& s) {
    return !s.empty() && s.size() < 19 && std::all_of(s.begin(), s.end(), ::isdigit);
  };
  const bool na = numeric(a), nb = numeric(b);
  if (na != nb) return na;
  if (na) {
    const long long x = std::stoll(a), y = std::stoll(b);
    if (x != y) return x < y;
  }
  return a < b;
}

std::string record_name(const json& rec, const char* kind, std::size_t index) {
  std::ostringstream os;
  os << kind << " record #" << index;
  if (rec.is_object() && rec.contains("id")) os << " (id " << rec["id"].dump() << ")";
  return os.str();
}

Segment parse_segment(const json& ann, const std::string& name, int img_w, int img_h) {
  Segment seg;
  if (!ann.contains("segmentation")) throw DataError(name + ": missing 'segmentation'");
  const json& s = ann["segmentation"];
  if (s.is_array()) {
    for (const auto& poly : s) {
      if (!poly.is_array() || poly.size() % 2 != 0)
        throw DataError(name + ": polygon must be a flat list of x,y pairs");
      std::vector<double> xy;
      xy.reserve(poly.size());
      for (const auto& v : poly) {
        if (!v.is_number()) throw DataError(name + ": non-numeric polygon coordinate");
        xy.push_back(v.get<double>());
      }
      seg.polygons.push_back(std::move(xy));
    }
    return seg;
  }
  if (!s.is_object() || !s.contains("size") || !s.contains("counts"))
    throw DataError(name + ": segmentation must be polygons or an RLE object");
  const auto& size = s["size"];
  if (!size.is_array() || size.size() != 2) throw DataError(name + ": RLE size must be [h, w]");
  const int h = size[0].get<int>(), w = size[1].get<int>();
  if (h != img_h || w != img_w) throw DataError(name + ": RLE size does not match image size");
  coco::Rle rle;
  if (s["counts"].is_string()) {
    rle = coco::rle_from_string(s["counts"].get<std::string>(), h, w);
  } else if (s["counts"].is_array()) {
    rle = coco::Rle{h, w, {}};
    for (const auto& c : s["counts"]) rle.counts.push_back(c.get<std::uint32_t>());
  } else {
    throw DataError(name + ": RLE counts must be a string or a list");
  }
  std::uint64_t total = 0;
  for (auto c : rle.counts) total += c;
  if (total != static_cast<std::uint64_t>(h) * w)
    throw DataError(name + ": RLE counts do not sum to h*w");
  seg.rle = std::move(rle);
  return seg;
}

}  // namespace

void DatasetIndex::add_image(AnnotatedImage image) {
  const std::string id = image.image.id;
  if (contains(id)) throw DataError("duplicate image id '" + id + "'");
  auto pos = std::upper_bound(images_.begin(), images_.end(), id,
                              [](const std::string& k, const AnnotatedImage& a) {
                                return id_less(k, a.image.id);
                              });
  images_.insert(pos, std::move(image));
}

void DatasetIndex::set_class_table(std::vector<CategoryInfo> table) {
  std::sort(table.begin(), table.end(),
            [](const CategoryInfo& a, const CategoryInfo& b) { return a.class_id < b.class_id; });
  class_table_ = std::move(table);
}

const AnnotatedImage* DatasetIndex::find(std::string_view id) const {
  const std::string key(id);
  auto it = std::lower_bound(images_.begin(), images_.end(), key,
                             [](const AnnotatedImage& a, const std::string& k) {
                               return id_less(a.image.id, k);
                             });
  if (it == images_.end() || it->image.id != key) return nullptr;
  return &*it;
}

const AnnotatedImage& DatasetIndex::image(std::string_view id) const {
  const AnnotatedImage* a = find(id);
  if (!a) throw DataError("unknown image id '" + std::string(id) + "'");
  return *a;
}

bool DatasetIndex::contains(std::string_view id) const { return find(id) != nullptr; }

DatasetIndex parse_dataset(std::string_view json_text, const fs::path& image_root) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("annotation file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw DataError("annotation file must hold a JSON object");
  auto section = [&](const char* key) {
    if (!doc.contains(key)) return json::array();
    if (!doc[key].is_array()) throw DataError(std::string("'") + key + "' must be a list");
    return doc[key];
  };
  const json images = section("images");
  const json annotations = section("annotations");
  const json categories = section("categories");

  // dense class ids follow ascending dataset category id
  std::vector<CategoryInfo> table;
  std::map<long, ClassId> cat_to_class;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    const auto& c = categories[i];
    const std::string name = record_name(c, "category", i);
    if (!c.is_object() || !c.contains("id") || !c["id"].is_number_integer())
      throw DataError(name + ": missing integer 'id'");
    CategoryInfo info;
    info.dataset_id = c["id"].get<long>();
    info.name = c.value("name", std::to_string(info.dataset_id));
    if (cat_to_class.count(info.dataset_id)) throw DataError(name + ": duplicate category id");
    cat_to_class[info.dataset_id] = 0;
    table.push_back(std::move(info));
  }
  std::sort(table.begin(), table.end(),
            [](const CategoryInfo& a, const CategoryInfo& b) { return a.dataset_id < b.dataset_id; });
  for (std::size_t i = 0; i < table.size(); ++i) {
    table[i].class_id = static_cast<ClassId>(i + 1);
    cat_to_class[table[i].dataset_id] = table[i].class_id;
  }

  struct ImageRecord {
    std::string id, file_name;
    int width = 0, height = 0;
  };
  std::map<std::string, ImageRecord> image_records;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& r = images[i];
    const std::string name = record_name(r, "image", i);
    if (!r.is_object() || !r.contains("id")) throw DataError(name + ": missing 'id'");
    ImageRecord rec;
    rec.id = id_string(r["id"], name);
    if (!r.contains("file_name") || !r["file_name"].is_string())
      throw DataError(name + ": missing 'file_name'");
    rec.file_name = r["file_name"].get<std::string>();
    if (!r.contains("width") || !r.contains("height") || !r["width"].is_number_integer() ||
        !r["height"].is_number_integer())
      throw DataError(name + ": missing integer 'width'/'height'");
    rec.width = r["width"].get<int>();
    rec.height = r["height"].get<int>();
    if (rec.width < 1 || rec.height < 1) throw DataError(name + ": non-positive image size");
    if (image_records.count(rec.id)) throw DataError(name + ": duplicate image id");
    image_records.emplace(rec.id, std::move(rec));
  }

  std::map<std::string, std::vector<Segment>> segments;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& a = annotations[i];
    const std::string name = record_name(a, "annotation", i);
    if (!a.is_object() || !a.contains("image_id") || !a.contains("category_id"))
      throw DataError(name + ": missing 'image_id' or 'category_id'");
    const std::string image_id = id_string(a["image_id"], name);
    auto img = image_records.find(image_id);
    if (img == image_records.end())
      throw DataError(name + ": references unknown image id " + image_id);
    if (!a["category_id"].is_number_integer()) throw DataError(name + ": non-integer category_id");
    auto cat = cat_to_class.find(a["category_id"].get<long>());
    if (cat == cat_to_class.end())
      throw DataError(name + ": references unknown category id " + a["category_id"].dump());
    Segment seg = parse_segment(a, name, img->second.width, img->second.height);
    seg.annotation_id = a.contains("id") && a["id"].is_number_integer() ? a["id"].get<long>()
                                                                         : static_cast<long>(i);
    seg.class_id = cat->second;
    segments[image_id].push_back(std::move(seg));
  }

  DatasetIndex index;
  index.set_class_table(std::move(table));
  for (auto& [id, rec] : image_records) {
    auto& segs = segments[id];
    std::stable_sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) {
      return a.annotation_id < b.annotation_id;
    });
    AnnotatedImage ai;
    ai.image.id = id;
    ai.image.width = rec.width;
    ai.image.height = rec.height;
    ai.image.pixel_source = std::make_shared<FileImageSource>(image_root / rec.file_name);
    std::set<ClassId> cls;
    for (const auto& s : segs) cls.insert(s.class_id);
    ai.classes.assign(cls.begin(), cls.end());
    ai.mask = std::make_shared<CocoMaskSource>(rec.width, rec.height, std::move(segs));
    index.add_image(std::move(ai));
  }
  return index;
}

DatasetIndex load_dataset(const fs::path& annotation_path, const fs::path& image_root) {
  std::ifstream in(annotation_path, std::ios::binary);
  if (!in) throw DataError("cannot open annotation file '" + annotation_path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str(), image_root);
}

FoldSpec make_fold(std::size_t num_classes, int fold_id) {
  if (fold_id < 0 || fold_id >= kNumFolds)
    throw UsageError("fold id must be in 0..3, got " + std::to_string(fold_id));
  FoldSpec f;
  f.fold_id = fold_id;
  if (num_classes == kCocoClasses) {
    for (int k = 0; k < 20; ++k) f.test_classes.push_back(4 * k + fold_id + 1);
    return f;
  }
  const std::size_t block = (num_classes + kNumFolds - 1) / kNumFolds;
  const std::size_t begin = block * fold_id;
  const std::size_t end = std::min(num_classes, begin + block);
  for (std::size_t c = begin; c < end; ++c) f.test_classes.push_back(static_cast<ClassId>(c + 1));
  return f;
}

FoldSpec make_fold(const DatasetIndex& dataset, int fold_id) {
  return make_fold(dataset.num_classes(), fold_id);
}

std::vector<Episode> sample_episodes(const DatasetIndex& dataset, const FoldSpec& fold, int n_way,
                                     int k_shot, std::size_t count, std::uint64_t seed) {
  if (n_way < 1 || k_shot < 1) throw UsageError("n_way and k_shot must be positive");
  if (static_cast<std::size_t>(n_way) > fold.test_classes.size())
    throw UsageError("n_way=" + std::to_string(n_way) + " exceeds the " +
                     std::to_string(fold.test_classes.size()) + " classes of fold " +
                     std::to_string(fold.fold_id));
  const auto& images = dataset.images();
  std::map<ClassId, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (ClassId c : images[i].classes) by_class[c].push_back(i);
  }

  std::vector<Episode> episodes;
  episodes.reserve(count);
  for (std::size_t e = 0; e < count; ++e) {
    Rng rng = Rng::derive(seed, e, "episode");
    Episode ep;
    ep.episode_id = e;
    ep.n_way = n_way;
    ep.k_shot = k_shot;
    ep.seed = seed;
    for (auto i : rng.sample_without_replacement(fold.test_classes.size(), n_way))
      ep.class_ids.push_back(fold.test_classes[i]);
    std::sort(ep.class_ids.begin(), ep.class_ids.end());

    std::vector<std::size_t> support_idx;
    for (ClassId c : ep.class_ids) {
      const auto& pool = by_class[c];
      if (pool.size() < static_cast<std::size_t>(k_shot))
        throw DataError("class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                        " images, fewer than k_shot=" + std::to_string(k_shot));
      for (auto j : rng.sample_without_replacement(pool.size(), k_shot)) {
        const std::size_t img = pool[j];
        ep.support_pairs.emplace_back(images[img].image.id, c);
        if (std::find(support_idx.begin(), support_idx.end(), img) == support_idx.end())
          support_idx.push_back(img);
      }
    }

    std::vector<std::size_t> query_pool;
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (std::find(support_idx.begin(), support_idx.end(), i) != support_idx.end()) continue;
      const bool any = std::any_of(ep.class_ids.begin(), ep.class_ids.end(),
                                   [&](ClassId c) { return images[i].has_class(c); });
      if (any) query_pool.push_back(i);
    }
    if (query_pool.empty())
      throw DataError("episode " + std::to_string(e) +
                      ": no query image outside the supports contains an episode class");
    ep.query = images[query_pool[rng.uniform_index(query_pool.size())]];
    for (auto i : support_idx) ep.supports.push_back(images[i]);
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

void write_manifest(std::ostream& out, const std::vector<Episode>& episodes) {
  json header = {{"format", "fss-episodes"},
                 {"version", 1},
                 {"query_rule", "at_least_one_episode_class"}};
  out << header.dump() << '\n';
  for (const auto& ep : episodes) {
    json support = json::array();
    for (const auto& [id, c] : ep.support_pairs) support.push_back(json::array({id, c}));
    json line = {{"episode_id", ep.episode_id},
                 {"class_ids", ep.class_ids},
                 {"support", support},
                 {"query_image_id", ep.query.image.id},
                 {"seed", ep.seed},
                 {"n_way", ep.n_way},
                 {"k_shot", ep.k_shot}};
    out << line.dump() << '\n';
  }
}

std::vector<Episode> read_manifest(std::istream& in, const DatasetIndex& dataset) {
  std::vector<Episode> episodes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    if (j.contains("format")) {
      if (j["format"] != "fss-episodes") throw DataError("not an episode manifest");
      continue;
    }
    try {
      Episode ep;
      ep.episode_id = j.at("episode_id").get<std::size_t>();
      ep.class_ids = j.at("class_ids").get<std::vector<ClassId>>();
      std::sort(ep.class_ids.begin(), ep.class_ids.end());
      ep.seed = j.at("seed").get<std::uint64_t>();
      ep.n_way = j.value("n_way", static_cast<int>(ep.class_ids.size()));
      std::set<std::string> seen;
      std::map<ClassId, int> per_class;
      for (const auto& p : j.at("support")) {
        const std::string id = p.at(0).get<std::string>();
        const ClassId c = p.at(1).get<ClassId>();
        ep.support_pairs.emplace_back(id, c);
        ++per_class[c];
        if (seen.insert(id).second) ep.supports.push_back(dataset.image(id));
      }
      ep.k_shot = j.value("k_shot", per_class.empty() ? 0 : per_class.begin()->second);
      ep.query = dataset.image(j.at("query_image_id").get<std::string>());
      episodes.push_back(std::move(ep));
    } catch (const json::exception& e) {
      throw DataError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return episodes;
}

}  // namespace fss
