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

#include "fss/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace fss {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* what) {
  throw UsageError("config key " + std::string(key) + ": cannot parse '" + std::string(value) +
                   "' as " + what);
}

template <typename T>
T parse_int(std::string_view key, std::string_view v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  std::string s(v);
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    bad_value(key, v, "a number");
  }
  if (used != s.size()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

using Setter = std::function<void(RunConfig&, std::string_view, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"backend.features", [](RunConfig& c, auto, auto v) { c.features = std::string(v); }},
      {"backend.swap_features", [](RunConfig& c, auto, auto v) { c.swap_features = std::string(v); }},
      {"backend.segmenter", [](RunConfig& c, auto, auto v) { c.segmenter = std::string(v); }},
      {"n_cluster", [](RunConfig& c, auto k, auto v) { c.n_cluster = parse_int<int>(k, v); }},
      {"crfa.budget", [](RunConfig& c, auto k, auto v) { c.crfa_budget = parse_int<std::size_t>(k, v); }},
      {"prompt.grid_spacing", [](RunConfig& c, auto k, auto v) { c.prompt.grid_spacing = parse_int<int>(k, v); }},
      {"prompt.max_positives", [](RunConfig& c, auto k, auto v) { c.prompt.max_positives = parse_int<int>(k, v); }},
      {"prompt.pairs_per_positive",
       [](RunConfig& c, auto k, auto v) { c.prompt.pairs_per_positive = parse_int<int>(k, v); }},
      {"prompt.n_spatial", [](RunConfig& c, auto k, auto v) { c.prompt.n_spatial = parse_int<int>(k, v); }},
      {"filter.overlap_threshold",
       [](RunConfig& c, auto k, auto v) { c.filter.overlap_threshold = parse_double(k, v); }},
      {"filter.sim_threshold", [](RunConfig& c, auto k, auto v) { c.filter.sim_threshold = parse_double(k, v); }},
      {"switches.intra_class", [](RunConfig& c, auto k, auto v) { c.filter.switches.intra_class = parse_bool(k, v); }},
      {"switches.inter_class", [](RunConfig& c, auto k, auto v) { c.filter.switches.inter_class = parse_bool(k, v); }},
      {"switches.bgrp", [](RunConfig& c, auto k, auto v) { c.filter.switches.bgrp = parse_bool(k, v); }},
      {"switches.backbone_swap",
       [](RunConfig& c, auto k, auto v) { c.filter.switches.backbone_swap = parse_bool(k, v); }},
      {"seed", [](RunConfig& c, auto k, auto v) { c.seed = parse_int<std::uint64_t>(k, v); }},
      {"cache_root", [](RunConfig& c, auto, auto v) { c.cache_root = std::string(v); }},
      {"metric.pooling",
       [](RunConfig& c, auto k, auto v) {
         if (v == "pooled") c.pooling = Pooling::kPooled;
         else if (v == "per_episode") c.pooling = Pooling::kPerEpisode;
         else bad_value(k, v, "pooled|per_episode");
       }},
      {"workers", [](RunConfig& c, auto k, auto v) { c.workers = parse_int<int>(k, v); }},
  };
  return table;
}

const char* b(bool v) { return v ? "true" : "false"; }

std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw UsageError("unknown config key: " + std::string(key));
  it->second(cfg, key, value);
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw UsageError("expected key=value, got: " + std::string(assignment));
  set_config_value(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void apply_config_text(RunConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_override(cfg, line);
    } catch (const UsageError& e) {
      throw UsageError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str());
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw UsageError("invalid config: " + m); };
  if (c.n_cluster < 1) fail("n_cluster must be >= 1");
  if (c.crfa_budget < static_cast<std::size_t>(c.n_cluster)) fail("crfa.budget must be >= n_cluster");
  if (c.prompt.grid_spacing < 1) fail("prompt.grid_spacing must be >= 1");
  if (c.prompt.max_positives < 1) fail("prompt.max_positives must be >= 1");
  if (c.prompt.pairs_per_positive < 1) fail("prompt.pairs_per_positive must be >= 1");
  if (c.prompt.n_spatial < 1) fail("prompt.n_spatial must be >= 1");
  if (!(c.filter.overlap_threshold >= 0.0 && c.filter.overlap_threshold <= 1.0))
    fail("filter.overlap_threshold must lie in [0, 1]");
  if (!(c.filter.sim_threshold >= -1.0 && c.filter.sim_threshold <= 1.0))
    fail("filter.sim_threshold must lie in [-1, 1]");
  if (c.workers < 1) fail("workers must be >= 1");
  if (c.features.empty() || c.segmenter.empty() || c.swap_features.empty()) fail("backend names must be non-empty");
}

std::string to_text(const RunConfig& c) {
  std::ostringstream o;
  o << "backend.features = " << c.features << "\n"
    << "backend.swap_features = " << c.swap_features << "\n"
    << "backend.segmenter = " << c.segmenter << "\n"
    << "n_cluster = " << c.n_cluster << "\n"
    << "crfa.budget = " << c.crfa_budget << "\n"
    << "prompt.grid_spacing = " << c.prompt.grid_spacing << "\n"
    << "prompt.max_positives = " << c.prompt.max_positives << "\n"
    << "prompt.pairs_per_positive = " << c.prompt.pairs_per_positive << "\n"
    << "prompt.n_spatial = " << c.prompt.n_spatial << "\n"
    << "filter.overlap_threshold = " << shortest(c.filter.overlap_threshold) << "\n"
    << "filter.sim_threshold = " << shortest(c.filter.sim_threshold) << "\n"
    << "switches.intra_class = " << b(c.filter.switches.intra_class) << "\n"
    << "switches.inter_class = " << b(c.filter.switches.inter_class) << "\n"
    << "switches.bgrp = " << b(c.filter.switches.bgrp) << "\n"
    << "switches.backbone_swap = " << b(c.filter.switches.backbone_swap) << "\n"
    << "seed = " << c.seed << "\n"
    << "cache_root = " << c.cache_root << "\n"
    << "metric.pooling = " << (c.pooling == Pooling::kPooled ? "pooled" : "per_episode") << "\n"
    << "workers = " << c.workers << "\n";
  return o.str();
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  // workers and cache_root do not affect results and stay out of reports
  j["backend.features"] = c.features;
  j["backend.swap_features"] = c.swap_features;
  j["backend.segmenter"] = c.segmenter;
  j["n_cluster"] = c.n_cluster;
  j["crfa.budget"] = c.crfa_budget;
  j["prompt.grid_spacing"] = c.prompt.grid_spacing;
  j["prompt.max_positives"] = c.prompt.max_positives;
  j["prompt.pairs_per_positive"] = c.prompt.pairs_per_positive;
  j["prompt.n_spatial"] = c.prompt.n_spatial;
  j["filter.overlap_threshold"] = c.filter.overlap_threshold;
  j["filter.sim_threshold"] = c.filter.sim_threshold;
  j["switches.intra_class"] = c.filter.switches.intra_class;
  j["switches.inter_class"] = c.filter.switches.inter_class;
  j["switches.bgrp"] = c.filter.switches.bgrp;
  j["switches.backbone_swap"] = c.filter.switches.backbone_swap;
  j["seed"] = c.seed;
  j["metric.pooling"] = c.pooling == Pooling::kPooled ? "pooled" : "per_episode";
  return j;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> k;
  for (const auto& [name, f] : setters()) k.push_back(name);
  return k;
}

}  // namespace fss
