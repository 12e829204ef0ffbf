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

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fss/arbitration.hpp"
#include "fss/crfa.hpp"
#include "fss/prompting.hpp"

namespace fss {

enum class Pooling { kPooled, kPerEpisode };

/// Every tunable of a run. Text form is one `key = value` per line with
/// dotted keys; `#` starts a comment.
struct RunConfig {
  std::string features = "mock";       // backend.features
  std::string swap_features = "mock-sam";  // backend.swap_features
  std::string segmenter = "mock";      // backend.segmenter
  int n_cluster = 5;
  std::size_t crfa_budget = kDefaultBudget;
  PromptParams prompt;
  FilterParams filter;  // includes the ablation switches
  std::uint64_t seed = 0;
  std::string cache_root;  // empty disables the embedding cache
  Pooling pooling = Pooling::kPooled;
  int workers = 1;
};

/// Sets one key. Throws UsageError for unknown keys or unparsable values.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

/// Applies every line of a config document on top of `cfg`.
void apply_config_text(RunConfig& cfg, std::string_view text);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Applies a `key=value` override.
void apply_override(RunConfig& cfg, std::string_view assignment);

/// Range checks. Throws UsageError.
void validate(const RunConfig& cfg);

/// Canonical text form; apply_config_text(to_text(c)) reproduces c.
std::string to_text(const RunConfig& cfg);
nlohmann::json to_json(const RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace fss
