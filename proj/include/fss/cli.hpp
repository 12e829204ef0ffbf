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
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace fss {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitData = 3, kExitBackend = 4 };

/// Runs the command line (`args` excludes the program name). Commands:
/// build-crfa, predict, evaluate, ablate, cache {ls,clear}.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Creates <root>/<UTC timestamp>-seed<seed>, adding a numeric suffix rather
/// than reusing an existing directory.
std::filesystem::path make_run_dir(const std::filesystem::path& root, std::uint64_t seed);

/// Set by SIGINT while evaluate/ablate run; they stop and flush a partial report.
std::atomic<bool>& cancel_flag();

}  // namespace fss
