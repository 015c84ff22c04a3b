// ----------------------------------------------------------------------------
// Copyright 2026 The ABC Attention Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ----------------------------------------------------------------------------

#pragma once

#include "abc/config.hpp"

#include <iosfwd>
#include <optional>
#include <string>

namespace abc::cli
{

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitUsage = 2;

/// Environment variable that overrides the config file's output directory.
inline constexpr const char* kOutputDirEnv = "ABC_OUTPUT_DIR";

struct DecodeConfig
{
    std::string checkpoint;
    Tokens prompt;
    std::size_t max_len = 32;
    DecodeMode mode = DecodeMode::streaming;
};

/// Everything one invocation needs, after the config file and flags are merged.
struct RunConfig
{
    std::string command;
    std::optional<std::uint64_t> seed;  ///< when set, replaces every section's seed
    std::string output_dir = ".";
    std::string suite;  ///< verify; empty runs every suite
    BenchSpec bench;
    ToyModelConfig model;
    TaskSpec task;
    TrainConfig train;
    DecodeConfig decode;
};

/// Strict parse of the whole document; unknown keys raise ConfigError.
RunConfig run_config_from_json(const Json& j);

/// Runs one command, writing reports to `out` and diagnostics to `err`.
/// Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace abc::cli
