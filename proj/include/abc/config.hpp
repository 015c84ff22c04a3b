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

// JSON forms of the configuration structs. Parsing is strict: unknown keys
// and wrongly typed values raise ConfigError naming the offending key path.
// Missing keys keep their defaults.

#pragma once

#include "abc/bench.hpp"
#include "abc/model.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace abc
{

class ConfigError : public DomainError
{
public:
    ConfigError(std::string key_path, const std::string& what)
        : DomainError(key_path + ": " + what), key_path_(std::move(key_path))
    {
    }
    const std::string& key_path() const noexcept { return key_path_; }

private:
    std::string key_path_;
};

using Json = nlohmann::ordered_json;

Json to_json(const StrategySpec& s);
StrategySpec strategy_from_json(const Json& j, const std::string& path);

Json to_json(const ToyModelConfig& c);
ToyModelConfig model_config_from_json(const Json& j, const std::string& path = "model");

Json to_json(const TaskSpec& t);
TaskSpec task_from_json(const Json& j, const std::string& path = "task");

Json to_json(const TrainConfig& t);
TrainConfig train_config_from_json(const Json& j, const std::string& path = "train");

Json to_json(const BenchSpec& b);
BenchSpec bench_spec_from_json(const Json& j, const std::string& path = "bench");

/// Reads and parses a JSON file; syntax errors become ConfigError.
Json read_json_file(const std::string& path);

namespace detail
{

/// Walks one JSON object, remembering which keys were consumed.
class ObjectReader
{
public:
    ObjectReader(const Json& j, std::string path);

    void get(const char* key, unsigned long& out);
    void get(const char* key, unsigned long long& out);
    void get(const char* key, double& out);
    void get(const char* key, bool& out);
    void get(const char* key, std::string& out);
    void get(const char* key, std::vector<std::size_t>& out);
    const Json* child(const char* key);
    std::string key_path(const char* key) const { return path_ + "." + key; }
    /// Throws on the first key that was never consumed.
    void finish() const;

private:
    const Json& j_;
    std::string path_;
    std::vector<std::string> seen_;
};

}  // namespace detail

}  // namespace abc
