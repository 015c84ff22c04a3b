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

// Self-checks runnable from the command line. Each suite draws random
// instances, compares the library against a direct computation and reports
// the worst deviation seen.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace abc
{

struct SuiteResult
{
    std::string name;
    bool passed = false;
    double worst = 0.0;  ///< largest deviation over all instances
    double ratio = 0.0;  ///< largest deviation divided by its tolerance; passing means <= 1
    std::size_t instances = 0;
    double seconds = 0.0;
};

const std::vector<std::string_view>& suite_names();

/// Throws DomainError for an unknown suite name.
SuiteResult run_suite(std::string_view name, std::uint64_t seed = 0);

}  // namespace abc
