/*
 * Copyright 2026 The TxV Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef TXV_CLI_H_
#define TXV_CLI_H_

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace txv::cli {

// Default experiment configuration. Every key a user config may set appears
// here; the value's JSON type is the key's type.
const nlohmann::json& DefaultConfig();

struct ExperimentConfig {
  nlohmann::json effective;  // defaults merged with user values
  nlohmann::json user;       // only what the file and --set provided
};

// Merges `config_path` (may be empty) and dotted `key=value` overrides over
// the defaults. Throws ConfigError on unknown keys or type mismatches.
ExperimentConfig LoadConfig(const std::filesystem::path& config_path,
                            const std::vector<std::string>& overrides,
                            std::optional<std::uint64_t> seed);

// Runs one command line (args[0] is the program name) and returns the exit
// code: 0 ok, 1 config, 2 data, 3 numerical. Data summaries go to `out`,
// logs and errors (prefixed "error[<category>]") to `err`.
int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace txv::cli

#endif  // TXV_CLI_H_
