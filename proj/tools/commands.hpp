// Copyright 2026 The matchkit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace matchkit::cli {

struct Options {
    std::filesystem::path config;
    std::optional<std::uint64_t> seed;
    std::filesystem::path checkpoint;
    std::optional<std::string> task;
    std::optional<std::size_t> top_n;
    bool verbose = false;
    std::filesystem::path export_embeddings;
    std::string query;
};

int cmd_prepare(const Options& options, std::ostream& out);
int cmd_train(const Options& options, std::ostream& out);
int cmd_eval(const Options& options, std::ostream& out);
int cmd_verify(const Options& options, std::ostream& out);
int cmd_retrieve(const Options& options, std::ostream& out);
int cmd_trace(const Options& options, std::ostream& out);

}  // namespace matchkit::cli
