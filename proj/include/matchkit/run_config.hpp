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

// Run configuration: a flat `section.key = value` document, one entry per
// line, `#` starting a comment. Unknown or repeated keys are rejected.

#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "matchkit/evaluator.hpp"
#include "matchkit/losses.hpp"
#include "matchkit/model.hpp"
#include "matchkit/optima_verifier.hpp"
#include "matchkit/trainer.hpp"

namespace matchkit {

struct DataSettings {
    std::filesystem::path events;
    char delimiter = ',';
    bool has_header = false;
    int horizon_days = 7;
    std::size_t max_seq_len = 50;
    int months_total = 0;  // 0 = the last month present in the log
    int min_degree = 3;
};

struct ModelSettings {
    Eigen::Index dim = 64;
    EncoderConfig encoder;
    double temperature = 0.1;
};

struct EvalSettings {
    EvalTask task = EvalTask::ir;
    std::size_t num_negatives = 99;
    std::size_t top_n = 10;
    int popularity_window_days = 365;
    bool group_positives = false;
};

struct VerifySettings {
    VerifyConfig config;
    std::string spec = "default";  // default | uniform
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::uint64_t data_seed = 1;
};

struct RunConfig {
    DataSettings data;
    std::filesystem::path output_dir = "out";
    ModelSettings model;
    LossConfig loss;
    TrainMode mode = TrainMode::incremental;
    TrainConfig train;
    EvalSettings eval;
    VerifySettings verify;
    std::uint64_t seed = 0;

    /// Every key with its resolved value, one `key = value` line each, in a
    /// fixed order. Written next to every run's outputs.
    std::string to_text() const;
    /// Hash of the settings that shape a trained model (data, model, loss,
    /// train, seed); checkpoints carry it.
    std::uint64_t fingerprint() const;
};

/// Throws ParseError naming the line for syntax errors, unknown keys,
/// repeated keys and invalid values.
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::filesystem::path& path);

/// Every accepted key, in canonical order.
const std::vector<std::string>& run_config_keys();

}  // namespace matchkit
