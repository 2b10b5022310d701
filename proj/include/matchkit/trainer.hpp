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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "matchkit/checkpoint.hpp"
#include "matchkit/data_pipeline.hpp"
#include "matchkit/losses.hpp"
#include "matchkit/model.hpp"
#include "matchkit/optimizer.hpp"

namespace matchkit {

enum class TrainMode { incremental, shuffled };

TrainMode parse_train_mode(std::string_view name);
std::string_view to_string(TrainMode mode);

struct TrainConfig {
    int epochs_per_month = 1;
    std::size_t batch_size = 64;
    OptimizerConfig optimizer;
    std::uint64_t seed = 0;
    /// Months to train on, ascending. Empty means every month present in the data.
    std::vector<int> months;

    void validate(const LossConfig& loss) const;
};

struct MonthTrace {
    int month = 0;
    std::size_t examples = 0;
    std::uint64_t steps = 0;
    double mean_loss = 0.0;
    std::optional<double> metric;
};

struct TrainHooks {
    /// Called after each month (after the whole run in shuffled mode); the
    /// returned value is stored as that month's metric.
    std::function<double(const ModelParams<double>&, int month)> after_month;
    /// When set, `latest.umck` is written after every epoch and
    /// `month_XX.umck` (or `shuffled.umck`) after every month.
    std::filesystem::path checkpoint_dir;
    /// Stop once this many months have been completed.
    std::optional<std::uint32_t> stop_after_months;
    /// Stop once this many epochs have been completed, possibly mid-month.
    std::optional<std::uint32_t> stop_after_epochs;
    std::uint64_t fingerprint = 0;
    /// Continue from a saved state instead of from the given parameters.
    const Checkpoint* resume = nullptr;
};

struct TrainResult {
    ModelParams<double> params;
    OptimizerState<double> optimizer_state;
    TrainCursor cursor;
    std::vector<MonthTrace> trace;
    std::vector<double> step_losses;  // loss of every step, before its update
    std::vector<std::string> notices;
};

/// Trains month by month in ascending order, `epochs_per_month` passes each.
TrainResult train_incremental(const std::vector<TrainingExample>& train, const MonthIndex& months,
                              ModelParams<double> params, const EncoderConfig& encoder, const LossConfig& loss,
                              const TrainConfig& config, const TrainHooks& hooks = {});
TrainResult train_incremental(const std::vector<LabeledExample>& train, const MonthIndex& months,
                              ModelParams<double> params, const EncoderConfig& encoder, const LossConfig& loss,
                              const TrainConfig& config, const TrainHooks& hooks = {});

/// Same loop with the selected months pooled and reshuffled every epoch;
/// `epochs_per_month` passes over the pooled data.
TrainResult train_shuffled(const std::vector<TrainingExample>& train, const MonthIndex& months,
                           ModelParams<double> params, const EncoderConfig& encoder, const LossConfig& loss,
                           const TrainConfig& config, const TrainHooks& hooks = {});
TrainResult train_shuffled(const std::vector<LabeledExample>& train, const MonthIndex& months,
                           ModelParams<double> params, const EncoderConfig& encoder, const LossConfig& loss,
                           const TrainConfig& config, const TrainHooks& hooks = {});

/// Writes pseudo-user and item vectors as TSV: `kind\tkey\tv1\t...\tvd`.
void export_embeddings(const std::filesystem::path& path, const ModelParams<double>& params,
                       const EncoderConfig& encoder, const std::vector<std::vector<ItemId>>& users);

}  // namespace matchkit
