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

// Trains loss configurations on synthetic data and compares the learned
// score table with the log-probability functional each one should converge to.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "matchkit/losses.hpp"
#include "matchkit/model.hpp"
#include "matchkit/optimizer.hpp"
#include "matchkit/synthetic.hpp"

namespace matchkit {

struct VerifyConfig {
    Eigen::Index dim = 8;
    double temperature = 0.05;
    int epochs = 4000;
    std::size_t batch_size = 0;  // 0 = the whole data set in one batch
    OptimizerConfig optimizer{OptimizerKind::adam, 3e-3};
    int num_sampled = 5;
    Proposal ssm_proposal = Proposal::marginal;
    int negative_ratio = 1;
    double min_spearman = 0.95;
    double max_residual = 0.25;
    double min_group_spearman = 0.9;
};

/// Offsets a loss leaves undetermined at its optimum: one-sided losses only
/// fix each row (or column) of phi up to its own additive term.
enum class Gauge { global, per_user, per_item };

Gauge gauge_of(const LossConfig& loss);
std::string_view to_string(Gauge gauge);

struct OptimumReport {
    std::string config;
    std::uint64_t seed = 0;
    OptimumTarget target = OptimumTarget::joint;
    Gauge gauge = Gauge::global;
    double constant = 0.0;  // mean of phi - target over observed cells
    // Gated statistics: phi - target is offset within each gauge group (one
    // group under the global gauge), and ranks compare group-centered values.
    double residual = 0.0;
    double spearman = 0.0;
    // The same two statistics under a single global constant.
    double global_residual = 0.0;
    double global_spearman = 0.0;
    std::size_t observed = 0;
    std::size_t excluded = 0;     // grid cells never observed
    double target_range = 0.0;    // max - min target over observed cells
    bool range_exceeded = false;  // target_range > 2 / temperature
    bool passed = false;
    double final_loss = 0.0;
    Eigen::MatrixXd phi;  // learned scores, num_users x num_items
};

/// Learned score table phi(u, i) over the synthetic grid.
Eigen::MatrixXd score_table(const SyntheticData& data, const ModelParams<double>& params,
                            const EncoderConfig& encoder = {});

/// log of the target functional on every observed cell; unobserved cells are NaN.
Eigen::MatrixXd target_table(const EmpiricalTables& tables, OptimumTarget target);

/// Compares `phi` with the target implied by `loss` on the cells observed in
/// `tables`. Gates come from `config`.
OptimumReport check_optimum(const LossConfig& loss, const Eigen::MatrixXd& phi, const EmpiricalTables& tables,
                            const VerifyConfig& config, double temperature);

/// Trains one configuration on synthetic data (full batch unless configured
/// otherwise) and checks its optimum.
OptimumReport train_and_check(const std::string& preset, const SyntheticData& data, std::uint64_t seed,
                              const VerifyConfig& config);

/// One report per (preset, seed), presets in `loss_preset_names()` order.
std::vector<OptimumReport> run_table_sweep(const SyntheticSpec& spec, const std::vector<std::uint64_t>& seeds,
                                           const VerifyConfig& config, std::uint64_t data_seed = 1);

/// Configurations predicted to share an optimum.
std::vector<std::vector<std::string>> equal_optimum_groups();

struct AgreementReport {
    std::string first;
    std::string second;
    std::uint64_t seed = 0;
    double spearman = 0.0;
    bool passed = false;
};

/// Pairwise rank agreement of phi tables within each equal-optimum group,
/// over cells observed in `tables`. Tables are first centered per row and/or
/// column when either member of the pair leaves those offsets free.
std::vector<AgreementReport> group_agreement(const std::vector<OptimumReport>& reports,
                                             const EmpiricalTables& tables, double min_spearman);

/// Tab-separated sweep report with a header row.
void write_sweep_report(std::ostream& out, const std::vector<OptimumReport>& reports,
                        const std::vector<AgreementReport>& agreement);

}  // namespace matchkit
