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

// Interaction logs drawn from a known joint distribution over a small
// user x item grid. Synthetic user u is represented by a single history
// token, item id `num_items + u`, so a model over such data has
// `num_items + num_users` embedding rows and candidate items 0..num_items-1.

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "matchkit/data_pipeline.hpp"
#include "matchkit/types.hpp"

namespace matchkit {

struct SyntheticSpec {
    int num_users = 8;
    int num_items = 12;
    Eigen::MatrixXd joint;               // num_users x num_items, sums to 1
    std::vector<Eigen::MatrixXd> drift;  // per-month tables; overrides `joint` when non-empty
    std::size_t num_samples = 200000;
    int months = 1;
    int days_per_month = 30;
    /// Optional per-month sample counts (length `months`); otherwise samples
    /// are split evenly, the remainder going to the earliest months.
    std::vector<std::size_t> samples_per_month;

    /// Throws std::invalid_argument unless every table is nonnegative,
    /// correctly shaped and sums to 1 within 1e-12.
    void validate() const;
    const Eigen::MatrixXd& table_for_month(int month) const;
};

/// Exact counts of a sample and the distributions they induce.
struct EmpiricalTables {
    Eigen::MatrixXd counts;  // num_users x num_items
    std::int64_t total = 0;

    double joint(int u, int i) const { return counts(u, i) / double(total); }
    double user(int u) const { return counts.row(u).sum() / double(total); }
    double item(int i) const { return counts.col(i).sum() / double(total); }
};

struct SyntheticData {
    int num_users = 0;
    int num_items = 0;
    std::vector<InteractionRecord> log;      // user_id = u, item_id = i
    std::vector<TrainingExample> examples;   // pseudo-user {num_items + u}, log marginals of the full sample
    EmpiricalTables tables;
    std::vector<EmpiricalTables> monthly;
    MonthIndex month_index;

    ItemId history_token(int user) const { return num_items + user; }
    /// Total embedding rows a model over this data needs.
    Eigen::Index vocabulary_size() const { return num_items + num_users; }
};

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Empirical tables of an arbitrary subset of synthetic examples.
EmpiricalTables tabulate(const std::vector<TrainingExample>& examples, int num_users, int num_items);

/// 8 users x 12 items: a rank-3 positive random table with about a quarter of
/// the cells zeroed (every row and column keeps support), 2e5 draws.
SyntheticSpec default_synthetic_spec(std::uint64_t table_seed = 7);

/// Every cell equally likely.
SyntheticSpec uniform_synthetic_spec(int num_users, int num_items, std::size_t num_samples);

/// Users and items on a ring; each user's preference window rotates by
/// `shift_per_month` items every month. Month `months` is a small test month.
SyntheticSpec drifting_synthetic_spec(int months = 7, std::uint64_t table_seed = 11);

/// Zipf item popularity combined with ring-local user affinity; stationary
/// over `months` months with a small final test month.
SyntheticSpec skewed_synthetic_spec(int months = 7, std::uint64_t table_seed = 13);

}  // namespace matchkit
