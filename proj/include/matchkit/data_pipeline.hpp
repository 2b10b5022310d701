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

// Raw logs to windowed examples: ingestion, next-n-day windowing, monthly
// splits, degree filtering, empirical marginals and Bernoulli negatives.

#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "matchkit/types.hpp"

namespace matchkit {

/// Dense id assignment for opaque tokens, in order of first appearance.
class Vocabulary {
public:
    std::int32_t intern(std::string_view token);
    std::optional<std::int32_t> find(std::string_view token) const;
    const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int32_t> index_;
};

/// Maps day indices to 1-based month ordinals. Calendar mode is used when the
/// log carried ISO dates; plain integer days fall into fixed 30-day months.
class MonthCalendar {
public:
    MonthCalendar() = default;
    /// `epoch_days` is the civil day count (days since 1970-01-01) of day 0.
    static MonthCalendar calendar(std::int64_t epoch_days) { return MonthCalendar(epoch_days); }
    static MonthCalendar fixed(int days_per_month = 30) {
        MonthCalendar c;
        c.days_per_month_ = days_per_month;
        return c;
    }

    int month_of(Day day) const;
    /// First day index belonging to `month`.
    Day first_day(int month) const;
    bool is_calendar() const noexcept { return epoch_days_.has_value(); }
    std::optional<std::int64_t> epoch_days() const noexcept { return epoch_days_; }
    int days_per_month() const noexcept { return days_per_month_; }

private:
    explicit MonthCalendar(std::int64_t epoch_days) : epoch_days_(epoch_days) {}

    std::optional<std::int64_t> epoch_days_;
    int days_per_month_ = 30;
};

struct IngestOptions {
    char delimiter = ',';
    bool skip_header = false;
};

struct IngestResult {
    std::vector<InteractionRecord> records;  // sorted by (user, day), stable
    Vocabulary users;
    Vocabulary items;
    MonthCalendar calendar;
};

/// Parses `user,item,date` lines; date is `YYYY-MM-DD` or a non-negative
/// integer day. ISO dates are rebased so the earliest event is day 0.
/// Throws ParseError naming the 1-based line on malformed input.
IngestResult ingest_logs(std::istream& source, const IngestOptions& options = {});

/// One example per target purchase for every purchase day t of a user that has
/// earlier history; targets are the purchases in [t, t + horizon_days).
std::vector<TrainingExample> build_examples(const std::vector<InteractionRecord>& records,
                                            int horizon_days, std::size_t max_seq_len);

/// Day to month ordinal for the days present in a dataset; days outside the
/// table fall back to the calendar.
class MonthIndex {
public:
    MonthIndex() = default;
    MonthIndex(const MonthCalendar& calendar, const std::vector<TrainingExample>& examples);

    int month_of(Day day) const;
    const std::map<Day, int>& entries() const noexcept { return months_; }
    const MonthCalendar& calendar() const noexcept { return calendar_; }
    /// Sorted distinct months with at least one day.
    std::vector<int> months() const;

private:
    MonthCalendar calendar_;
    std::map<Day, int> months_;
};

struct DatasetSplit {
    std::vector<TrainingExample> train;
    std::vector<TrainingExample> validation;
    std::vector<TrainingExample> test;
    MonthIndex month_index;
    int months_total = 0;
    std::vector<std::string> warnings;
};

/// Train (0, T-1], validation (T-2, T-1], test (T-1, T] in months. The
/// validation month is also part of train. Examples past month T are dropped.
DatasetSplit split_by_time(const std::vector<TrainingExample>& examples,
                           const MonthCalendar& calendar, int months_total);

/// Repeatedly drops examples whose raw user or target item has fewer than
/// `min_degree` examples in the same split, until every survivor passes.
DatasetSplit filter_sparse(const DatasetSplit& split, int min_degree = 3);
std::vector<TrainingExample> filter_sparse(const std::vector<TrainingExample>& examples, int min_degree);

struct EmpiricalMarginals {
    std::unordered_map<std::string, double> log_p_user;  // keyed by sequence_key
    std::unordered_map<ItemId, double> log_p_item;
    std::unordered_map<std::string, std::int64_t> count_user;
    std::unordered_map<ItemId, std::int64_t> count_item;
    std::int64_t total = 0;

    /// ln(1 / (total + 1)); used for keys never seen in training.
    double floor() const;
    double user_log_prob(std::span<const ItemId> pseudo_user) const;
    double item_log_prob(ItemId item) const;
};

EmpiricalMarginals compute_marginals(const std::vector<TrainingExample>& train);
std::vector<TrainingExample> annotate_bias(std::vector<TrainingExample> examples,
                                           const EmpiricalMarginals& marginals);

enum class NegativeStrategy { user_marginal, item_marginal, product_of_marginals, uniform };

NegativeStrategy parse_negative_strategy(std::string_view name);
std::string_view to_string(NegativeStrategy strategy);

/// Distinct pseudo-users and target items of a training set, with counts, in
/// order of first appearance. Shared by negative sampling and evaluation.
struct ExamplePools {
    std::vector<std::vector<ItemId>> users;
    std::vector<UserId> user_ids;  // raw user of the first occurrence
    std::vector<std::int64_t> user_counts;
    std::vector<ItemId> items;
    std::vector<std::int64_t> item_counts;
};

ExamplePools collect_pools(const std::vector<TrainingExample>& examples);

/// Each positive is emitted with label 1 followed by `ratio` label-0 rows drawn
/// from the declared strategy. Negatives are not filtered against positives.
std::vector<LabeledExample> sample_negatives_bce(const std::vector<TrainingExample>& train,
                                                 NegativeStrategy strategy, int ratio,
                                                 std::uint64_t seed);

/// Index batches over the examples of one month, shuffled by `seed`; the final
/// short batch is kept. `month == 0` selects every example.
template <typename Example>
std::vector<std::vector<std::size_t>> make_batches(const std::vector<Example>& examples,
                                                   std::size_t batch_size, int month,
                                                   const MonthIndex& months, std::uint64_t seed);

/// Same, over an explicit index list.
std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> indices,
                                                   std::size_t batch_size, std::uint64_t seed);

/// splitmix64 mixing; derives independent stream seeds from (seed, tag).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

template <typename Example>
std::vector<std::vector<std::size_t>> make_batches(const std::vector<Example>& examples,
                                                   std::size_t batch_size, int month,
                                                   const MonthIndex& months, std::uint64_t seed) {
    std::vector<std::size_t> indices;
    for (std::size_t k = 0; k < examples.size(); ++k) {
        if (month == 0 || months.month_of(examples[k].day) == month) indices.push_back(k);
    }
    return make_batches(std::move(indices), batch_size, seed);
}

}  // namespace matchkit
