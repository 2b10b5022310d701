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

// Candidate-pool evaluation for item retrieval (IR) and user targeting (UT).

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "matchkit/data_pipeline.hpp"
#include "matchkit/model.hpp"

namespace matchkit {

enum class EvalTask { ir, ut };

EvalTask parse_eval_task(std::string_view name);
std::string_view to_string(EvalTask task);

/// Candidate ids are item ids for IR and indices into EvalSet::user_pool for UT.
using CandidateId = std::int64_t;

struct EvalCase {
    std::vector<ItemId> query_user;  // IR query
    ItemId query_item = -1;          // UT query
    std::vector<CandidateId> positives;
    std::vector<CandidateId> candidates;  // positives first, then sampled negatives
};

struct EvalSet {
    EvalTask task = EvalTask::ir;
    std::vector<EvalCase> cases;
    std::vector<std::vector<ItemId>> user_pool;  // UT candidates
    std::vector<UserId> user_pool_raw;           // raw user behind each pool entry
};

struct EvalOptions {
    EvalTask task = EvalTask::ir;
    std::size_t num_negatives = 99;
    std::uint64_t seed = 0;
    /// One case per query holding all its positives instead of one case per
    /// (query, positive) pair.
    bool group_positives = false;
};

/// `pools` supplies the negatives: its items for IR, its pseudo-users for UT.
/// Throws std::invalid_argument when a query has fewer than `num_negatives`
/// non-positive objects to draw from.
EvalSet build_eval_cases(const std::vector<TrainingExample>& test, const ExamplePools& pools,
                         const EvalOptions& options);

/// Candidates by score descending, ties by ascending id. Unknown history items
/// are skipped; unknown candidate items raise OutOfVocabulary.
std::vector<CandidateId> rank_candidates(const EvalCase& c, const EvalSet& set, const ModelParams<double>& params,
                                         const EncoderConfig& encoder);

double recall_at_n(std::span<const CandidateId> positives, std::span<const CandidateId> ranking, std::size_t n);
double ndcg_at_n(std::span<const CandidateId> positives, std::span<const CandidateId> ranking, std::size_t n);
double hit_rate_at_n(std::span<const CandidateId> positives, std::span<const CandidateId> ranking, std::size_t n);

/// Interaction counts per item and per raw user over [anchor - window, anchor).
class PopularityIndex {
public:
    PopularityIndex(const std::vector<InteractionRecord>& log, Day anchor, int window_days = 365);

    std::int64_t item_count(ItemId item) const;
    std::int64_t user_count(UserId user) const;

private:
    std::vector<std::int64_t> items_;
    std::vector<std::int64_t> users_;
};

struct PopularityStats {
    double median = 0.0;
    double mean = 0.0;
    std::size_t objects = 0;
};

/// Median and mean over a multiset of counts; the median of an even count
/// averages the two middle values.
PopularityStats summarize_counts(std::vector<std::int64_t> counts);

struct CaseResult {
    double recall = 0.0;
    double ndcg = 0.0;
    double hit = 0.0;
    std::vector<CandidateId> top;  // first N of the ranking
};

struct EvalReport {
    EvalTask task = EvalTask::ir;
    std::size_t n = 10;
    double recall_at_n = 0.0;
    double ndcg_at_n = 0.0;
    double hit_rate_at_n = 0.0;
    std::vector<CaseResult> cases;
    std::optional<PopularityStats> popularity;
};

/// Ranks every case and averages the per-case metrics. With `popularity`, the
/// retrieved top-N objects are summarized by their trailing interaction counts.
EvalReport evaluate(const EvalSet& set, const ModelParams<double>& params, const EncoderConfig& encoder,
                    std::size_t n, const PopularityIndex* popularity = nullptr);

}  // namespace matchkit
