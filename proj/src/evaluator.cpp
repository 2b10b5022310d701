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

#include "matchkit/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <unordered_map>
#include <unordered_set>

namespace matchkit {

EvalTask parse_eval_task(std::string_view name) {
    if (name == "ir") return EvalTask::ir;
    if (name == "ut") return EvalTask::ut;
    throw std::invalid_argument("unknown evaluation task '" + std::string(name) + "'");
}

std::string_view to_string(EvalTask task) { return task == EvalTask::ir ? "ir" : "ut"; }

namespace {

/// Uniform draw of `count` distinct pool positions outside `excluded`.
std::vector<std::size_t> draw_negatives(std::size_t pool_size, const std::unordered_set<std::size_t>& excluded,
                                        std::size_t count, std::mt19937_64& rng) {
    const std::size_t available = pool_size - excluded.size();
    if (available < count)
        throw std::invalid_argument("candidate pool has " + std::to_string(available) +
                                    " eligible negatives, fewer than the requested " + std::to_string(count));
    std::vector<std::size_t> picked;
    picked.reserve(count);
    if (count * 2 <= available) {
        std::unordered_set<std::size_t> taken;
        std::uniform_int_distribution<std::size_t> any(0, pool_size - 1);
        while (picked.size() < count) {
            const std::size_t k = any(rng);
            if (excluded.contains(k) || !taken.insert(k).second) continue;
            picked.push_back(k);
        }
        return picked;
    }
    std::vector<std::size_t> eligible;
    eligible.reserve(available);
    for (std::size_t k = 0; k < pool_size; ++k)
        if (!excluded.contains(k)) eligible.push_back(k);
    for (std::size_t k = 0; k < count; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, eligible.size() - 1);
        std::swap(eligible[k], eligible[pick(rng)]);
        picked.push_back(eligible[k]);
    }
    return picked;
}

}  // namespace

EvalSet build_eval_cases(const std::vector<TrainingExample>& test, const ExamplePools& pools,
                         const EvalOptions& options) {
    EvalSet set;
    set.task = options.task;
    std::uint64_t case_index = 0;
    auto case_rng = [&]() { return std::mt19937_64(mix_seed(options.seed, case_index++)); };

    if (options.task == EvalTask::ir) {
        std::unordered_map<ItemId, std::size_t> slot;
        for (std::size_t k = 0; k < pools.items.size(); ++k) slot.emplace(pools.items[k], k);
        // Queries in order of first appearance, each with its distinct positives.
        std::vector<std::vector<ItemId>> queries;
        std::vector<std::vector<ItemId>> positives;
        std::unordered_map<std::string, std::size_t> query_of;
        for (const auto& e : test) {
            auto [it, fresh] = query_of.try_emplace(sequence_key(e.pseudo_user), queries.size());
            if (fresh) {
                queries.push_back(e.pseudo_user);
                positives.emplace_back();
            }
            auto& p = positives[it->second];
            if (std::find(p.begin(), p.end(), e.target_item) == p.end()) p.push_back(e.target_item);
        }
        for (std::size_t q = 0; q < queries.size(); ++q) {
            std::unordered_set<std::size_t> excluded;
            for (ItemId i : positives[q]) {
                auto it = slot.find(i);
                if (it != slot.end()) excluded.insert(it->second);
            }
            auto emit = [&](std::vector<ItemId> pos) {
                auto rng = case_rng();
                EvalCase c;
                c.query_user = queries[q];
                c.positives.assign(pos.begin(), pos.end());
                c.candidates = c.positives;
                for (std::size_t k : draw_negatives(pools.items.size(), excluded, options.num_negatives, rng))
                    c.candidates.push_back(pools.items[k]);
                set.cases.push_back(std::move(c));
            };
            if (options.group_positives) {
                emit(positives[q]);
            } else {
                for (ItemId i : positives[q]) emit({i});
            }
        }
        return set;
    }

    set.user_pool = pools.users;
    set.user_pool_raw = pools.user_ids;
    std::unordered_map<std::string, std::size_t> slot;
    for (std::size_t k = 0; k < set.user_pool.size(); ++k) slot.emplace(sequence_key(set.user_pool[k]), k);
    std::vector<ItemId> queries;
    std::vector<std::vector<std::size_t>> positives;
    std::unordered_map<ItemId, std::size_t> query_of;
    for (const auto& e : test) {
        auto [uit, new_user] = slot.try_emplace(sequence_key(e.pseudo_user), set.user_pool.size());
        if (new_user) {
            set.user_pool.push_back(e.pseudo_user);
            set.user_pool_raw.push_back(e.user_id);
        }
        auto [qit, fresh] = query_of.try_emplace(e.target_item, queries.size());
        if (fresh) {
            queries.push_back(e.target_item);
            positives.emplace_back();
        }
        auto& p = positives[qit->second];
        if (std::find(p.begin(), p.end(), uit->second) == p.end()) p.push_back(uit->second);
    }
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const std::unordered_set<std::size_t> excluded(positives[q].begin(), positives[q].end());
        auto emit = [&](const std::vector<std::size_t>& pos) {
            auto rng = case_rng();
            EvalCase c;
            c.query_item = queries[q];
            c.positives.assign(pos.begin(), pos.end());
            c.candidates = c.positives;
            for (std::size_t k : draw_negatives(set.user_pool.size(), excluded, options.num_negatives, rng))
                c.candidates.push_back(CandidateId(k));
            set.cases.push_back(std::move(c));
        };
        if (options.group_positives) {
            emit(positives[q]);
        } else {
            for (std::size_t u : positives[q]) emit({u});
        }
    }
    return set;
}

std::vector<CandidateId> rank_candidates(const EvalCase& c, const EvalSet& set, const ModelParams<double>& params,
                                         const EncoderConfig& encoder) {
    std::vector<std::pair<double, CandidateId>> scored;
    scored.reserve(c.candidates.size());
    if (set.task == EvalTask::ir) {
        const Vector<double> u = encode_user_lenient<double>(c.query_user, params, encoder);
        for (CandidateId id : c.candidates)
            scored.emplace_back(score(u, encode_item(ItemId(id), params), params.temperature), id);
    } else {
        const Vector<double> i = encode_item(c.query_item, params);
        for (CandidateId id : c.candidates) {
            const Vector<double> u =
                encode_user_lenient<double>(set.user_pool.at(std::size_t(id)), params, encoder);
            scored.emplace_back(score(u, i, params.temperature), id);
        }
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<CandidateId> ranking;
    ranking.reserve(scored.size());
    for (const auto& s : scored) ranking.push_back(s.second);
    return ranking;
}

namespace {

bool contains(std::span<const CandidateId> ids, CandidateId id) {
    return std::find(ids.begin(), ids.end(), id) != ids.end();
}

std::size_t hits_in_top(std::span<const CandidateId> positives, std::span<const CandidateId> ranking, std::size_t n) {
    std::size_t hits = 0;
    for (std::size_t k = 0; k < std::min(n, ranking.size()); ++k) hits += contains(positives, ranking[k]) ? 1 : 0;
    return hits;
}

}  // namespace

double recall_at_n(std::span<const CandidateId> positives, std::span<const CandidateId> ranking, std::size_t n) {
    const std::size_t denom = std::min(positives.size(), n);
    if (denom == 0) return 0.0;
    return double(hits_in_top(positives, ranking, n)) / double(denom);
}

double ndcg_at_n(std::span<const CandidateId> positives, std::span<const CandidateId> ranking, std::size_t n) {
    double dcg = 0.0;
    for (std::size_t k = 0; k < std::min(n, ranking.size()); ++k)
        if (contains(positives, ranking[k])) dcg += 1.0 / std::log2(double(k) + 2.0);
    double ideal = 0.0;
    for (std::size_t k = 0; k < std::min(positives.size(), n); ++k) ideal += 1.0 / std::log2(double(k) + 2.0);
    return ideal > 0.0 ? dcg / ideal : 0.0;
}

double hit_rate_at_n(std::span<const CandidateId> positives, std::span<const CandidateId> ranking, std::size_t n) {
    return hits_in_top(positives, ranking, n) > 0 ? 1.0 : 0.0;
}

PopularityIndex::PopularityIndex(const std::vector<InteractionRecord>& log, Day anchor, int window_days) {
    if (window_days < 1) throw std::invalid_argument("popularity window must be >= 1 day");
    for (const auto& r : log) {
        if (r.day < anchor - window_days || r.day >= anchor) continue;
        if (std::size_t(r.item_id) >= items_.size()) items_.resize(std::size_t(r.item_id) + 1, 0);
        if (std::size_t(r.user_id) >= users_.size()) users_.resize(std::size_t(r.user_id) + 1, 0);
        ++items_[std::size_t(r.item_id)];
        ++users_[std::size_t(r.user_id)];
    }
}

std::int64_t PopularityIndex::item_count(ItemId item) const {
    return item >= 0 && std::size_t(item) < items_.size() ? items_[std::size_t(item)] : 0;
}

std::int64_t PopularityIndex::user_count(UserId user) const {
    return user >= 0 && std::size_t(user) < users_.size() ? users_[std::size_t(user)] : 0;
}

PopularityStats summarize_counts(std::vector<std::int64_t> counts) {
    PopularityStats s;
    s.objects = counts.size();
    if (counts.empty()) return s;
    std::sort(counts.begin(), counts.end());
    const std::size_t mid = counts.size() / 2;
    s.median = counts.size() % 2 ? double(counts[mid]) : 0.5 * double(counts[mid - 1] + counts[mid]);
    s.mean = double(std::accumulate(counts.begin(), counts.end(), std::int64_t(0))) / double(counts.size());
    return s;
}

EvalReport evaluate(const EvalSet& set, const ModelParams<double>& params, const EncoderConfig& encoder,
                    std::size_t n, const PopularityIndex* popularity) {
    EvalReport report;
    report.task = set.task;
    report.n = n;
    std::vector<std::int64_t> counts;
    for (const auto& c : set.cases) {
        const std::vector<CandidateId> ranking = rank_candidates(c, set, params, encoder);
        CaseResult r;
        r.recall = recall_at_n(c.positives, ranking, n);
        r.ndcg = ndcg_at_n(c.positives, ranking, n);
        r.hit = hit_rate_at_n(c.positives, ranking, n);
        r.top.assign(ranking.begin(), ranking.begin() + std::ptrdiff_t(std::min(n, ranking.size())));
        if (popularity) {
            for (CandidateId id : r.top)
                counts.push_back(set.task == EvalTask::ir
                                     ? popularity->item_count(ItemId(id))
                                     : popularity->user_count(set.user_pool_raw.at(std::size_t(id))));
        }
        report.recall_at_n += r.recall;
        report.ndcg_at_n += r.ndcg;
        report.hit_rate_at_n += r.hit;
        report.cases.push_back(std::move(r));
    }
    if (!set.cases.empty()) {
        const double m = double(set.cases.size());
        report.recall_at_n /= m;
        report.ndcg_at_n /= m;
        report.hit_rate_at_n /= m;
    }
    if (popularity) report.popularity = summarize_counts(std::move(counts));
    return report;
}

}  // namespace matchkit
