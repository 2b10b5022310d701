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

#include "matchkit/data_pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_set>

namespace matchkit {

std::int32_t Vocabulary::intern(std::string_view token) {
    auto it = index_.find(std::string(token));
    if (it != index_.end()) return it->second;
    const auto id = static_cast<std::int32_t>(tokens_.size());
    tokens_.emplace_back(token);
    index_.emplace(tokens_.back(), id);
    return id;
}

std::optional<std::int32_t> Vocabulary::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

int MonthCalendar::month_of(Day day) const {
    if (!epoch_days_) return day / days_per_month_ + 1;
    using namespace std::chrono;
    const year_month_day first{sys_days{days{*epoch_days_}}};
    const year_month_day here{sys_days{days{*epoch_days_ + day}}};
    const int first_ordinal = int(first.year()) * 12 + int(unsigned(first.month()));
    const int here_ordinal = int(here.year()) * 12 + int(unsigned(here.month()));
    return here_ordinal - first_ordinal + 1;
}

Day MonthCalendar::first_day(int month) const {
    if (!epoch_days_) return (month - 1) * days_per_month_;
    using namespace std::chrono;
    const year_month_day first{sys_days{days{*epoch_days_}}};
    const year_month_day start = year_month_day{first.year(), first.month(), std::chrono::day{1}} +
                                 months{month - 1};
    return static_cast<Day>(sys_days{start}.time_since_epoch().count() - *epoch_days_);
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line, char delimiter) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delimiter, start);
        fields.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return fields;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

// Civil day count since 1970-01-01 for a `YYYY-MM-DD` string.
std::optional<std::int64_t> parse_iso_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    int y = 0, m = 0, d = 0;
    if (!parse_int(s.substr(0, 4), y) || !parse_int(s.substr(5, 2), m) || !parse_int(s.substr(8, 2), d)) {
        return std::nullopt;
    }
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    return sys_days{ymd}.time_since_epoch().count();
}

struct RawEvent {
    UserId user;
    ItemId item;
    std::int64_t stamp;
};

}  // namespace

IngestResult ingest_logs(std::istream& source, const IngestOptions& options) {
    IngestResult result;
    std::vector<RawEvent> events;
    std::optional<bool> iso;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(source, line)) {
        ++line_no;
        if (options.skip_header && line_no == 1) continue;
        const auto body = trim(line);
        if (body.empty()) continue;
        const auto fields = split_fields(body, options.delimiter);
        if (fields.size() != 3) {
            throw ParseError(line_no, "expected 3 fields, found " + std::to_string(fields.size()));
        }
        const auto user = trim(fields[0]);
        const auto item = trim(fields[1]);
        const auto stamp_text = trim(fields[2]);
        if (user.empty() || item.empty()) throw ParseError(line_no, "empty user or item id");

        std::int64_t stamp = 0;
        bool line_iso = false;
        if (auto civil = parse_iso_date(stamp_text)) {
            stamp = *civil;
            line_iso = true;
        } else if (!parse_int(stamp_text, stamp) || stamp < 0 ||
                   stamp > std::numeric_limits<Day>::max()) {
            throw ParseError(line_no, "bad date '" + std::string(stamp_text) + "'");
        }
        if (iso && *iso != line_iso) throw ParseError(line_no, "mixed ISO and integer dates");
        iso = line_iso;

        events.push_back({result.users.intern(user), result.items.intern(item), stamp});
    }
    if (events.empty()) throw std::invalid_argument("interaction log is empty");

    std::int64_t base = 0;
    if (*iso) {
        base = std::min_element(events.begin(), events.end(), [](const RawEvent& a, const RawEvent& b) {
                   return a.stamp < b.stamp;
               })->stamp;
        result.calendar = MonthCalendar::calendar(base);
    } else {
        result.calendar = MonthCalendar::fixed();
    }

    result.records.reserve(events.size());
    for (const auto& e : events) {
        result.records.push_back({e.user, e.item, static_cast<Day>(e.stamp - base)});
    }
    std::stable_sort(result.records.begin(), result.records.end(),
                     [](const InteractionRecord& a, const InteractionRecord& b) {
                         return a.user_id != b.user_id ? a.user_id < b.user_id : a.day < b.day;
                     });
    return result;
}

std::vector<TrainingExample> build_examples(const std::vector<InteractionRecord>& records,
                                            int horizon_days, std::size_t max_seq_len) {
    if (horizon_days < 1) throw std::invalid_argument("horizon_days must be >= 1");
    if (max_seq_len < 1) throw std::invalid_argument("max_seq_len must be >= 1");

    std::vector<TrainingExample> examples;
    std::size_t begin = 0;
    while (begin < records.size()) {
        std::size_t end = begin;
        while (end < records.size() && records[end].user_id == records[begin].user_id) ++end;

        // [begin, end) is one user's history, ascending by day.
        std::size_t window = begin;
        while (window < end) {
            const Day t = records[window].day;
            std::size_t next_day = window;
            while (next_day < end && records[next_day].day == t) ++next_day;

            if (window > begin) {
                const std::size_t history = window - begin;
                const std::size_t first = begin + (history > max_seq_len ? history - max_seq_len : 0);
                std::vector<ItemId> pseudo_user;
                pseudo_user.reserve(window - first);
                for (std::size_t k = first; k < window; ++k) pseudo_user.push_back(records[k].item_id);

                for (std::size_t k = window; k < end && records[k].day < t + horizon_days; ++k) {
                    examples.push_back({records[begin].user_id, pseudo_user, records[k].item_id, t, 0.0, 0.0});
                }
            }
            window = next_day;
        }
        begin = end;
    }
    return examples;
}

MonthIndex::MonthIndex(const MonthCalendar& calendar, const std::vector<TrainingExample>& examples)
    : calendar_(calendar) {
    for (const auto& e : examples) {
        if (!months_.contains(e.day)) months_.emplace(e.day, calendar.month_of(e.day));
    }
}

int MonthIndex::month_of(Day day) const {
    auto it = months_.find(day);
    return it != months_.end() ? it->second : calendar_.month_of(day);
}

std::vector<int> MonthIndex::months() const {
    std::set<int> distinct;
    for (const auto& [day, month] : months_) distinct.insert(month);
    return {distinct.begin(), distinct.end()};
}

DatasetSplit split_by_time(const std::vector<TrainingExample>& examples, const MonthCalendar& calendar,
                           int months_total) {
    if (months_total < 3) throw std::invalid_argument("months_total must be >= 3");
    DatasetSplit split;
    split.months_total = months_total;
    split.month_index = MonthIndex(calendar, examples);

    std::size_t dropped = 0;
    for (const auto& e : examples) {
        const int month = split.month_index.month_of(e.day);
        if (month > months_total) {
            ++dropped;
            continue;
        }
        if (month <= months_total - 1) split.train.push_back(e);
        if (month == months_total - 1) split.validation.push_back(e);
        if (month == months_total) split.test.push_back(e);
    }
    if (dropped) split.warnings.push_back(std::to_string(dropped) + " examples fall after month " +
                                          std::to_string(months_total) + " and were dropped");
    if (split.train.empty()) split.warnings.push_back("train split is empty");
    if (split.validation.empty()) split.warnings.push_back("validation split is empty");
    if (split.test.empty()) split.warnings.push_back("test split is empty");
    return split;
}

std::vector<TrainingExample> filter_sparse(const std::vector<TrainingExample>& examples, int min_degree) {
    if (min_degree < 1) throw std::invalid_argument("min_degree must be >= 1");
    std::vector<TrainingExample> kept = examples;
    while (true) {
        std::unordered_map<UserId, int> user_degree;
        std::unordered_map<ItemId, int> item_degree;
        for (const auto& e : kept) {
            ++user_degree[e.user_id];
            ++item_degree[e.target_item];
        }
        const auto before = kept.size();
        std::erase_if(kept, [&](const TrainingExample& e) {
            return user_degree[e.user_id] < min_degree || item_degree[e.target_item] < min_degree;
        });
        if (kept.size() == before) return kept;
    }
}

DatasetSplit filter_sparse(const DatasetSplit& split, int min_degree) {
    DatasetSplit out = split;
    out.train = filter_sparse(split.train, min_degree);
    out.validation = filter_sparse(split.validation, min_degree);
    out.test = filter_sparse(split.test, min_degree);
    return out;
}

double EmpiricalMarginals::floor() const { return -std::log(static_cast<double>(total) + 1.0); }

double EmpiricalMarginals::user_log_prob(std::span<const ItemId> pseudo_user) const {
    auto it = log_p_user.find(sequence_key(pseudo_user));
    return it != log_p_user.end() ? it->second : floor();
}

double EmpiricalMarginals::item_log_prob(ItemId item) const {
    auto it = log_p_item.find(item);
    return it != log_p_item.end() ? it->second : floor();
}

EmpiricalMarginals compute_marginals(const std::vector<TrainingExample>& train) {
    if (train.empty()) throw std::invalid_argument("cannot compute marginals of an empty training set");
    EmpiricalMarginals m;
    for (const auto& e : train) {
        ++m.count_user[sequence_key(e.pseudo_user)];
        ++m.count_item[e.target_item];
    }
    m.total = static_cast<std::int64_t>(train.size());
    const double log_total = std::log(static_cast<double>(m.total));
    for (const auto& [key, count] : m.count_user) m.log_p_user[key] = std::log(double(count)) - log_total;
    for (const auto& [item, count] : m.count_item) m.log_p_item[item] = std::log(double(count)) - log_total;
    return m;
}

std::vector<TrainingExample> annotate_bias(std::vector<TrainingExample> examples,
                                           const EmpiricalMarginals& marginals) {
    for (auto& e : examples) {
        e.log_p_u = marginals.user_log_prob(e.pseudo_user);
        e.log_p_i = marginals.item_log_prob(e.target_item);
    }
    return examples;
}

NegativeStrategy parse_negative_strategy(std::string_view name) {
    if (name == "user_marginal") return NegativeStrategy::user_marginal;
    if (name == "item_marginal") return NegativeStrategy::item_marginal;
    if (name == "product_of_marginals") return NegativeStrategy::product_of_marginals;
    if (name == "uniform") return NegativeStrategy::uniform;
    throw std::invalid_argument("unknown negative sampling strategy '" + std::string(name) + "'");
}

std::string_view to_string(NegativeStrategy strategy) {
    switch (strategy) {
        case NegativeStrategy::user_marginal: return "user_marginal";
        case NegativeStrategy::item_marginal: return "item_marginal";
        case NegativeStrategy::product_of_marginals: return "product_of_marginals";
        case NegativeStrategy::uniform: return "uniform";
    }
    return "unknown";
}

ExamplePools collect_pools(const std::vector<TrainingExample>& examples) {
    ExamplePools pools;
    std::unordered_map<std::string, std::size_t> user_slot;
    std::unordered_map<ItemId, std::size_t> item_slot;
    for (const auto& e : examples) {
        auto [uit, new_user] = user_slot.try_emplace(sequence_key(e.pseudo_user), pools.users.size());
        if (new_user) {
            pools.users.push_back(e.pseudo_user);
            pools.user_ids.push_back(e.user_id);
            pools.user_counts.push_back(0);
        }
        ++pools.user_counts[uit->second];
        auto [iit, new_item] = item_slot.try_emplace(e.target_item, pools.items.size());
        if (new_item) {
            pools.items.push_back(e.target_item);
            pools.item_counts.push_back(0);
        }
        ++pools.item_counts[iit->second];
    }
    return pools;
}

std::vector<LabeledExample> sample_negatives_bce(const std::vector<TrainingExample>& train,
                                                 NegativeStrategy strategy, int ratio, std::uint64_t seed) {
    if (ratio < 1) throw std::invalid_argument("negative ratio must be >= 1");
    const ExamplePools pools = collect_pools(train);
    std::vector<LabeledExample> out;
    if (train.empty()) return out;
    out.reserve(train.size() * static_cast<std::size_t>(ratio + 1));

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> any_user(0, pools.users.size() - 1);
    std::uniform_int_distribution<std::size_t> any_item(0, pools.items.size() - 1);
    std::discrete_distribution<std::size_t> user_marginal(pools.user_counts.begin(), pools.user_counts.end());
    std::discrete_distribution<std::size_t> item_marginal(pools.item_counts.begin(), pools.item_counts.end());

    for (const auto& e : train) {
        out.push_back({e.user_id, e.pseudo_user, e.target_item, e.day, 1});
        for (int r = 0; r < ratio; ++r) {
            LabeledExample neg{e.user_id, e.pseudo_user, e.target_item, e.day, 0};
            std::optional<std::size_t> user;
            switch (strategy) {
                case NegativeStrategy::user_marginal:
                    neg.target_item = pools.items[any_item(rng)];
                    break;
                case NegativeStrategy::item_marginal:
                    user = any_user(rng);
                    break;
                case NegativeStrategy::product_of_marginals:
                    user = user_marginal(rng);
                    neg.target_item = pools.items[item_marginal(rng)];
                    break;
                case NegativeStrategy::uniform:
                    user = any_user(rng);
                    neg.target_item = pools.items[any_item(rng)];
                    break;
            }
            if (user) {
                neg.pseudo_user = pools.users[*user];
                neg.user_id = pools.user_ids[*user];
            }
            out.push_back(std::move(neg));
        }
    }
    return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> indices, std::size_t batch_size,
                                                   std::uint64_t seed) {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    std::mt19937_64 rng(seed);
    std::shuffle(indices.begin(), indices.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
        const auto stop = std::min(indices.size(), start + batch_size);
        batches.emplace_back(indices.begin() + static_cast<std::ptrdiff_t>(start),
                             indices.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return batches;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace matchkit
