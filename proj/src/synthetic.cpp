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

#include "matchkit/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace matchkit {

namespace {

void check_table(const Eigen::MatrixXd& t, int rows, int cols) {
    if (t.rows() != rows || t.cols() != cols) throw std::invalid_argument("joint table has the wrong shape");
    if (!t.allFinite() || (t.array() < 0.0).any()) throw std::invalid_argument("joint table must be nonnegative");
    if (std::abs(t.sum() - 1.0) > 1e-12) throw std::invalid_argument("joint table must sum to 1");
}

Eigen::MatrixXd normalized(Eigen::MatrixXd t) { return t / t.sum(); }

}  // namespace

void SyntheticSpec::validate() const {
    if (num_users < 1 || num_items < 1) throw std::invalid_argument("synthetic grid needs users and items");
    if (months < 1 || days_per_month < 1) throw std::invalid_argument("synthetic span needs months and days");
    if (drift.empty()) {
        check_table(joint, num_users, num_items);
    } else {
        if (int(drift.size()) != months) throw std::invalid_argument("drift needs one table per month");
        for (const auto& t : drift) check_table(t, num_users, num_items);
    }
    if (!samples_per_month.empty() && int(samples_per_month.size()) != months)
        throw std::invalid_argument("samples_per_month needs one count per month");
}

const Eigen::MatrixXd& SyntheticSpec::table_for_month(int month) const {
    return drift.empty() ? joint : drift.at(std::size_t(month - 1));
}

EmpiricalTables tabulate(const std::vector<TrainingExample>& examples, int num_users, int num_items) {
    EmpiricalTables t;
    t.counts = Eigen::MatrixXd::Zero(num_users, num_items);
    for (const auto& e : examples) {
        const int u = e.pseudo_user.at(0) - num_items;
        if (u < 0 || u >= num_users || e.target_item < 0 || e.target_item >= num_items)
            throw std::invalid_argument("example is not on the synthetic grid");
        t.counts(u, e.target_item) += 1.0;
    }
    t.total = std::int64_t(examples.size());
    return t;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    SyntheticData data;
    data.num_users = spec.num_users;
    data.num_items = spec.num_items;
    std::vector<std::size_t> per_month = spec.samples_per_month;
    if (per_month.empty()) {
        per_month.assign(std::size_t(spec.months), spec.num_samples / std::size_t(spec.months));
        for (std::size_t m = 0; m < spec.num_samples % std::size_t(spec.months); ++m) ++per_month[m];
    }

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> day_in_month(0, spec.days_per_month - 1);
    for (int m = 1; m <= spec.months; ++m) {
        const Eigen::MatrixXd& table = spec.table_for_month(m);
        std::vector<double> weights(std::size_t(table.size()));
        for (int u = 0; u < spec.num_users; ++u)
            for (int i = 0; i < spec.num_items; ++i) weights[std::size_t(u * spec.num_items + i)] = table(u, i);
        std::discrete_distribution<int> cell(weights.begin(), weights.end());
        std::vector<InteractionRecord> month_log;
        for (std::size_t s = 0; s < per_month[std::size_t(m - 1)]; ++s) {
            const int c = cell(rng);
            const Day day = (m - 1) * spec.days_per_month + day_in_month(rng);
            month_log.push_back({c / spec.num_items, c % spec.num_items, day});
        }
        std::stable_sort(month_log.begin(), month_log.end(),
                         [](const auto& a, const auto& b) { return a.day < b.day; });
        data.log.insert(data.log.end(), month_log.begin(), month_log.end());
    }

    data.examples.reserve(data.log.size());
    for (const auto& r : data.log)
        data.examples.push_back({r.user_id, {data.history_token(r.user_id)}, r.item_id, r.day, 0.0, 0.0});
    data.examples = annotate_bias(std::move(data.examples), compute_marginals(data.examples));
    data.tables = tabulate(data.examples, spec.num_users, spec.num_items);
    const MonthCalendar calendar = MonthCalendar::fixed(spec.days_per_month);
    data.month_index = MonthIndex(calendar, data.examples);
    for (int m = 1; m <= spec.months; ++m) {
        std::vector<TrainingExample> month;
        for (const auto& e : data.examples)
            if (calendar.month_of(e.day) == m) month.push_back(e);
        data.monthly.push_back(tabulate(month, spec.num_users, spec.num_items));
    }
    return data;
}

SyntheticSpec default_synthetic_spec(std::uint64_t table_seed) {
    SyntheticSpec spec;
    const int rank = 3;
    std::mt19937_64 rng(table_seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd a(spec.num_users, rank), b(rank, spec.num_items);
    for (Eigen::Index k = 0; k < a.size(); ++k) a(k) = unit(rng);
    for (Eigen::Index k = 0; k < b.size(); ++k) b(k) = unit(rng);
    Eigen::MatrixXd table = a * b;
    Eigen::MatrixXd mask = Eigen::MatrixXd::Ones(spec.num_users, spec.num_items);
    for (Eigen::Index k = 0; k < mask.size(); ++k)
        if (unit(rng) < 0.25) mask(k) = 0.0;
    for (int u = 0; u < spec.num_users; ++u)
        while (mask.row(u).sum() < 2.0) mask(u, int(unit(rng) * spec.num_items)) = 1.0;
    for (int i = 0; i < spec.num_items; ++i)
        while (mask.col(i).sum() < 2.0) mask(int(unit(rng) * spec.num_users), i) = 1.0;
    spec.joint = normalized(table.cwiseProduct(mask));
    return spec;
}

SyntheticSpec uniform_synthetic_spec(int num_users, int num_items, std::size_t num_samples) {
    SyntheticSpec spec;
    spec.num_users = num_users;
    spec.num_items = num_items;
    spec.num_samples = num_samples;
    spec.joint = Eigen::MatrixXd::Constant(num_users, num_items, 1.0 / double(num_users * num_items));
    return spec;
}

SyntheticSpec drifting_synthetic_spec(int months, std::uint64_t table_seed) {
    SyntheticSpec spec;
    spec.num_users = 40;
    spec.num_items = 120;
    spec.months = months;
    const int window = 12;
    const double width = 5.0;
    const int shift_per_month = 3;
    std::mt19937_64 rng(table_seed);
    std::uniform_real_distribution<double> jitter(0.5, 1.5);
    Eigen::MatrixXd base = Eigen::MatrixXd::Zero(spec.num_users, spec.num_items);
    for (Eigen::Index k = 0; k < base.size(); ++k) base(k) = jitter(rng);
    for (int m = 1; m <= months; ++m) {
        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(spec.num_users, spec.num_items);
        for (int u = 0; u < spec.num_users; ++u) {
            const int center = u * spec.num_items / spec.num_users + (m - 1) * shift_per_month;
            for (int i = 0; i < spec.num_items; ++i) {
                int d = std::abs(i - center) % spec.num_items;
                d = std::min(d, spec.num_items - d);
                if (d <= window) t(u, i) = base(u, i) * std::exp(-0.5 * d * d / (width * width));
            }
        }
        spec.drift.push_back(normalized(t));
    }
    spec.samples_per_month.assign(std::size_t(months), 8000);
    spec.samples_per_month.back() = 200;
    spec.num_samples = std::accumulate(spec.samples_per_month.begin(), spec.samples_per_month.end(), std::size_t(0));
    return spec;
}

SyntheticSpec skewed_synthetic_spec(int months, std::uint64_t table_seed) {
    SyntheticSpec spec;
    spec.num_users = 50;
    spec.num_items = 100;
    spec.months = months;
    std::vector<int> rank(std::size_t(spec.num_items));
    std::iota(rank.begin(), rank.end(), 1);
    std::mt19937_64 rng(table_seed);
    std::shuffle(rank.begin(), rank.end(), rng);
    Eigen::MatrixXd t(spec.num_users, spec.num_items);
    for (int u = 0; u < spec.num_users; ++u) {
        for (int i = 0; i < spec.num_items; ++i) {
            const double popularity = std::pow(double(rank[std::size_t(i)]), -1.1);
            const double angle = 2.0 * std::numbers::pi * (double(i) / spec.num_items - double(u) / spec.num_users);
            t(u, i) = popularity * std::exp(2.0 * std::cos(angle));
        }
    }
    spec.joint = normalized(t);
    spec.samples_per_month.assign(std::size_t(months), 10000);
    spec.samples_per_month.back() = 250;
    spec.num_samples = std::accumulate(spec.samples_per_month.begin(), spec.samples_per_month.end(), std::size_t(0));
    return spec;
}

}  // namespace matchkit
