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

// Independent reference computations shared by the unit and acceptance tests.
// Nothing here calls into the library's loss or metric code.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <set>
#include <vector>

#include "matchkit/data_pipeline.hpp"
#include "matchkit/losses.hpp"
#include "matchkit/model.hpp"
#include "matchkit/objective.hpp"

namespace matchkit::oracle {

using Real = long double;

/// Small random batch over a 6-item vocabulary with random marginals.
struct Toy {
    ModelParams<Real> params;
    EncoderConfig encoder;
    std::vector<TrainingExample> batch;
    std::vector<LabeledExample> labeled;
    std::vector<ItemId> vocabulary;
    std::vector<std::vector<ItemId>> universe;
    ItemProposal proposal;
};

inline Toy make_toy(std::uint64_t seed, Aggregator aggregator, int num_items = 6, int dim = 4, int batch = 3) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> item(0, num_items - 1);
    std::uniform_int_distribution<int> length(1, 3);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> logp(-4.0, -0.5);

    Toy t;
    t.encoder.aggregator = aggregator;
    t.params = ModelParams<double>::init(num_items, dim, 0.2 + 0.3 * (unit(rng) + 1.0), rng()).cast<Real>();
    // Parameters on a 1e-2 scale; cosine scores do not depend on it.
    t.params.item_embeddings *= Real(0.02);
    for (Eigen::Index c = 0; c < dim; ++c) t.params.attention(c) = Real(0.02 * unit(rng));

    for (int b = 0; b < batch; ++b) {
        TrainingExample e;
        e.user_id = b;
        for (int k = length(rng); k > 0; --k) e.pseudo_user.push_back(item(rng));
        e.target_item = item(rng);
        e.log_p_u = logp(rng);
        e.log_p_i = logp(rng);
        t.batch.push_back(e);
        t.labeled.push_back({e.user_id, e.pseudo_user, e.target_item, 0, int(b % 2 == 0)});
    }
    for (int i = 0; i < num_items; ++i) t.vocabulary.push_back(i);
    for (const auto& e : t.batch) t.universe.push_back(e.pseudo_user);
    t.universe.push_back({ItemId(item(rng)), ItemId(item(rng))});
    std::vector<std::int64_t> counts;
    for (int i = 0; i < num_items; ++i) counts.push_back(1 + std::int64_t(rng() % 9));
    t.proposal = ItemProposal::from_counts(t.vocabulary, counts);
    // batch positives must be unique per universe row for the column loss
    std::set<std::vector<ItemId>> seen;
    std::vector<std::vector<ItemId>> unique;
    for (auto& u : t.universe)
        if (seen.insert(u).second) unique.push_back(u);
    t.universe = unique;
    return t;
}

/// Largest elementwise relative error between an analytic gradient and
/// central differences with step `h`. Entries below `floor` in magnitude on
/// both sides compare absolutely against `floor`.
inline double max_gradient_error(const ModelParams<Real>& params, const SparseGrad<Real>& analytic,
                                 const std::function<Real(const ModelParams<Real>&)>& loss, Real h,
                                 Real floor = 1e-6L) {
    const RowMatrix<Real> dense = analytic.dense(params.num_items());
    const Vector<Real> attention =
        analytic.touches_attention() ? analytic.attention() : Vector<Real>::Zero(params.dim());
    double worst = 0.0;
    auto compare = [&](Real a, Real f) {
        const Real denom = std::max({std::abs(a), std::abs(f), floor});
        worst = std::max(worst, double(std::abs(a - f) / denom));
    };
    ModelParams<Real> p = params;
    for (Eigen::Index r = 0; r < p.num_items(); ++r) {
        for (Eigen::Index c = 0; c < p.dim(); ++c) {
            const Real x = p.item_embeddings(r, c);
            p.item_embeddings(r, c) = x + h;
            const Real up = loss(p);
            p.item_embeddings(r, c) = x - h;
            const Real down = loss(p);
            p.item_embeddings(r, c) = x;
            compare(dense(r, c), (up - down) / (2 * h));
        }
    }
    for (Eigen::Index c = 0; c < p.dim(); ++c) {
        const Real x = p.attention(c);
        p.attention(c) = x + h;
        const Real up = loss(p);
        p.attention(c) = x - h;
        const Real down = loss(p);
        p.attention(c) = x;
        compare(attention(c), (up - down) / (2 * h));
    }
    return worst;
}

inline double log_sum_exp(const std::vector<double>& v) {
    const double top = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - top);
    return top + std::log(s);
}

/// Scalar evaluation of the generalized in-batch loss on a B x B logit
/// matrix, straight from its definition.
inline double bidirectional_reference(const std::vector<std::vector<double>>& phi, const std::vector<double>& log_p_u,
                                      const std::vector<double>& log_p_i, bool alpha, bool beta, bool delta_alpha,
                                      bool delta_beta) {
    const std::size_t b = phi.size();
    double total = 0.0;
    for (std::size_t r = 0; r < b; ++r) {
        if (alpha) {
            std::vector<double> row;
            for (std::size_t c = 0; c < b; ++c) row.push_back(phi[r][c] - (delta_alpha ? log_p_i[c] : 0.0));
            total += log_sum_exp(row) - row[r];
        }
        if (beta) {
            std::vector<double> col;
            for (std::size_t q = 0; q < b; ++q) col.push_back(phi[q][r] - (delta_beta ? log_p_u[q] : 0.0));
            total += log_sum_exp(col) - col[r];
        }
    }
    return total / double(b);
}

/// Recall@N by membership counting.
inline double recall_reference(const std::vector<std::int64_t>& positives, const std::vector<std::int64_t>& ranking,
                               std::size_t n) {
    const std::set<std::int64_t> pos(positives.begin(), positives.end());
    std::size_t hits = 0;
    for (std::size_t k = 0; k < std::min(n, ranking.size()); ++k) hits += pos.count(ranking[k]);
    const std::size_t denom = std::min(pos.size(), n);
    return denom == 0 ? 0.0 : double(hits) / double(denom);
}

/// NDCG@N with binary gains and the ideal ordering's DCG as normalizer.
inline double ndcg_reference(const std::vector<std::int64_t>& positives, const std::vector<std::int64_t>& ranking,
                             std::size_t n) {
    const std::set<std::int64_t> pos(positives.begin(), positives.end());
    double dcg = 0.0;
    for (std::size_t k = 0; k < std::min(n, ranking.size()); ++k)
        if (pos.count(ranking[k])) dcg += 1.0 / std::log2(double(k) + 2.0);
    double ideal = 0.0;
    for (std::size_t k = 0; k < std::min(pos.size(), n); ++k) ideal += 1.0 / std::log2(double(k) + 2.0);
    return ideal == 0.0 ? 0.0 : dcg / ideal;
}

}  // namespace matchkit::oracle
