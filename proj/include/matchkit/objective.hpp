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

// Losses as functions of the model parameters: batch compression into
// distinct pseudo-users and items, the forward pass through both towers, and
// the analytic backward pass into sparse embedding-row gradients.

#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "matchkit/losses.hpp"
#include "matchkit/model.hpp"

namespace matchkit {

/// Gradient restricted to the embedding rows a batch touched.
template <typename Scalar>
class SparseGrad {
public:
    SparseGrad() = default;
    explicit SparseGrad(Eigen::Index dim) : attention_(Vector<Scalar>::Zero(dim)) {}

    void add_row(ItemId row, const Vector<Scalar>& g) { slot(row) += g; }
    Vector<Scalar>& slot(ItemId row) {
        auto [it, inserted] = index_.try_emplace(row, rows_.size());
        if (inserted) {
            rows_.push_back(row);
            values_.push_back(Vector<Scalar>::Zero(attention_.size()));
        }
        return values_[it->second];
    }
    void add_attention(const Vector<Scalar>& g) {
        attention_ += g;
        touches_attention_ = true;
    }

    /// Touched rows in first-touch order.
    const std::vector<ItemId>& rows() const noexcept { return rows_; }
    const Vector<Scalar>& row(std::size_t k) const { return values_[k]; }
    const Vector<Scalar>& attention() const noexcept { return attention_; }
    bool touches_attention() const noexcept { return touches_attention_; }
    bool touches(ItemId row) const { return index_.contains(row); }

    RowMatrix<Scalar> dense(Eigen::Index num_items) const {
        RowMatrix<Scalar> out = RowMatrix<Scalar>::Zero(num_items, attention_.size());
        for (std::size_t k = 0; k < rows_.size(); ++k) out.row(rows_[k]) = values_[k].transpose();
        return out;
    }

    void scale(Scalar factor) {
        for (auto& v : values_) v *= factor;
        attention_ *= factor;
    }

private:
    std::vector<ItemId> rows_;
    std::vector<Vector<Scalar>> values_;
    std::unordered_map<ItemId, std::size_t> index_;
    Vector<Scalar> attention_;
    bool touches_attention_ = false;
};

template <typename Scalar>
struct LossOutput {
    Scalar value = Scalar(0);
    Scalar row_term = Scalar(0);
    Scalar col_term = Scalar(0);
    SparseGrad<Scalar> grads;
};

/// A batch reduced to its distinct pseudo-users (rows) and items (columns).
struct BatchLayout {
    std::vector<const std::vector<ItemId>*> users;
    std::vector<ItemId> items;
    std::vector<Eigen::Index> example_user;
    std::vector<Eigen::Index> example_item;
    std::vector<double> row_log_p;  // log p(u) of each distinct user
    std::vector<double> col_log_p;  // log p(i) of each distinct item
    std::vector<int> labels;        // per example; Bernoulli batches only

    std::size_t size() const noexcept { return example_user.size(); }
};

namespace detail {

struct SequenceHash {
    std::size_t operator()(const std::vector<ItemId>* s) const noexcept {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (ItemId id : *s) h = (h ^ static_cast<std::uint32_t>(id)) * 1099511628211ULL;
        return static_cast<std::size_t>(h);
    }
};
struct SequenceEqual {
    bool operator()(const std::vector<ItemId>* a, const std::vector<ItemId>* b) const noexcept { return *a == *b; }
};

template <typename Example>
void record_example(BatchLayout& layout, const Example& e, Eigen::Index user, bool new_user, Eigen::Index item,
                    bool new_item) {
    layout.example_user.push_back(user);
    layout.example_item.push_back(item);
    if constexpr (requires { e.log_p_u; }) {
        if (new_user) layout.row_log_p.push_back(e.log_p_u);
        if (new_item) layout.col_log_p.push_back(e.log_p_i);
    } else {
        if (new_user) layout.row_log_p.push_back(0.0);
        if (new_item) layout.col_log_p.push_back(0.0);
    }
    if constexpr (requires { e.label; }) layout.labels.push_back(e.label);
}

}  // namespace detail

/// Compresses a batch by hashing pseudo-user sequences. Pointers into
/// `batch` are stored, so the batch must outlive the layout.
template <typename Example>
BatchLayout layout_of(std::span<const Example> batch) {
    BatchLayout layout;
    std::unordered_map<const std::vector<ItemId>*, Eigen::Index, detail::SequenceHash, detail::SequenceEqual> users;
    std::unordered_map<ItemId, Eigen::Index> items;
    for (const auto& e : batch) {
        auto [uit, new_user] = users.try_emplace(&e.pseudo_user, Eigen::Index(layout.users.size()));
        if (new_user) layout.users.push_back(&e.pseudo_user);
        auto [iit, new_item] = items.try_emplace(e.target_item, Eigen::Index(layout.items.size()));
        if (new_item) layout.items.push_back(e.target_item);
        detail::record_example(layout, e, uit->second, new_user, iit->second, new_item);
    }
    return layout;
}

/// Layout construction from precomputed pseudo-user key ids, reusing scratch
/// tables across batches. Used by the training loop.
class LayoutBuilder {
public:
    LayoutBuilder(std::size_t num_user_keys, std::size_t num_items)
        : user_slot_(num_user_keys, -1), item_slot_(num_items, -1) {}

    template <typename Example>
    BatchLayout build(const std::vector<Example>& examples, std::span<const std::size_t> indices,
                      std::span<const std::uint32_t> user_keys) {
        BatchLayout layout;
        layout.example_user.reserve(indices.size());
        layout.example_item.reserve(indices.size());
        std::vector<std::uint32_t> used_keys;
        for (std::size_t idx : indices) {
            const auto& e = examples[idx];
            const std::uint32_t key = user_keys[idx];
            bool new_user = false, new_item = false;
            if (user_slot_[key] < 0) {
                user_slot_[key] = Eigen::Index(layout.users.size());
                layout.users.push_back(&e.pseudo_user);
                used_keys.push_back(key);
                new_user = true;
            }
            const auto item = static_cast<std::size_t>(e.target_item);
            if (item >= item_slot_.size()) throw OutOfVocabulary(e.target_item);
            if (item_slot_[item] < 0) {
                item_slot_[item] = Eigen::Index(layout.items.size());
                layout.items.push_back(e.target_item);
                new_item = true;
            }
            detail::record_example(layout, e, user_slot_[key], new_user, item_slot_[item], new_item);
        }
        for (auto key : used_keys) user_slot_[key] = -1;
        for (auto item : layout.items) item_slot_[static_cast<std::size_t>(item)] = -1;
        return layout;
    }

private:
    std::vector<Eigen::Index> user_slot_;
    std::vector<Eigen::Index> item_slot_;
};

/// Forward pass for a set of distinct users and items, keeping what the
/// backward pass needs.
template <typename Scalar>
class TowerPass {
public:
    TowerPass(std::span<const std::vector<ItemId>* const> users, std::span<const ItemId> items,
              const ModelParams<Scalar>& params, const EncoderConfig& config)
        : params_(params), config_(config), users_(users.begin(), users.end()), items_(items.begin(), items.end()) {
        const Eigen::Index d = params.dim();
        user_unit_.resize(Eigen::Index(users_.size()), d);
        item_unit_.resize(Eigen::Index(items_.size()), d);
        user_norm_.resize(Eigen::Index(users_.size()));
        item_norm_.resize(Eigen::Index(items_.size()));
        for (std::size_t r = 0; r < users_.size(); ++r) {
            const Vector<Scalar> raw = encode_user<Scalar>(*users_[r], params, config);
            const Scalar n = raw.norm();
            if (!(n > Scalar(0))) throw std::domain_error("user vector has zero norm");
            user_norm_(Eigen::Index(r)) = n;
            user_unit_.row(Eigen::Index(r)) = raw.transpose() / n;
        }
        for (std::size_t c = 0; c < items_.size(); ++c) {
            detail::check_item(items_[c], params);
            const auto raw = params.item_embeddings.row(items_[c]);
            const Scalar n = raw.norm();
            if (!(n > Scalar(0))) throw std::domain_error("item " + std::to_string(items_[c]) + " has zero norm");
            item_norm_(Eigen::Index(c)) = n;
            item_unit_.row(Eigen::Index(c)) = raw / n;
        }
    }

    /// R x C temperature-scaled cosine scores.
    Matrix<Scalar> logits() const { return (user_unit_ * item_unit_.transpose()) / params_.temperature; }

    Scalar logit(Eigen::Index r, Eigen::Index c) const {
        return user_unit_.row(r).dot(item_unit_.row(c)) / params_.temperature;
    }

    /// Accumulates d loss / d params given d loss / d logits (R x C).
    void backward(const Matrix<Scalar>& d_logits, SparseGrad<Scalar>& out) const {
        const Scalar inv_t = Scalar(1) / params_.temperature;
        const RowMatrix<Scalar> d_user_unit = (d_logits * item_unit_) * inv_t;
        const RowMatrix<Scalar> d_item_unit = (d_logits.transpose() * user_unit_) * inv_t;
        backward_units(d_user_unit, d_item_unit, out);
    }

    /// Same, from gradients on the unit-normalized vectors.
    void backward_units(const RowMatrix<Scalar>& d_user_unit, const RowMatrix<Scalar>& d_item_unit,
                        SparseGrad<Scalar>& out) const {
        for (std::size_t c = 0; c < items_.size(); ++c) {
            const auto k = Eigen::Index(c);
            const Vector<Scalar> g = d_item_unit.row(k).transpose();
            if (g.isZero(0)) continue;
            const Vector<Scalar> n = item_unit_.row(k).transpose();
            out.add_row(items_[c], (g - n * n.dot(g)) / item_norm_(k));
        }
        for (std::size_t r = 0; r < users_.size(); ++r) {
            const auto k = Eigen::Index(r);
            const Vector<Scalar> g = d_user_unit.row(k).transpose();
            if (g.isZero(0)) continue;
            const Vector<Scalar> n = user_unit_.row(k).transpose();
            backward_user(*users_[r], (g - n * n.dot(g)) / user_norm_(k), out);
        }
    }

    const RowMatrix<Scalar>& user_unit() const noexcept { return user_unit_; }
    const RowMatrix<Scalar>& item_unit() const noexcept { return item_unit_; }

private:
    void backward_user(const std::vector<ItemId>& seq, const Vector<Scalar>& g, SparseGrad<Scalar>& out) const {
        switch (config_.aggregator) {
            case Aggregator::last:
                out.add_row(seq.back(), g);
                return;
            case Aggregator::mean: {
                const Vector<Scalar> share = g / static_cast<Scalar>(seq.size());
                for (ItemId id : seq) out.add_row(id, share);
                return;
            }
            case Aggregator::attention: {
                const Vector<Scalar> w = detail::attention_weights(std::span<const ItemId>(seq), params_);
                Vector<Scalar> gk(w.size());
                for (std::size_t k = 0; k < seq.size(); ++k)
                    gk(Eigen::Index(k)) = params_.item_embeddings.row(seq[k]).dot(g);
                const Scalar mean_g = w.dot(gk);
                Vector<Scalar> d_att = Vector<Scalar>::Zero(params_.dim());
                for (std::size_t k = 0; k < seq.size(); ++k) {
                    const auto kk = Eigen::Index(k);
                    const Scalar d_logit = w(kk) * (gk(kk) - mean_g);
                    out.add_row(seq[k], w(kk) * g + d_logit * params_.attention);
                    d_att += d_logit * params_.item_embeddings.row(seq[k]).transpose();
                }
                out.add_attention(d_att);
                return;
            }
        }
    }

    const ModelParams<Scalar>& params_;
    EncoderConfig config_;
    std::vector<const std::vector<ItemId>*> users_;
    std::vector<ItemId> items_;
    RowMatrix<Scalar> user_unit_;
    RowMatrix<Scalar> item_unit_;
    Vector<Scalar> user_norm_;
    Vector<Scalar> item_norm_;
};

template <typename Scalar>
LossOutput<Scalar> bidirectional_objective(const BatchLayout& layout, const ModelParams<Scalar>& params,
                                           const EncoderConfig& config, const BidirectionalFlags& flags) {
    TowerPass<Scalar> pass(layout.users, layout.items, params, config);
    const auto rows = Eigen::Index(layout.users.size());
    const auto cols = Eigen::Index(layout.items.size());
    PairTable<Scalar> table;
    table.logits = pass.logits();
    table.row_weight = Vector<Scalar>::Zero(rows);
    table.col_weight = Vector<Scalar>::Zero(cols);
    table.row_log_p.resize(rows);
    table.col_log_p.resize(cols);
    for (Eigen::Index r = 0; r < rows; ++r) table.row_log_p(r) = static_cast<Scalar>(layout.row_log_p[std::size_t(r)]);
    for (Eigen::Index c = 0; c < cols; ++c) table.col_log_p(c) = static_cast<Scalar>(layout.col_log_p[std::size_t(c)]);

    Matrix<double> counts = Matrix<double>::Zero(rows, cols);
    for (std::size_t k = 0; k < layout.size(); ++k) {
        table.row_weight(layout.example_user[k]) += Scalar(1);
        table.col_weight(layout.example_item[k]) += Scalar(1);
        counts(layout.example_user[k], layout.example_item[k]) += 1.0;
    }
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r)
            if (counts(r, c) > 0) table.positives.push_back({r, c, counts(r, c)});

    const LogitLoss<Scalar> loss = bidirectional_nce(table, flags);
    LossOutput<Scalar> out{loss.value, loss.row_term, loss.col_term, SparseGrad<Scalar>(params.dim())};
    pass.backward(loss.grad, out.grads);
    return out;
}

template <typename Scalar>
LossOutput<Scalar> bce_objective(const BatchLayout& layout, const ModelParams<Scalar>& params,
                                 const EncoderConfig& config) {
    if (layout.labels.size() != layout.size()) throw std::invalid_argument("BCE batch needs labels");
    if (layout.size() == 0) throw std::invalid_argument("BCE needs at least one example");
    TowerPass<Scalar> pass(layout.users, layout.items, params, config);
    const auto rows = Eigen::Index(layout.users.size());
    const auto cols = Eigen::Index(layout.items.size());

    // One cell per distinct (user, item) pair with its label counts.
    std::unordered_map<std::int64_t, Eigen::Index> cell_of;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> cells;
    std::vector<Scalar> pos, neg;
    for (std::size_t k = 0; k < layout.size(); ++k) {
        const std::int64_t key = std::int64_t(layout.example_user[k]) * cols + layout.example_item[k];
        auto [it, fresh] = cell_of.try_emplace(key, Eigen::Index(cells.size()));
        if (fresh) {
            cells.emplace_back(layout.example_user[k], layout.example_item[k]);
            pos.push_back(Scalar(0));
            neg.push_back(Scalar(0));
        }
        (layout.labels[k] ? pos : neg)[std::size_t(it->second)] += Scalar(1);
    }
    const auto n = Eigen::Index(cells.size());
    Vector<Scalar> logits(n);
    for (Eigen::Index k = 0; k < n; ++k) logits(k) = pass.logit(cells[std::size_t(k)].first, cells[std::size_t(k)].second);
    const LogitLoss<Scalar> loss =
        bce_cells<Scalar>(logits, Eigen::Map<const Vector<Scalar>>(pos.data(), n),
                          Eigen::Map<const Vector<Scalar>>(neg.data(), n));

    Matrix<Scalar> d_logits = Matrix<Scalar>::Zero(rows, cols);
    for (Eigen::Index k = 0; k < n; ++k) d_logits(cells[std::size_t(k)].first, cells[std::size_t(k)].second) = loss.grad(k, 0);
    LossOutput<Scalar> out{loss.value, loss.value, Scalar(0), SparseGrad<Scalar>(params.dim())};
    pass.backward(d_logits, out.grads);
    return out;
}

/// Row loss with the partition over `vocabulary` (every candidate item).
template <typename Scalar>
LossOutput<Scalar> full_softmax_row_objective(const BatchLayout& layout, const ModelParams<Scalar>& params,
                                              const EncoderConfig& config, std::span<const ItemId> vocabulary) {
    std::unordered_map<ItemId, Eigen::Index> column;
    for (std::size_t c = 0; c < vocabulary.size(); ++c) column.emplace(vocabulary[c], Eigen::Index(c));
    std::vector<PositiveCell> positives;
    for (std::size_t k = 0; k < layout.size(); ++k) {
        auto it = column.find(layout.items[std::size_t(layout.example_item[k])]);
        if (it == column.end()) throw std::invalid_argument("positive item missing from the softmax vocabulary");
        positives.push_back({layout.example_user[k], it->second, 1.0});
    }
    TowerPass<Scalar> pass(layout.users, vocabulary, params, config);
    const LogitLoss<Scalar> loss = full_softmax_row<Scalar>(pass.logits(), positives);
    LossOutput<Scalar> out{loss.value, loss.value, Scalar(0), SparseGrad<Scalar>(params.dim())};
    pass.backward(loss.grad, out.grads);
    return out;
}

/// Column loss with the partition over `universe` (every candidate pseudo-user).
template <typename Scalar>
LossOutput<Scalar> full_softmax_col_objective(const BatchLayout& layout, const ModelParams<Scalar>& params,
                                              const EncoderConfig& config,
                                              std::span<const std::vector<ItemId>> universe) {
    std::unordered_map<const std::vector<ItemId>*, Eigen::Index, detail::SequenceHash, detail::SequenceEqual> row;
    std::vector<const std::vector<ItemId>*> users;
    for (std::size_t r = 0; r < universe.size(); ++r) {
        row.emplace(&universe[r], Eigen::Index(r));
        users.push_back(&universe[r]);
    }
    std::vector<PositiveCell> positives;
    for (std::size_t k = 0; k < layout.size(); ++k) {
        auto it = row.find(layout.users[std::size_t(layout.example_user[k])]);
        if (it == row.end()) throw std::invalid_argument("positive user missing from the softmax universe");
        positives.push_back({it->second, layout.example_item[k], 1.0});
    }
    TowerPass<Scalar> pass(users, layout.items, params, config);
    const LogitLoss<Scalar> loss = full_softmax_col<Scalar>(pass.logits(), positives);
    LossOutput<Scalar> out{loss.value, Scalar(0), loss.value, SparseGrad<Scalar>(params.dim())};
    pass.backward(loss.grad, out.grads);
    return out;
}

/// Proposal distribution for sampled softmax over an item catalog.
struct ItemProposal {
    std::vector<ItemId> items;
    std::vector<double> probs;  // sums to 1
    std::vector<double> cdf;

    static ItemProposal uniform(std::vector<ItemId> items) {
        ItemProposal p{std::move(items), {}, {}};
        p.probs.assign(p.items.size(), 1.0 / static_cast<double>(p.items.size()));
        p.accumulate();
        return p;
    }
    static ItemProposal from_counts(std::vector<ItemId> items, std::span<const std::int64_t> counts) {
        ItemProposal p{std::move(items), {}, {}};
        double total = 0.0;
        for (auto c : counts) total += double(c);
        for (auto c : counts) p.probs.push_back(double(c) / total);
        p.accumulate();
        return p;
    }

    std::size_t draw(double u) const {
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        return std::min<std::size_t>(std::size_t(it - cdf.begin()), probs.size() - 1);
    }

private:
    void accumulate() {
        double acc = 0.0;
        for (double q : probs) cdf.push_back(acc += q);
    }
};

/// Draws `count` distinct catalog positions, excluding `exclude`, successively
/// in proportion to the proposal.
inline std::vector<std::size_t> sample_without_replacement(const ItemProposal& proposal, std::size_t exclude,
                                                           std::size_t count, std::mt19937_64& rng) {
    std::vector<std::size_t> picked;
    std::unordered_set<std::size_t> taken{exclude};
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double remaining = 1.0 - proposal.probs[exclude];
    std::size_t misses = 0;
    while (picked.size() < count) {
        // Rejection from the full proposal while cheap, exact renormalized draw otherwise.
        std::size_t pos = 0;
        if (misses < 16) {
            pos = proposal.draw(unit(rng));
            if (taken.contains(pos)) {
                ++misses;
                continue;
            }
        } else {
            const double u = unit(rng) * remaining;
            double acc = 0.0;
            pos = proposal.probs.size();
            for (std::size_t k = 0; k < proposal.probs.size(); ++k) {
                if (taken.contains(k)) continue;
                acc += proposal.probs[k];
                pos = k;
                if (u < acc) break;
            }
        }
        misses = 0;
        taken.insert(pos);
        picked.push_back(pos);
        remaining -= proposal.probs[pos];
    }
    return picked;
}

/// Sampled softmax over l2-normalized towers. Each positive gets
/// `num_sampled` distinct negatives drawn from the proposal without the
/// positive; negative logits are corrected by log(S * q'(j)), q' being the
/// proposal renormalized without the positive. Under a uniform proposal
/// S * q'(j) is the exact inclusion probability, so the corrected negatives
/// estimate the negative partition without bias; otherwise it is the usual
/// small-sample approximation.
template <typename Scalar>
LossOutput<Scalar> ssm_objective(const BatchLayout& layout, const ModelParams<Scalar>& params,
                                 const EncoderConfig& config, const ItemProposal& proposal, int num_sampled,
                                 std::mt19937_64& rng) {
    if (num_sampled < 1) throw std::invalid_argument("num_sampled must be >= 1");
    if (static_cast<std::size_t>(num_sampled) >= proposal.items.size())
        throw std::invalid_argument("num_sampled must be smaller than the item vocabulary");
    std::unordered_map<ItemId, std::size_t> catalog;
    for (std::size_t k = 0; k < proposal.items.size(); ++k) catalog.emplace(proposal.items[k], k);

    std::vector<ItemId> columns = layout.items;
    std::unordered_map<ItemId, Eigen::Index> column_of;
    for (std::size_t c = 0; c < columns.size(); ++c) column_of.emplace(columns[c], Eigen::Index(c));

    // Examples sharing a (pseudo-user, positive) cell share one negative draw.
    struct Draw {
        Eigen::Index row = 0;
        Eigen::Index positive = 0;
        Scalar count = Scalar(0);
        std::vector<Eigen::Index> cols;
        std::vector<Scalar> log_expected;
    };
    std::vector<Draw> draws;
    std::unordered_map<std::int64_t, std::size_t> draw_of;
    const Scalar log_s = std::log(static_cast<Scalar>(num_sampled));
    const auto num_cols = std::int64_t(layout.items.size());
    for (std::size_t k = 0; k < layout.size(); ++k) {
        const std::int64_t key = std::int64_t(layout.example_user[k]) * num_cols + layout.example_item[k];
        auto [dit, fresh_cell] = draw_of.try_emplace(key, draws.size());
        if (!fresh_cell) {
            draws[dit->second].count += Scalar(1);
            continue;
        }
        Draw d{layout.example_user[k], layout.example_item[k], Scalar(1), {}, {}};
        const ItemId positive = layout.items[std::size_t(layout.example_item[k])];
        auto pit = catalog.find(positive);
        if (pit == catalog.end()) throw std::invalid_argument("positive item missing from the proposal catalog");
        const double rest = 1.0 - proposal.probs[pit->second];
        for (std::size_t pos : sample_without_replacement(proposal, pit->second, std::size_t(num_sampled), rng)) {
            const ItemId item = proposal.items[pos];
            auto [cit, fresh] = column_of.try_emplace(item, Eigen::Index(columns.size()));
            if (fresh) columns.push_back(item);
            d.cols.push_back(cit->second);
            d.log_expected.push_back(log_s + static_cast<Scalar>(std::log(proposal.probs[pos] / rest)));
        }
        draws.push_back(std::move(d));
    }

    TowerPass<Scalar> pass(layout.users, columns, params, config);
    Matrix<Scalar> d_logits = Matrix<Scalar>::Zero(Eigen::Index(layout.users.size()), Eigen::Index(columns.size()));
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(layout.size());
    Scalar acc = Scalar(0);
    std::vector<Scalar> negatives;
    for (const Draw& d : draws) {
        negatives.clear();
        for (auto c : d.cols) negatives.push_back(pass.logit(d.row, c));
        const LogitLoss<Scalar> l = sampled_softmax<Scalar>(pass.logit(d.row, d.positive), negatives, d.log_expected);
        const Scalar w = d.count * inv_b;
        acc += d.count * l.value;
        d_logits(d.row, d.positive) += l.grad(0, 0) * w;
        for (std::size_t j = 0; j < d.cols.size(); ++j) d_logits(d.row, d.cols[j]) += l.grad(Eigen::Index(j + 1), 0) * w;
    }
    LossOutput<Scalar> out{acc * inv_b, acc * inv_b, Scalar(0), SparseGrad<Scalar>(params.dim())};
    pass.backward(d_logits, out.grads);
    return out;
}

// Convenience forms over spans of examples.

template <typename Scalar>
LossOutput<Scalar> bce_loss(std::span<const LabeledExample> batch, const ModelParams<Scalar>& params,
                            const EncoderConfig& config = {}) {
    return bce_objective(layout_of(batch), params, config);
}

template <typename Scalar>
LossOutput<Scalar> bidirectional_nce_loss(std::span<const TrainingExample> batch, const ModelParams<Scalar>& params,
                                          const EncoderConfig& config, const BidirectionalFlags& flags) {
    if (batch.size() < 2) throw std::invalid_argument("in-batch loss needs a batch of at least 2 examples");
    return bidirectional_objective(layout_of(batch), params, config, flags);
}

template <typename Scalar>
LossOutput<Scalar> full_softmax_row_loss(std::span<const TrainingExample> batch, const ModelParams<Scalar>& params,
                                         const EncoderConfig& config, std::span<const ItemId> vocabulary) {
    return full_softmax_row_objective(layout_of(batch), params, config, vocabulary);
}

template <typename Scalar>
LossOutput<Scalar> full_softmax_col_loss(std::span<const TrainingExample> batch, const ModelParams<Scalar>& params,
                                         const EncoderConfig& config, std::span<const std::vector<ItemId>> universe) {
    return full_softmax_col_objective(layout_of(batch), params, config, universe);
}

template <typename Scalar>
LossOutput<Scalar> ssm_loss(std::span<const TrainingExample> batch, const ModelParams<Scalar>& params,
                            const EncoderConfig& config, const ItemProposal& proposal, int num_sampled,
                            std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return ssm_objective(layout_of(batch), params, config, proposal, num_sampled, rng);
}

}  // namespace matchkit
