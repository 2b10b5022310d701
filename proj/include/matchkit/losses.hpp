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

// Matching losses evaluated on logits, with closed-form gradients with respect
// to those logits. Everything here is independent of how the logits were
// produced; objective.hpp chains these gradients back into the towers.

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "matchkit/data_pipeline.hpp"
#include "matchkit/model.hpp"

namespace matchkit {

/// Binary switches of the generalized bidirectional in-batch loss: `alpha`
/// enables the row (user -> item) softmax, `beta` the column (item -> user)
/// softmax, and the deltas subtract log p(i) / log p(u) from the logits inside
/// the respective softmax.
struct BidirectionalFlags {
    bool alpha = true;
    bool beta = true;
    bool delta_alpha = true;
    bool delta_beta = true;

    friend bool operator==(const BidirectionalFlags&, const BidirectionalFlags&) = default;
};

enum class LossFamily { bce, ssm, full_softmax_row, full_softmax_col, bidirectional };
enum class Proposal { marginal, uniform };

LossFamily parse_loss_family(std::string_view name);
std::string_view to_string(LossFamily family);
Proposal parse_proposal(std::string_view name);
std::string_view to_string(Proposal proposal);

struct LossConfig {
    LossFamily family = LossFamily::bidirectional;
    BidirectionalFlags flags{};
    NegativeStrategy negative_strategy = NegativeStrategy::uniform;
    int negative_ratio = 1;
    int num_sampled = 10;
    Proposal ssm_proposal = Proposal::marginal;
    std::string preset = "bbcNCE";

    /// Rejects alpha = beta = 0 and non-positive counts.
    void validate() const;
};

/// Named configurations: InfoNCE, SimCLR, row-bcNCE, col-bcNCE, bbcNCE, SSM,
/// and BCE-<strategy> for the four negative-sampling strategies.
LossConfig loss_preset(std::string_view name);
std::vector<std::string> loss_preset_names();

/// Quantity the learned logit should track, up to an additive constant.
enum class OptimumTarget { joint, item_given_user, user_given_item, pointwise_mutual_information };
OptimumTarget optimum_target(const LossConfig& config);
std::string_view target_name(OptimumTarget target);

namespace detail {

template <typename Scalar>
Scalar softplus(Scalar x) {
    return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
}

}  // namespace detail

template <typename Scalar>
struct LogitLoss {
    Scalar value = Scalar(0);
    Scalar row_term = Scalar(0);  // alpha part, already included in value
    Scalar col_term = Scalar(0);  // beta part
    Matrix<Scalar> grad;          // d value / d logits, same shape as the logits
};

/// A positive (row, column) cell of a compressed score table and how often it
/// occurs in the batch.
struct PositiveCell {
    Eigen::Index row = 0;
    Eigen::Index col = 0;
    double count = 1.0;
};

/// In-batch scores with duplicate users/items merged. A batch of B examples
/// maps to R distinct pseudo-users and C distinct items; weights hold the
/// multiplicities so that sums over the B x B matrix reduce to sums over R x C.
template <typename Scalar>
struct PairTable {
    Matrix<Scalar> logits;      // R x C
    Vector<Scalar> row_weight;  // R
    Vector<Scalar> col_weight;  // C
    Vector<Scalar> row_log_p;   // log p(u) per row
    Vector<Scalar> col_log_p;   // log p(i) per column
    std::vector<PositiveCell> positives;
};

/// Mean over the batch positives of
///   -alpha * log softmax_row  - beta * log softmax_col
/// where the row softmax runs over the batch's target items with logits
/// phi - delta_alpha * log p(i), and the column softmax over the batch's users
/// with logits phi - delta_beta * log p(u).
template <typename Scalar>
LogitLoss<Scalar> bidirectional_nce(const PairTable<Scalar>& table, const BidirectionalFlags& flags) {
    if (!flags.alpha && !flags.beta) throw std::invalid_argument("alpha = beta = 0 gives an identically zero loss");
    const Eigen::Index rows = table.logits.rows();
    const Eigen::Index cols = table.logits.cols();
    double total = 0.0;
    for (const auto& p : table.positives) total += p.count;
    if (total < 2.0) throw std::invalid_argument("in-batch loss needs a batch of at least 2 examples");

    LogitLoss<Scalar> out;
    out.grad = Matrix<Scalar>::Zero(rows, cols);
    const Scalar inv_total = Scalar(1) / static_cast<Scalar>(total);

    // positive mass per row / column
    Vector<Scalar> row_pos = Vector<Scalar>::Zero(rows);
    Vector<Scalar> col_pos = Vector<Scalar>::Zero(cols);
    for (const auto& p : table.positives) {
        row_pos(p.row) += static_cast<Scalar>(p.count);
        col_pos(p.col) += static_cast<Scalar>(p.count);
    }

    if (flags.alpha) {
        Matrix<Scalar> shifted = table.logits;
        if (flags.delta_alpha) shifted.rowwise() -= table.col_log_p.transpose();
        Vector<Scalar> lse(rows);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const Scalar top = shifted.row(r).maxCoeff();
            const auto w = ((shifted.row(r).array() - top).exp() * table.col_weight.transpose().array()).eval();
            const Scalar z = w.sum();
            lse(r) = top + std::log(z);
            out.grad.row(r) += (row_pos(r) * inv_total / z) * w.matrix();
        }
        Scalar acc = Scalar(0);
        for (const auto& p : table.positives) {
            const Scalar c = static_cast<Scalar>(p.count);
            acc += c * (lse(p.row) - shifted(p.row, p.col));
            out.grad(p.row, p.col) -= c * inv_total;
        }
        out.row_term = acc * inv_total;
    }

    if (flags.beta) {
        Matrix<Scalar> shifted = table.logits;
        if (flags.delta_beta) shifted.colwise() -= table.row_log_p;
        Vector<Scalar> lse(cols);
        for (Eigen::Index c = 0; c < cols; ++c) {
            const Scalar top = shifted.col(c).maxCoeff();
            const auto w = ((shifted.col(c).array() - top).exp() * table.row_weight.array()).eval();
            const Scalar z = w.sum();
            lse(c) = top + std::log(z);
            out.grad.col(c) += (col_pos(c) * inv_total / z) * w.matrix();
        }
        Scalar acc = Scalar(0);
        for (const auto& p : table.positives) {
            const Scalar c = static_cast<Scalar>(p.count);
            acc += c * (lse(p.col) - shifted(p.row, p.col));
            out.grad(p.row, p.col) -= c * inv_total;
        }
        out.col_term = acc * inv_total;
    }
    out.value = out.row_term + out.col_term;
    return out;
}

/// Uncompressed form: `scores` is B x B with positives on the diagonal,
/// `log_p_u` aligned with rows and `log_p_i` with columns.
template <typename Scalar>
LogitLoss<Scalar> bidirectional_nce_loss(const Matrix<Scalar>& scores, const Vector<Scalar>& log_p_u,
                                         const Vector<Scalar>& log_p_i, const BidirectionalFlags& flags) {
    const Eigen::Index b = scores.rows();
    if (scores.cols() != b || log_p_u.size() != b || log_p_i.size() != b)
        throw std::invalid_argument("score matrix must be B x B with B-long bias vectors");
    if (b < 2) throw std::invalid_argument("in-batch loss needs a batch of at least 2 examples");
    PairTable<Scalar> table{scores, Vector<Scalar>::Ones(b), Vector<Scalar>::Ones(b), log_p_u, log_p_i, {}};
    for (Eigen::Index k = 0; k < b; ++k) table.positives.push_back({k, k, 1.0});
    return bidirectional_nce(table, flags);
}

/// Mean Bernoulli negative log-likelihood over cells carrying positive and
/// negative counts; the gradient is per cell.
template <typename Scalar>
LogitLoss<Scalar> bce_cells(const Vector<Scalar>& logits, const Vector<Scalar>& positives,
                            const Vector<Scalar>& negatives) {
    const Scalar total = positives.sum() + negatives.sum();
    if (!(total > Scalar(0))) throw std::invalid_argument("BCE needs at least one example");
    LogitLoss<Scalar> out;
    out.grad = Matrix<Scalar>::Zero(logits.size(), 1);
    Scalar acc = Scalar(0);
    for (Eigen::Index k = 0; k < logits.size(); ++k) {
        const Scalar x = logits(k);
        acc += positives(k) * detail::softplus(-x) + negatives(k) * detail::softplus(x);
        out.grad(k, 0) = (-positives(k) * detail::sigmoid(-x) + negatives(k) * detail::sigmoid(x)) / total;
    }
    out.value = acc / total;
    return out;
}

/// One logit per example with its 0/1 label.
template <typename Scalar>
LogitLoss<Scalar> bce_loss(const Vector<Scalar>& logits, std::span<const int> labels) {
    if (static_cast<std::size_t>(logits.size()) != labels.size())
        throw std::invalid_argument("one label per logit required");
    Vector<Scalar> pos(logits.size()), neg(logits.size());
    for (Eigen::Index k = 0; k < logits.size(); ++k) {
        pos(k) = labels[std::size_t(k)] ? Scalar(1) : Scalar(0);
        neg(k) = Scalar(1) - pos(k);
    }
    return bce_cells(logits, pos, neg);
}

/// Exact multinomial NLL with the partition over every column (the entire
/// item vocabulary): mean over positives of logsumexp(row) - logit.
template <typename Scalar>
LogitLoss<Scalar> full_softmax_row(const Matrix<Scalar>& logits, std::span<const PositiveCell> positives) {
    LogitLoss<Scalar> out;
    out.grad = Matrix<Scalar>::Zero(logits.rows(), logits.cols());
    double total = 0.0;
    for (const auto& p : positives) total += p.count;
    if (total <= 0.0) throw std::invalid_argument("full softmax needs at least one positive");
    const Scalar inv_total = Scalar(1) / static_cast<Scalar>(total);
    Scalar acc = Scalar(0);
    for (const auto& p : positives) {
        const Scalar top = logits.row(p.row).maxCoeff();
        const auto w = (logits.row(p.row).array() - top).exp().eval();
        const Scalar z = w.sum();
        const Scalar c = static_cast<Scalar>(p.count);
        acc += c * (top + std::log(z) - logits(p.row, p.col));
        out.grad.row(p.row) += (c * inv_total / z) * w.matrix();
        out.grad(p.row, p.col) -= c * inv_total;
    }
    out.value = out.row_term = acc * inv_total;
    return out;
}

/// Column counterpart: partition over every row (the entire user universe).
template <typename Scalar>
LogitLoss<Scalar> full_softmax_col(const Matrix<Scalar>& logits, std::span<const PositiveCell> positives) {
    std::vector<PositiveCell> flipped(positives.begin(), positives.end());
    for (auto& p : flipped) std::swap(p.row, p.col);
    const Matrix<Scalar> transposed = logits.transpose();
    LogitLoss<Scalar> t = full_softmax_row<Scalar>(transposed, flipped);
    LogitLoss<Scalar> out;
    out.value = out.col_term = t.value;
    out.grad = t.grad.transpose();
    return out;
}

/// Sampled softmax for one positive. `log_expected` holds, per sampled
/// negative, log(S * q'(j)) where q' is the proposal renormalized without the
/// positive; subtracting it makes the sampled partition an unbiased estimate of
/// the full one. The positive logit is used as is.
/// grad(0) is for the positive, grad(1 + k) for negative k.
template <typename Scalar>
LogitLoss<Scalar> sampled_softmax(Scalar positive, std::span<const Scalar> negatives,
                                  std::span<const Scalar> log_expected) {
    if (negatives.size() != log_expected.size()) throw std::invalid_argument("one correction per negative");
    Vector<Scalar> z(static_cast<Eigen::Index>(negatives.size() + 1));
    z(0) = positive;
    for (std::size_t k = 0; k < negatives.size(); ++k) z(Eigen::Index(k + 1)) = negatives[k] - log_expected[k];
    const Scalar top = z.maxCoeff();
    Vector<Scalar> w = (z.array() - top).exp().matrix();
    const Scalar sum = w.sum();
    w /= sum;
    LogitLoss<Scalar> out;
    out.value = out.row_term = top + std::log(sum) - positive;
    out.grad = w;
    out.grad(0, 0) -= Scalar(1);
    return out;
}

}  // namespace matchkit
