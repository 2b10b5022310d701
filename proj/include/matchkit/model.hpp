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

// Two-tower encoder over a single shared item-embedding table. The user tower
// pools the embeddings of a pseudo-user's item sequence; the item tower is the
// table row itself. Scores are cosine similarities divided by a temperature.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "matchkit/types.hpp"

namespace matchkit {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Aggregator { mean, last, attention };

inline Aggregator parse_aggregator(std::string_view name) {
    if (name == "mean") return Aggregator::mean;
    if (name == "last") return Aggregator::last;
    if (name == "attention") return Aggregator::attention;
    throw std::invalid_argument("unknown aggregator '" + std::string(name) + "'");
}

inline std::string_view to_string(Aggregator a) {
    switch (a) {
        case Aggregator::mean: return "mean";
        case Aggregator::last: return "last";
        case Aggregator::attention: return "attention";
    }
    return "unknown";
}

/// The context extractor is always the identity; only pooling is configurable.
struct EncoderConfig {
    Aggregator aggregator = Aggregator::mean;
};

template <typename Scalar>
struct ModelParams {
    RowMatrix<Scalar> item_embeddings;  // num_items x dim
    Vector<Scalar> attention;            // dim; read only by the attention aggregator
    Scalar temperature = Scalar(1);

    Eigen::Index num_items() const { return item_embeddings.rows(); }
    Eigen::Index dim() const { return item_embeddings.cols(); }

    /// Entries i.i.d. uniform on [-1/sqrt(d), 1/sqrt(d)]; attention starts at zero.
    static ModelParams init(Eigen::Index num_items, Eigen::Index dim, Scalar temperature, std::uint64_t seed) {
        if (num_items < 1 || dim < 1) throw std::invalid_argument("model needs at least one item and dim >= 1");
        if (!(temperature > Scalar(0))) throw std::invalid_argument("temperature must be positive");
        ModelParams p;
        p.item_embeddings.resize(num_items, dim);
        p.attention = Vector<Scalar>::Zero(dim);
        p.temperature = temperature;
        std::mt19937_64 rng(seed);
        const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
        std::uniform_real_distribution<double> uniform(-bound, bound);
        for (Eigen::Index r = 0; r < num_items; ++r)
            for (Eigen::Index c = 0; c < dim; ++c) p.item_embeddings(r, c) = static_cast<Scalar>(uniform(rng));
        return p;
    }

    void validate() const {
        if (!(temperature > Scalar(0))) throw std::invalid_argument("temperature must be positive");
        if (attention.size() != dim()) throw std::invalid_argument("attention vector size differs from dim");
        if (!item_embeddings.allFinite() || !attention.allFinite())
            throw std::invalid_argument("model parameters contain non-finite values");
    }

    template <typename Other>
    ModelParams<Other> cast() const {
        return {item_embeddings.template cast<Other>(), attention.template cast<Other>(),
                static_cast<Other>(temperature)};
    }
};

namespace detail {

template <typename Scalar>
void check_item(ItemId id, const ModelParams<Scalar>& params) {
    if (id < 0 || id >= params.num_items()) throw OutOfVocabulary(id);
}

/// Attention weights over the rows of `sequence`: softmax of <row, attention>.
template <typename Scalar>
Vector<Scalar> attention_weights(std::span<const ItemId> sequence, const ModelParams<Scalar>& params) {
    Vector<Scalar> logits(static_cast<Eigen::Index>(sequence.size()));
    for (std::size_t k = 0; k < sequence.size(); ++k)
        logits(Eigen::Index(k)) = params.item_embeddings.row(sequence[k]).dot(params.attention);
    const Scalar top = logits.maxCoeff();
    Vector<Scalar> w = (logits.array() - top).exp().matrix();
    return w / w.sum();
}

}  // namespace detail

/// Raw (un-normalized) user vector. Throws OutOfVocabulary on unknown ids.
template <typename Scalar>
Vector<Scalar> encode_user(std::span<const ItemId> pseudo_user, const ModelParams<Scalar>& params,
                           const EncoderConfig& config = {}) {
    if (pseudo_user.empty()) throw std::invalid_argument("pseudo-user sequence is empty");
    for (ItemId id : pseudo_user) detail::check_item(id, params);

    switch (config.aggregator) {
        case Aggregator::last:
            return params.item_embeddings.row(pseudo_user.back()).transpose();
        case Aggregator::mean: {
            Vector<Scalar> sum = Vector<Scalar>::Zero(params.dim());
            for (ItemId id : pseudo_user) sum += params.item_embeddings.row(id).transpose();
            return sum / static_cast<Scalar>(pseudo_user.size());
        }
        case Aggregator::attention: {
            const Vector<Scalar> w = detail::attention_weights(pseudo_user, params);
            Vector<Scalar> out = Vector<Scalar>::Zero(params.dim());
            for (std::size_t k = 0; k < pseudo_user.size(); ++k)
                out += w(Eigen::Index(k)) * params.item_embeddings.row(pseudo_user[k]).transpose();
            return out;
        }
    }
    throw std::logic_error("unhandled aggregator");
}

/// Inference-time variant: unknown ids are skipped. Throws only if nothing is left.
template <typename Scalar>
Vector<Scalar> encode_user_lenient(std::span<const ItemId> pseudo_user, const ModelParams<Scalar>& params,
                                   const EncoderConfig& config = {}, std::size_t* skipped = nullptr) {
    std::vector<ItemId> known;
    known.reserve(pseudo_user.size());
    for (ItemId id : pseudo_user)
        if (id >= 0 && id < params.num_items()) known.push_back(id);
    if (skipped) *skipped = pseudo_user.size() - known.size();
    if (known.empty()) throw std::invalid_argument("no item of the pseudo-user is in the vocabulary");
    return encode_user<Scalar>(known, params, config);
}

template <typename Scalar>
Vector<Scalar> encode_item(ItemId item, const ModelParams<Scalar>& params) {
    detail::check_item(item, params);
    return params.item_embeddings.row(item).transpose();
}

/// <u, i> / (|u| |i| tau). Zero-norm inputs are rejected.
template <typename DerivedU, typename DerivedI, typename Scalar = typename DerivedU::Scalar>
Scalar score(const Eigen::MatrixBase<DerivedU>& user, const Eigen::MatrixBase<DerivedI>& item, Scalar temperature) {
    const Scalar nu = user.norm();
    const Scalar ni = item.norm();
    if (!(nu > Scalar(0)) || !(ni > Scalar(0))) throw std::domain_error("cannot score a zero-norm vector");
    return user.dot(item) / (nu * ni * temperature);
}

/// Entry (r, c) scores the user of example r against the target of example c.
template <typename Scalar, typename Example>
Matrix<Scalar> score_matrix(std::span<const Example> batch, const ModelParams<Scalar>& params,
                            const EncoderConfig& config = {}) {
    const auto b = static_cast<Eigen::Index>(batch.size());
    RowMatrix<Scalar> users(b, params.dim());
    RowMatrix<Scalar> items(b, params.dim());
    for (Eigen::Index r = 0; r < b; ++r) {
        const auto& e = batch[std::size_t(r)];
        users.row(r) = encode_user<Scalar>(e.pseudo_user, params, config).transpose();
        items.row(r) = encode_item(e.target_item, params).transpose();
        if (!(users.row(r).norm() > Scalar(0)) || !(items.row(r).norm() > Scalar(0)))
            throw std::domain_error("cannot score a zero-norm vector");
    }
    users.rowwise().normalize();
    items.rowwise().normalize();
    return (users * items.transpose()) / params.temperature;
}

}  // namespace matchkit
