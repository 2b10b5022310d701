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

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "matchkit/objective.hpp"

namespace matchkit {

enum class OptimizerKind { sgd, adam };

inline OptimizerKind parse_optimizer(std::string_view name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adam") return OptimizerKind::adam;
    throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam moments for one parameter row, with its own step count so that bias
/// correction matches a dense Adam that only ever saw this row's updates.
template <typename Scalar>
struct AdamRow {
    Vector<Scalar> m;
    Vector<Scalar> v;
    std::uint64_t steps = 0;
};

/// Row key of the attention vector inside the optimizer state.
inline constexpr ItemId kAttentionRow = -1;

template <typename Scalar>
struct OptimizerState {
    std::map<ItemId, AdamRow<Scalar>> rows;  // ordered for deterministic serialization
};

class NonFiniteGradient : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// SGD: row -= lr * g. Adam: lazy per-row moment update on touched rows only.
/// Throws NonFiniteGradient (naming the row) before touching any parameter.
template <typename Scalar>
void apply_optimizer_step(ModelParams<Scalar>& params, const SparseGrad<Scalar>& grads,
                          OptimizerState<Scalar>& state, const OptimizerConfig& config) {
    for (std::size_t k = 0; k < grads.rows().size(); ++k) {
        if (!grads.row(k).allFinite()) {
            std::ostringstream msg;
            msg << "non-finite gradient on embedding row " << grads.rows()[k] << ": " << grads.row(k).transpose();
            throw NonFiniteGradient(msg.str());
        }
    }
    if (grads.touches_attention() && !grads.attention().allFinite())
        throw NonFiniteGradient("non-finite gradient on the attention vector");

    const auto lr = static_cast<Scalar>(config.learning_rate);
    auto update = [&](ItemId key, auto&& target, const Vector<Scalar>& g) {
        if (config.kind == OptimizerKind::sgd) {
            target -= lr * g;
            return;
        }
        auto [it, fresh] = state.rows.try_emplace(key);
        AdamRow<Scalar>& s = it->second;
        if (fresh) {
            s.m = Vector<Scalar>::Zero(g.size());
            s.v = Vector<Scalar>::Zero(g.size());
        }
        const auto b1 = static_cast<Scalar>(config.beta1);
        const auto b2 = static_cast<Scalar>(config.beta2);
        ++s.steps;
        s.m = b1 * s.m + (Scalar(1) - b1) * g;
        s.v = b2 * s.v + (Scalar(1) - b2) * g.cwiseProduct(g);
        const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(s.steps));
        const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(s.steps));
        const auto denom = ((s.v / c2).array().sqrt() + static_cast<Scalar>(config.epsilon)).eval();
        target -= (lr * (s.m / c1).array() / denom).matrix();
    };

    for (std::size_t k = 0; k < grads.rows().size(); ++k) {
        const ItemId row = grads.rows()[k];
        auto target = params.item_embeddings.row(row).transpose();
        update(row, target, grads.row(k));
    }
    if (grads.touches_attention()) update(kAttentionRow, params.attention, grads.attention());
}

}  // namespace matchkit
