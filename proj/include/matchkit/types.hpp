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

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace matchkit {

using UserId = std::int32_t;
using ItemId = std::int32_t;
using Day = std::int32_t;

/// One (user, item, day) purchase event.
struct InteractionRecord {
    UserId user_id = 0;
    ItemId item_id = 0;
    Day day = 0;

    friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
};

/// A pseudo-user (the purchase history before `day`) paired with one item
/// bought inside the prediction horizon, plus the log empirical marginals
/// used for bias correction.
struct TrainingExample {
    UserId user_id = 0;  // raw user behind the pseudo-user
    std::vector<ItemId> pseudo_user;  // most recent last
    ItemId target_item = 0;
    Day day = 0;
    double log_p_u = 0.0;
    double log_p_i = 0.0;

    friend bool operator==(const TrainingExample&, const TrainingExample&) = default;
};

/// Bernoulli-format row: a positive pair (label 1) or a sampled negative (label 0).
struct LabeledExample {
    UserId user_id = 0;
    std::vector<ItemId> pseudo_user;
    ItemId target_item = 0;
    Day day = 0;
    int label = 0;

    friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class OutOfVocabulary : public std::out_of_range {
public:
    explicit OutOfVocabulary(ItemId id)
        : std::out_of_range("item id " + std::to_string(id) + " is not in the vocabulary"), id_(id) {}

    ItemId id() const noexcept { return id_; }

private:
    ItemId id_;
};

/// Space-separated rendering of an item sequence; the identity key of a pseudo-user.
inline std::string sequence_key(std::span<const ItemId> items) {
    std::string key;
    for (std::size_t k = 0; k < items.size(); ++k) {
        if (k) key.push_back(' ');
        key += std::to_string(items[k]);
    }
    return key;
}

}  // namespace matchkit
