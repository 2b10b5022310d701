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

#include "matchkit/losses.hpp"

namespace matchkit {

LossFamily parse_loss_family(std::string_view name) {
    if (name == "bce") return LossFamily::bce;
    if (name == "ssm") return LossFamily::ssm;
    if (name == "full_softmax_row") return LossFamily::full_softmax_row;
    if (name == "full_softmax_col") return LossFamily::full_softmax_col;
    if (name == "bidirectional") return LossFamily::bidirectional;
    throw std::invalid_argument("unknown loss family '" + std::string(name) + "'");
}

std::string_view to_string(LossFamily family) {
    switch (family) {
        case LossFamily::bce: return "bce";
        case LossFamily::ssm: return "ssm";
        case LossFamily::full_softmax_row: return "full_softmax_row";
        case LossFamily::full_softmax_col: return "full_softmax_col";
        case LossFamily::bidirectional: return "bidirectional";
    }
    return "unknown";
}

Proposal parse_proposal(std::string_view name) {
    if (name == "marginal") return Proposal::marginal;
    if (name == "uniform") return Proposal::uniform;
    throw std::invalid_argument("unknown sampled-softmax proposal '" + std::string(name) + "'");
}

std::string_view to_string(Proposal proposal) {
    return proposal == Proposal::marginal ? "marginal" : "uniform";
}

void LossConfig::validate() const {
    if (family == LossFamily::bidirectional && !flags.alpha && !flags.beta)
        throw std::invalid_argument("alpha = beta = 0 gives an identically zero loss");
    if (family == LossFamily::bce && negative_ratio < 1) throw std::invalid_argument("negative_ratio must be >= 1");
    if (family == LossFamily::ssm && num_sampled < 1) throw std::invalid_argument("num_sampled must be >= 1");
}

LossConfig loss_preset(std::string_view name) {
    LossConfig c;
    c.preset = std::string(name);
    auto bidi = [&](bool alpha, bool delta_alpha, bool beta, bool delta_beta) {
        c.family = LossFamily::bidirectional;
        c.flags = {.alpha = alpha, .beta = beta, .delta_alpha = delta_alpha, .delta_beta = delta_beta};
        return c;
    };
    if (name == "InfoNCE") return bidi(true, false, false, false);
    if (name == "SimCLR") return bidi(true, false, true, false);
    if (name == "row-bcNCE") return bidi(true, true, false, false);
    if (name == "col-bcNCE") return bidi(false, false, true, true);
    if (name == "bbcNCE") return bidi(true, true, true, true);
    if (name == "SSM") {
        c.family = LossFamily::ssm;
        return c;
    }
    if (name == "full-softmax-row") {
        c.family = LossFamily::full_softmax_row;
        return c;
    }
    if (name == "full-softmax-col") {
        c.family = LossFamily::full_softmax_col;
        return c;
    }
    if (name.starts_with("BCE-")) {
        c.family = LossFamily::bce;
        c.negative_strategy = parse_negative_strategy(name.substr(4));
        return c;
    }
    throw std::invalid_argument("unknown loss preset '" + std::string(name) + "'");
}

std::vector<std::string> loss_preset_names() {
    return {"BCE-user_marginal", "BCE-item_marginal", "BCE-product_of_marginals", "BCE-uniform",
            "SSM",               "InfoNCE",           "SimCLR",                   "row-bcNCE",
            "col-bcNCE",         "bbcNCE"};
}

OptimumTarget optimum_target(const LossConfig& config) {
    switch (config.family) {
        case LossFamily::bce:
            switch (config.negative_strategy) {
                case NegativeStrategy::user_marginal: return OptimumTarget::item_given_user;
                case NegativeStrategy::item_marginal: return OptimumTarget::user_given_item;
                case NegativeStrategy::product_of_marginals: return OptimumTarget::pointwise_mutual_information;
                case NegativeStrategy::uniform: return OptimumTarget::joint;
            }
            break;
        case LossFamily::ssm:
        case LossFamily::full_softmax_row: return OptimumTarget::item_given_user;
        case LossFamily::full_softmax_col: return OptimumTarget::user_given_item;
        case LossFamily::bidirectional: {
            const auto& f = config.flags;
            // Row optimum: log p(u,i) - log p(u) [- log p(i) without delta_alpha] + f(u).
            // Column optimum: log p(u,i) - log p(i) [- log p(u) without delta_beta] + g(i).
            if (f.alpha && f.beta) {
                if (f.delta_alpha && f.delta_beta) return OptimumTarget::joint;
                if (f.delta_alpha) return OptimumTarget::item_given_user;
                if (f.delta_beta) return OptimumTarget::user_given_item;
                return OptimumTarget::pointwise_mutual_information;
            }
            if (f.alpha)
                return f.delta_alpha ? OptimumTarget::item_given_user : OptimumTarget::pointwise_mutual_information;
            if (f.beta)
                return f.delta_beta ? OptimumTarget::user_given_item : OptimumTarget::pointwise_mutual_information;
            throw std::invalid_argument("alpha = beta = 0 has no optimum");
        }
    }
    throw std::logic_error("unhandled loss family");
}

std::string_view target_name(OptimumTarget target) {
    switch (target) {
        case OptimumTarget::joint: return "log p(u,i)";
        case OptimumTarget::item_given_user: return "log p(i|u)";
        case OptimumTarget::user_given_item: return "log p(u|i)";
        case OptimumTarget::pointwise_mutual_information: return "log p(u,i)/(p(u)p(i))";
    }
    return "unknown";
}

}  // namespace matchkit
