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

#include "matchkit/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <random>
#include <type_traits>
#include <unordered_map>

#include "matchkit/objective.hpp"

namespace matchkit {

TrainMode parse_train_mode(std::string_view name) {
    if (name == "incremental") return TrainMode::incremental;
    if (name == "shuffled") return TrainMode::shuffled;
    throw std::invalid_argument("unknown training mode '" + std::string(name) + "'");
}

std::string_view to_string(TrainMode mode) { return mode == TrainMode::incremental ? "incremental" : "shuffled"; }

void TrainConfig::validate(const LossConfig& loss) const {
    if (epochs_per_month < 1) throw std::invalid_argument("epochs_per_month must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (loss.family == LossFamily::bidirectional && batch_size < 2)
        throw std::invalid_argument("in-batch losses need batch_size >= 2");
    if (!(optimizer.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (!std::is_sorted(months.begin(), months.end()) ||
        std::adjacent_find(months.begin(), months.end()) != months.end())
        throw std::invalid_argument("months must be strictly ascending");
    loss.validate();
}

namespace {

/// Everything a batch objective needs besides the batch itself.
struct LossContext {
    std::vector<ItemId> vocabulary;
    std::vector<std::vector<ItemId>> universe;
    ItemProposal proposal;
};

template <typename Example>
LossContext make_context(const std::vector<Example>& examples, const LossConfig& loss) {
    LossContext ctx;
    if constexpr (std::is_same_v<Example, TrainingExample>) {
        if (loss.family == LossFamily::bidirectional || loss.family == LossFamily::bce) return ctx;
        ExamplePools pools = collect_pools(examples);
        if (loss.family == LossFamily::full_softmax_col) {
            ctx.universe = std::move(pools.users);
        } else {
            ctx.vocabulary = pools.items;
            ctx.proposal = loss.ssm_proposal == Proposal::marginal
                               ? ItemProposal::from_counts(pools.items, pools.item_counts)
                               : ItemProposal::uniform(pools.items);
        }
    }
    return ctx;
}

template <typename Example>
LossOutput<double> batch_objective(const BatchLayout& layout, const ModelParams<double>& params,
                                   const EncoderConfig& encoder, const LossConfig& loss, const LossContext& ctx,
                                   std::uint64_t rng_seed) {
    if constexpr (std::is_same_v<Example, LabeledExample>) {
        return bce_objective(layout, params, encoder);
    } else {
        switch (loss.family) {
            case LossFamily::bidirectional: return bidirectional_objective(layout, params, encoder, loss.flags);
            case LossFamily::full_softmax_row:
                return full_softmax_row_objective<double>(layout, params, encoder, ctx.vocabulary);
            case LossFamily::full_softmax_col:
                return full_softmax_col_objective<double>(layout, params, encoder, ctx.universe);
            case LossFamily::ssm: {
                std::mt19937_64 rng(rng_seed);
                return ssm_objective(layout, params, encoder, ctx.proposal, loss.num_sampled, rng);
            }
            case LossFamily::bce: break;
        }
        throw std::invalid_argument("BCE training needs labeled examples");
    }
}

template <typename Example>
std::vector<std::uint32_t> intern_users(const std::vector<Example>& examples, std::size_t& num_keys) {
    std::unordered_map<const std::vector<ItemId>*, std::uint32_t, detail::SequenceHash, detail::SequenceEqual> ids;
    std::vector<std::uint32_t> keys(examples.size());
    for (std::size_t k = 0; k < examples.size(); ++k) {
        auto [it, fresh] = ids.try_emplace(&examples[k].pseudo_user, std::uint32_t(ids.size()));
        keys[k] = it->second;
    }
    num_keys = ids.size();
    return keys;
}

struct Phase {
    int month = 0;  // month the phase stands for (last month when shuffled)
    std::string checkpoint_name;
    std::vector<std::size_t> indices;
};

template <typename Example>
std::vector<Phase> plan_phases(const std::vector<Example>& examples, const MonthIndex& month_index,
                               const TrainConfig& config, TrainMode mode) {
    std::vector<int> months = config.months;
    std::vector<int> month_of(examples.size());
    for (std::size_t k = 0; k < examples.size(); ++k) month_of[k] = month_index.month_of(examples[k].day);
    if (months.empty()) {
        months = month_of;
        std::sort(months.begin(), months.end());
        months.erase(std::unique(months.begin(), months.end()), months.end());
    }
    auto selected = [&](int m) { return std::binary_search(months.begin(), months.end(), m); };

    std::vector<Phase> phases;
    if (mode == TrainMode::shuffled) {
        Phase all{months.empty() ? 0 : months.back(), "shuffled", {}};
        for (std::size_t k = 0; k < examples.size(); ++k)
            if (selected(month_of[k])) all.indices.push_back(k);
        phases.push_back(std::move(all));
        return phases;
    }
    for (int m : months) {
        char name[32];
        std::snprintf(name, sizeof name, "month_%02d", m);
        Phase p{m, name, {}};
        for (std::size_t k = 0; k < examples.size(); ++k)
            if (month_of[k] == m) p.indices.push_back(k);
        phases.push_back(std::move(p));
    }
    return phases;
}

template <typename Example>
TrainResult run_training(const std::vector<Example>& examples, const MonthIndex& month_index,
                         ModelParams<double> params, const EncoderConfig& encoder, const LossConfig& loss,
                         const TrainConfig& config, const TrainHooks& hooks, TrainMode mode) {
    config.validate(loss);
    if constexpr (std::is_same_v<Example, LabeledExample>) {
        if (loss.family != LossFamily::bce) throw std::invalid_argument("labeled examples train only with BCE");
    } else {
        if (loss.family == LossFamily::bce) throw std::invalid_argument("BCE training needs labeled examples");
    }

    TrainResult result;
    if (hooks.resume) {
        const Checkpoint& ckpt = *hooks.resume;
        if (hooks.fingerprint != 0 && ckpt.fingerprint != hooks.fingerprint)
            throw std::invalid_argument("checkpoint was written under a different configuration");
        if (ckpt.seed != config.seed) throw std::invalid_argument("checkpoint seed differs from the configured seed");
        if (ckpt.encoder.aggregator != encoder.aggregator)
            throw std::invalid_argument("checkpoint aggregator differs from the configured one");
        if (ckpt.optimizer != config.optimizer.kind)
            throw std::invalid_argument("checkpoint optimizer differs from the configured one");
        params = ckpt.params;
        result.optimizer_state = ckpt.optimizer_state;
        result.cursor = ckpt.cursor;
    }
    params.validate();

    const std::vector<Phase> phases = plan_phases(examples, month_index, config, mode);
    const LossContext ctx = make_context(examples, loss);
    std::size_t num_keys = 0;
    const std::vector<std::uint32_t> user_keys = intern_users(examples, num_keys);
    LayoutBuilder builder(num_keys, std::size_t(params.num_items()));
    const bool in_batch = loss.family == LossFamily::bidirectional;

    auto snapshot = [&]() {
        Checkpoint c;
        c.params = params;
        c.encoder = encoder;
        c.optimizer = config.optimizer.kind;
        c.optimizer_state = result.optimizer_state;
        c.cursor = result.cursor;
        c.seed = config.seed;
        c.fingerprint = hooks.fingerprint;
        return c;
    };

    TrainCursor& cursor = result.cursor;
    std::uint32_t completed_here = 0;
    std::uint32_t epochs_here = 0;
    bool interrupted = false;
    while (cursor.month_pos < phases.size()) {
        if (hooks.stop_after_months && completed_here >= *hooks.stop_after_months) break;
        if (hooks.stop_after_epochs && epochs_here >= *hooks.stop_after_epochs) break;
        const Phase& phase = phases[cursor.month_pos];
        if (phase.indices.empty()) {
            result.notices.push_back("month " + std::to_string(phase.month) + " has no examples; skipped");
            ++cursor.month_pos;
            cursor.epoch = 0;
            continue;
        }
        MonthTrace trace{phase.month, phase.indices.size(), 0, 0.0, std::nullopt};
        double loss_sum = 0.0;
        bool noted_singleton = false;
        // A phase that fits in one batch sees the same full batch every epoch;
        // it is compressed once, in data order.
        const bool whole = phase.indices.size() <= config.batch_size;
        std::optional<BatchLayout> whole_layout;
        while (cursor.epoch < std::uint32_t(config.epochs_per_month)) {
            const auto batches = whole ? std::vector<std::vector<std::size_t>>{}
                                       : make_batches(phase.indices, config.batch_size,
                                                      mix_seed(config.seed, cursor.pass));
            const std::size_t num_batches = whole ? 1 : batches.size();
            for (std::size_t b = 0; b < num_batches; ++b) {
                BatchLayout fresh;
                if (whole && !whole_layout) whole_layout = builder.build(examples, phase.indices, user_keys);
                if (!whole) fresh = builder.build(examples, batches[b], user_keys);
                const BatchLayout& layout = whole ? *whole_layout : fresh;
                if (in_batch && layout.size() < 2) {
                    // A lone trailing example has no in-batch negatives: the step
                    // is counted but leaves the parameters unchanged.
                    if (!noted_singleton) {
                        result.notices.push_back("month " + std::to_string(phase.month) +
                                                 ": single-example batch gives no in-batch negatives; no update");
                        noted_singleton = true;
                    }
                    result.step_losses.push_back(0.0);
                } else {
                    LossOutput<double> out = batch_objective<Example>(layout, params, encoder, loss, ctx,
                                                                      mix_seed(config.seed ^ 0x55aa55aa55aa55aaULL,
                                                                               cursor.step));
                    if (!std::isfinite(out.value))
                        throw NonFiniteGradient("non-finite loss at step " + std::to_string(cursor.step));
                    apply_optimizer_step(params, out.grads, result.optimizer_state, config.optimizer);
                    result.step_losses.push_back(out.value);
                    loss_sum += out.value;
                }
                ++cursor.step;
                ++trace.steps;
            }
            ++cursor.epoch;
            ++cursor.pass;
            ++epochs_here;
            if (!hooks.checkpoint_dir.empty()) save_checkpoint(hooks.checkpoint_dir / "latest.umck", snapshot());
            if (hooks.stop_after_epochs && epochs_here >= *hooks.stop_after_epochs &&
                cursor.epoch < std::uint32_t(config.epochs_per_month)) {
                interrupted = true;
                break;
            }
        }
        if (interrupted) break;
        trace.mean_loss = trace.steps ? loss_sum / double(trace.steps) : 0.0;
        ++cursor.month_pos;
        cursor.epoch = 0;
        ++completed_here;
        if (cursor.month_pos == phases.size()) cursor.finished = true;
        if (hooks.after_month) {
            const ModelParams<double> frozen = params;
            trace.metric = hooks.after_month(frozen, phase.month);
        }
        result.trace.push_back(trace);
        if (!hooks.checkpoint_dir.empty()) {
            const Checkpoint c = snapshot();
            save_checkpoint(hooks.checkpoint_dir / (phase.checkpoint_name + ".umck"), c);
            save_checkpoint(hooks.checkpoint_dir / "latest.umck", c);
        }
    }
    if (cursor.month_pos == phases.size()) cursor.finished = true;
    result.params = std::move(params);
    return result;
}

}  // namespace

TrainResult train_incremental(const std::vector<TrainingExample>& train, const MonthIndex& months,
                              ModelParams<double> params, const EncoderConfig& encoder, const LossConfig& loss,
                              const TrainConfig& config, const TrainHooks& hooks) {
    return run_training(train, months, std::move(params), encoder, loss, config, hooks, TrainMode::incremental);
}

TrainResult train_incremental(const std::vector<LabeledExample>& train, const MonthIndex& months,
                              ModelParams<double> params, const EncoderConfig& encoder, const LossConfig& loss,
                              const TrainConfig& config, const TrainHooks& hooks) {
    return run_training(train, months, std::move(params), encoder, loss, config, hooks, TrainMode::incremental);
}

TrainResult train_shuffled(const std::vector<TrainingExample>& train, const MonthIndex& months,
                           ModelParams<double> params, const EncoderConfig& encoder, const LossConfig& loss,
                           const TrainConfig& config, const TrainHooks& hooks) {
    return run_training(train, months, std::move(params), encoder, loss, config, hooks, TrainMode::shuffled);
}

TrainResult train_shuffled(const std::vector<LabeledExample>& train, const MonthIndex& months,
                           ModelParams<double> params, const EncoderConfig& encoder, const LossConfig& loss,
                           const TrainConfig& config, const TrainHooks& hooks) {
    return run_training(train, months, std::move(params), encoder, loss, config, hooks, TrainMode::shuffled);
}

void export_embeddings(const std::filesystem::path& path, const ModelParams<double>& params,
                       const EncoderConfig& encoder, const std::vector<std::vector<ItemId>>& users) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << std::setprecision(17);
    for (const auto& u : users) {
        const Vector<double> v = encode_user_lenient<double>(u, params, encoder);
        out << "user\t" << sequence_key(u);
        for (Eigen::Index k = 0; k < v.size(); ++k) out << '\t' << v(k);
        out << '\n';
    }
    for (Eigen::Index i = 0; i < params.num_items(); ++i) {
        out << "item\t" << i;
        for (Eigen::Index k = 0; k < params.dim(); ++k) out << '\t' << params.item_embeddings(i, k);
        out << '\n';
    }
}

}  // namespace matchkit
