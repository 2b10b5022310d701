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

#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "matchkit/checkpoint.hpp"
#include "matchkit/data_pipeline.hpp"
#include "matchkit/evaluator.hpp"
#include "matchkit/optima_verifier.hpp"
#include "matchkit/run_config.hpp"
#include "matchkit/synthetic.hpp"
#include "matchkit/trainer.hpp"

namespace matchkit::cli {

namespace {

namespace fs = std::filesystem;

std::string number(double v) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::string hex(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return out;
}

RunConfig load(const Options& options) {
    if (options.config.empty()) throw std::runtime_error("--config is required");
    RunConfig config = load_run_config(options.config);
    if (options.seed) {
        config.seed = *options.seed;
        config.train.seed = *options.seed;
    }
    if (options.task) config.eval.task = parse_eval_task(*options.task);
    if (options.top_n) config.eval.top_n = *options.top_n;
    return config;
}

void write_resolved_config(const RunConfig& config) {
    auto out = open_output(config.output_dir / "resolved_config.txt");
    out << "# fingerprint " << hex(config.fingerprint()) << '\n' << config.to_text();
}

struct Prepared {
    IngestResult ingest;
    DatasetSplit split;
    EmpiricalMarginals marginals;
};

IngestResult ingest_events(const RunConfig& config) {
    std::ifstream in(config.data.events, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open events file '" + config.data.events.string() + "'");
    try {
        return ingest_logs(in, {config.data.delimiter, config.data.has_header});
    } catch (const ParseError& err) {
        throw std::runtime_error(config.data.events.string() + ": " + err.what());
    }
}

Prepared prepare(const RunConfig& config) {
    Prepared p;
    p.ingest = ingest_events(config);
    const std::vector<TrainingExample> examples =
        build_examples(p.ingest.records, config.data.horizon_days, config.data.max_seq_len);
    int months_total = config.data.months_total;
    if (months_total == 0) {
        for (const auto& e : examples) months_total = std::max(months_total, p.ingest.calendar.month_of(e.day));
    }
    p.split = filter_sparse(split_by_time(examples, p.ingest.calendar, months_total), config.data.min_degree);
    if (p.split.train.empty()) throw std::runtime_error("no training examples survive windowing and filtering");
    p.marginals = compute_marginals(p.split.train);
    p.split.train = annotate_bias(std::move(p.split.train), p.marginals);
    p.split.validation = annotate_bias(std::move(p.split.validation), p.marginals);
    p.split.test = annotate_bias(std::move(p.split.test), p.marginals);
    return p;
}

std::string item_sequence(const Prepared& p, std::span<const ItemId> items) {
    std::string out;
    for (std::size_t k = 0; k < items.size(); ++k) {
        if (k) out += ' ';
        out += p.ingest.items.token(items[k]);
    }
    return out;
}

void write_examples(const fs::path& path, const Prepared& p, const std::vector<TrainingExample>& examples) {
    auto out = open_output(path);
    for (const auto& e : examples) {
        out << p.ingest.users.token(e.user_id) << '\t' << item_sequence(p, e.pseudo_user) << '\t'
            << p.ingest.items.token(e.target_item) << '\t' << number(e.log_p_u) << '\t' << number(e.log_p_i) << '\n';
    }
}

std::vector<TrainingExample> concat(const std::vector<TrainingExample>& a, const std::vector<TrainingExample>& b) {
    std::vector<TrainingExample> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

ModelParams<double> initial_params(const RunConfig& config, const Prepared& p) {
    return ModelParams<double>::init(Eigen::Index(p.ingest.items.size()), config.model.dim, config.model.temperature,
                                     mix_seed(config.seed, 1));
}

Checkpoint load_matching_checkpoint(const fs::path& path, const RunConfig& config) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.fingerprint != config.fingerprint())
        throw std::runtime_error("checkpoint " + path.string() + " has fingerprint " + hex(ckpt.fingerprint) +
                                 " but the configuration has " + hex(config.fingerprint()));
    return ckpt;
}

fs::path checkpoint_dir(const RunConfig& config) { return config.output_dir / "checkpoints"; }

struct TestEvaluation {
    EvalSet set;
    EvalReport report;
};

TestEvaluation evaluate_test(const RunConfig& config, const Prepared& p, const ModelParams<double>& params,
                             const EncoderConfig& encoder) {
    if (p.split.test.empty()) throw std::runtime_error("the test month has no examples");
    EvalOptions options{config.eval.task, config.eval.num_negatives, config.seed, config.eval.group_positives};
    TestEvaluation t;
    t.set = build_eval_cases(p.split.test, collect_pools(concat(p.split.train, p.split.test)), options);
    const PopularityIndex popularity(p.ingest.records, p.ingest.calendar.first_day(p.split.months_total),
                                     config.eval.popularity_window_days);
    t.report = evaluate(t.set, params, encoder, config.eval.top_n, &popularity);
    return t;
}

std::string candidate_label(const Prepared& p, const EvalSet& set, CandidateId id) {
    if (set.task == EvalTask::ir) return p.ingest.items.token(ItemId(id));
    return p.ingest.users.token(set.user_pool_raw[std::size_t(id)]) + ":" +
           item_sequence(p, set.user_pool[std::size_t(id)]);
}

nlohmann::ordered_json report_json(const TestEvaluation& t, const Prepared& p, const RunConfig& config,
                                   bool verbose) {
    nlohmann::ordered_json j;
    j["task"] = std::string(to_string(t.report.task));
    j["top_n"] = t.report.n;
    j["num_cases"] = t.report.cases.size();
    j["num_negatives"] = config.eval.num_negatives;
    j["recall_at_n"] = t.report.recall_at_n;
    j["ndcg_at_n"] = t.report.ndcg_at_n;
    j["hit_rate_at_n"] = t.report.hit_rate_at_n;
    if (t.report.popularity) {
        j["popularity"] = {{"window_days", config.eval.popularity_window_days},
                           {"median", t.report.popularity->median},
                           {"mean", t.report.popularity->mean},
                           {"objects", t.report.popularity->objects}};
    }
    j["fingerprint"] = hex(config.fingerprint());
    if (verbose) {
        auto cases = nlohmann::ordered_json::array();
        for (std::size_t k = 0; k < t.set.cases.size(); ++k) {
            const EvalCase& c = t.set.cases[k];
            const CaseResult& r = t.report.cases[k];
            nlohmann::ordered_json jc;
            jc["query"] = t.set.task == EvalTask::ir ? item_sequence(p, c.query_user)
                                                     : p.ingest.items.token(c.query_item);
            auto labels = [&](const std::vector<CandidateId>& ids) {
                auto a = nlohmann::ordered_json::array();
                for (CandidateId id : ids) a.push_back(candidate_label(p, t.set, id));
                return a;
            };
            jc["positives"] = labels(c.positives);
            jc["top"] = labels(r.top);
            jc["recall"] = r.recall;
            jc["ndcg"] = r.ndcg;
            cases.push_back(std::move(jc));
        }
        j["cases"] = std::move(cases);
    }
    return j;
}

}  // namespace

int cmd_prepare(const Options& options, std::ostream& out) {
    const RunConfig config = load(options);
    const Prepared p = prepare(config);
    write_resolved_config(config);
    const fs::path dir = config.output_dir;
    write_examples(dir / "examples_train.tsv", p, p.split.train);
    write_examples(dir / "examples_validation.tsv", p, p.split.validation);
    write_examples(dir / "examples_test.tsv", p, p.split.test);

    const std::vector<LabeledExample> labeled = sample_negatives_bce(
        p.split.train, config.loss.negative_strategy, config.loss.negative_ratio, mix_seed(config.seed, 2));
    {
        auto f = open_output(dir / "examples_train_bce.tsv");
        for (const auto& e : labeled)
            f << p.ingest.users.token(e.user_id) << '\t' << item_sequence(p, e.pseudo_user) << '\t'
              << p.ingest.items.token(e.target_item) << '\t' << e.label << '\n';
    }
    {
        auto f = open_output(dir / "marginals_items.tsv");
        std::vector<std::pair<ItemId, std::int64_t>> items(p.marginals.count_item.begin(),
                                                           p.marginals.count_item.end());
        std::sort(items.begin(), items.end());
        for (const auto& [item, count] : items)
            f << p.ingest.items.token(item) << '\t' << count << '\t' << number(p.marginals.item_log_prob(item))
              << '\n';
    }
    {
        auto f = open_output(dir / "marginals_users.tsv");
        const ExamplePools pools = collect_pools(p.split.train);
        for (std::size_t k = 0; k < pools.users.size(); ++k)
            f << item_sequence(p, pools.users[k]) << '\t' << pools.user_counts[k] << '\t'
              << number(p.marginals.user_log_prob(pools.users[k])) << '\n';
    }
    {
        auto f = open_output(dir / "items.vocab");
        for (std::size_t k = 0; k < p.ingest.items.size(); ++k) f << k << '\t' << p.ingest.items.tokens()[k] << '\n';
    }
    {
        auto f = open_output(dir / "users.vocab");
        for (std::size_t k = 0; k < p.ingest.users.size(); ++k) f << k << '\t' << p.ingest.users.tokens()[k] << '\n';
    }
    for (const auto& w : p.split.warnings) out << "warning: " << w << '\n';
    out << "events " << p.ingest.records.size() << ", train " << p.split.train.size() << ", validation "
        << p.split.validation.size() << ", test " << p.split.test.size() << " examples written to " << dir.string()
        << '\n';
    return 0;
}

int cmd_train(const Options& options, std::ostream& out) {
    const RunConfig config = load(options);
    const Prepared p = prepare(config);
    write_resolved_config(config);

    TrainHooks hooks;
    hooks.checkpoint_dir = checkpoint_dir(config);
    hooks.fingerprint = config.fingerprint();
    Checkpoint resume;
    if (!options.checkpoint.empty()) {
        resume = load_matching_checkpoint(options.checkpoint, config);
        hooks.resume = &resume;
    }
    std::optional<EvalSet> validation;
    if (!p.split.validation.empty()) {
        try {
            validation = build_eval_cases(
                p.split.validation, collect_pools(p.split.train),
                {config.eval.task, config.eval.num_negatives, config.seed, config.eval.group_positives});
        } catch (const std::invalid_argument& err) {
            out << "notice: no validation metric (" << err.what() << ")\n";
        }
    }
    if (validation) {
        hooks.after_month = [&](const ModelParams<double>& params, int) {
            return evaluate(*validation, params, config.model.encoder, config.eval.top_n).ndcg_at_n;
        };
    }

    const ModelParams<double> init = initial_params(config, p);
    const MonthIndex& months = p.split.month_index;
    TrainResult result;
    if (config.loss.family == LossFamily::bce) {
        const std::vector<LabeledExample> labeled = sample_negatives_bce(
            p.split.train, config.loss.negative_strategy, config.loss.negative_ratio, mix_seed(config.seed, 2));
        result = config.mode == TrainMode::incremental
                     ? train_incremental(labeled, months, init, config.model.encoder, config.loss, config.train, hooks)
                     : train_shuffled(labeled, months, init, config.model.encoder, config.loss, config.train, hooks);
    } else {
        result = config.mode == TrainMode::incremental
                     ? train_incremental(p.split.train, months, init, config.model.encoder, config.loss, config.train,
                                         hooks)
                     : train_shuffled(p.split.train, months, init, config.model.encoder, config.loss, config.train,
                                      hooks);
    }
    for (const auto& n : result.notices) out << "notice: " << n << '\n';
    {
        auto f = open_output(config.output_dir / "train_trace.tsv");
        f << "month\texamples\tsteps\tmean_loss\tvalidation_ndcg_at_" << config.eval.top_n << '\n';
        for (const auto& t : result.trace)
            f << t.month << '\t' << t.examples << '\t' << t.steps << '\t' << number(t.mean_loss) << '\t'
              << (t.metric ? number(*t.metric) : std::string("-")) << '\n';
    }
    if (!options.export_embeddings.empty())
        export_embeddings(options.export_embeddings, result.params, config.model.encoder,
                          collect_pools(p.split.train).users);
    out << "trained " << result.trace.size() << " month(s), " << result.cursor.step << " steps; checkpoints in "
        << checkpoint_dir(config).string() << '\n';
    return 0;
}

int cmd_eval(const Options& options, std::ostream& out) {
    const RunConfig config = load(options);
    const fs::path path = options.checkpoint.empty() ? checkpoint_dir(config) / "latest.umck" : options.checkpoint;
    const Checkpoint ckpt = load_matching_checkpoint(path, config);
    const Prepared p = prepare(config);
    write_resolved_config(config);
    const TestEvaluation t = evaluate_test(config, p, ckpt.params, ckpt.encoder);
    {
        auto f = open_output(config.output_dir / "eval_report.json");
        f << report_json(t, p, config, options.verbose).dump(2) << '\n';
    }
    out << to_string(t.report.task) << " cases " << t.report.cases.size() << " recall@" << t.report.n << ' '
        << number(t.report.recall_at_n) << " ndcg@" << t.report.n << ' ' << number(t.report.ndcg_at_n);
    if (t.report.popularity)
        out << " popularity median " << number(t.report.popularity->median) << " mean "
            << number(t.report.popularity->mean);
    out << '\n';
    return 0;
}

int cmd_verify(const Options& options, std::ostream& out) {
    const RunConfig config = load(options);
    write_resolved_config(config);
    const SyntheticSpec spec =
        config.verify.spec == "uniform" ? uniform_synthetic_spec(8, 12, 200000) : default_synthetic_spec();
    const std::vector<OptimumReport> reports =
        run_table_sweep(spec, config.verify.seeds, config.verify.config, config.verify.data_seed);
    const SyntheticData data = generate_synthetic(spec, config.verify.data_seed);
    const std::vector<AgreementReport> agreement =
        group_agreement(reports, data.tables, config.verify.config.min_group_spearman);
    {
        auto f = open_output(config.output_dir / "sweep_report.tsv");
        write_sweep_report(f, reports, agreement);
    }
    write_sweep_report(out, reports, agreement);
    return 0;
}

int cmd_retrieve(const Options& options, std::ostream& out) {
    const RunConfig config = load(options);
    if (options.checkpoint.empty()) throw std::runtime_error("--checkpoint is required");
    const Checkpoint ckpt = load_matching_checkpoint(options.checkpoint, config);
    const std::size_t top_n = config.eval.top_n;

    std::vector<std::pair<double, std::int64_t>> scored;
    std::vector<std::string> labels;
    if (config.eval.task == EvalTask::ir) {
        const IngestResult ingest = ingest_events(config);
        std::vector<ItemId> history;
        std::string token;
        std::istringstream tokens(options.query);
        for (std::string word; tokens >> word;) {
            std::istringstream parts(word);
            while (std::getline(parts, token, ',')) {
                if (token.empty()) continue;
                if (auto id = ingest.items.find(token)) {
                    history.push_back(*id);
                } else {
                    out << "notice: unknown item '" << token << "' skipped\n";
                }
            }
        }
        const Vector<double> u = encode_user_lenient<double>(history, ckpt.params, ckpt.encoder);
        for (Eigen::Index i = 0; i < ckpt.params.num_items(); ++i) {
            scored.emplace_back(score(u, encode_item(ItemId(i), ckpt.params), ckpt.params.temperature), i);
            labels.push_back(ingest.items.token(ItemId(i)));
        }
    } else {
        const Prepared p = prepare(config);
        const auto id = p.ingest.items.find(options.query);
        if (!id) throw std::runtime_error("unknown item '" + options.query + "'");
        const Vector<double> item = encode_item(*id, ckpt.params);
        const ExamplePools pools = collect_pools(concat(p.split.train, p.split.test));
        for (std::size_t k = 0; k < pools.users.size(); ++k) {
            const Vector<double> u = encode_user_lenient<double>(pools.users[k], ckpt.params, ckpt.encoder);
            scored.emplace_back(score(u, item, ckpt.params.temperature), std::int64_t(k));
            labels.push_back(p.ingest.users.token(pools.user_ids[k]) + ":" + item_sequence(p, pools.users[k]));
        }
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t r = 0; r < std::min(top_n, scored.size()); ++r)
        out << r + 1 << '\t' << labels[std::size_t(scored[r].second)] << '\t' << number(scored[r].first) << '\n';
    return 0;
}

int cmd_trace(const Options& options, std::ostream& out) {
    const RunConfig config = load(options);
    const fs::path dir = options.checkpoint.empty() ? checkpoint_dir(config) : options.checkpoint;
    if (!fs::is_directory(dir)) throw std::runtime_error("checkpoint directory '" + dir.string() + "' not found");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.starts_with("month_") && name.ends_with(".umck")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no monthly checkpoints in '" + dir.string() + "'");
    const Prepared p = prepare(config);
    write_resolved_config(config);

    std::ostringstream table;
    table << "month\tcheckpoint\tndcg_at_" << config.eval.top_n << "\trecall_at_" << config.eval.top_n << '\n';
    for (const auto& file : files) {
        const Checkpoint ckpt = load_matching_checkpoint(file, config);
        const TestEvaluation t = evaluate_test(config, p, ckpt.params, ckpt.encoder);
        const std::string name = file.stem().string();
        table << name.substr(6) << '\t' << file.filename().string() << '\t' << number(t.report.ndcg_at_n) << '\t'
              << number(t.report.recall_at_n) << '\n';
    }
    auto f = open_output(config.output_dir / "month_trace.tsv");
    f << table.str();
    out << table.str();
    return 0;
}

}  // namespace matchkit::cli
