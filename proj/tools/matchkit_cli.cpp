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

#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
    using namespace matchkit::cli;
    CLI::App app{"matchkit: two-tower retrieval training, evaluation and optimum verification"};
    app.require_subcommand(1);
    Options options;
    std::uint64_t seed = 0;
    std::string task;
    std::size_t top_n = 0;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", options.config, "run configuration file")->required();
        sub->add_option("--seed", seed, "override the configured seed");
        return sub;
    };
    auto evaluation = [&](CLI::App* sub) {
        sub->add_option("--task", task, "ir or ut")->check(CLI::IsMember({"ir", "ut"}));
        sub->add_option("--top-n", top_n, "ranking cutoff")->check(CLI::PositiveNumber);
    };

    CLI::App* prepare = common(app.add_subcommand("prepare", "build example files from the event log"));
    CLI::App* train = common(app.add_subcommand("train", "train month by month (or shuffled) with checkpoints"));
    train->add_option("--checkpoint", options.checkpoint, "resume from this checkpoint");
    train->add_option("--export-embeddings", options.export_embeddings, "write user and item vectors as TSV");
    CLI::App* eval = common(app.add_subcommand("eval", "evaluate a checkpoint on the test month"));
    eval->add_option("--checkpoint", options.checkpoint, "checkpoint file (default: latest)");
    eval->add_flag("--verbose", options.verbose, "include per-case results in the report");
    evaluation(eval);
    CLI::App* verify = common(app.add_subcommand("verify", "check learned optima on synthetic data"));
    CLI::App* retrieve = common(app.add_subcommand("retrieve", "rank items for a history, or users for an item"));
    retrieve->add_option("--checkpoint", options.checkpoint, "checkpoint file")->required();
    retrieve->add_option("query", options.query, "item ids (ir) or one item id (ut)")->required();
    evaluation(retrieve);
    CLI::App* trace = common(app.add_subcommand("trace", "test metrics of every monthly checkpoint"));
    trace->add_option("--checkpoint", options.checkpoint, "checkpoint directory (default: output.dir/checkpoints)");
    evaluation(trace);

    CLI11_PARSE(app, argc, argv);
    for (CLI::App* sub : app.get_subcommands()) {
        if (sub->count("--seed")) options.seed = seed;
        if (sub->get_option_no_throw("--task") && sub->count("--task")) options.task = task;
        if (sub->get_option_no_throw("--top-n") && sub->count("--top-n")) options.top_n = top_n;
    }

    try {
        if (prepare->parsed()) return cmd_prepare(options, std::cout);
        if (train->parsed()) return cmd_train(options, std::cout);
        if (eval->parsed()) return cmd_eval(options, std::cout);
        if (verify->parsed()) return cmd_verify(options, std::cout);
        if (retrieve->parsed()) return cmd_retrieve(options, std::cout);
        if (trace->parsed()) return cmd_trace(options, std::cout);
    } catch (const std::exception& err) {
        std::cerr << "matchkit: error: " << err.what() << '\n';
        return 1;
    }
    return 1;
}
