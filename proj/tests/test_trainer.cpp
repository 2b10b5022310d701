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


#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "matchkit/checkpoint.hpp"
#include "matchkit/optimizer.hpp"
#include "matchkit/trainer.hpp"

using namespace matchkit;
namespace fs = std::filesystem;

namespace {

struct Corpus {
    std::vector<TrainingExample> examples;
    MonthIndex months;
};

// Three months of examples over 10 items with month-dependent preferences.
Corpus make_corpus(std::uint64_t seed, std::vector<int> per_month = {40, 37, 45}) {
    std::mt19937_64 rng(seed);
    Corpus c;
    for (std::size_t m = 0; m < per_month.size(); ++m) {
        for (int k = 0; k < per_month[m]; ++k) {
            TrainingExample e;
            e.user_id = int(rng() % 12);
            const ItemId a = ItemId((e.user_id + m) % 10);
            e.pseudo_user = {a, ItemId((a + 1 + rng() % 2) % 10)};
            e.target_item = ItemId((a + 2 + rng() % 3) % 10);
            e.day = Day(m * 30 + rng() % 30);
            c.examples.push_back(e);
        }
    }
    c.examples = annotate_bias(c.examples, compute_marginals(c.examples));
    c.months = MonthIndex(MonthCalendar::fixed(30), c.examples);
    return c;
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("matchkit_trainer_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

TrainConfig config(std::size_t batch, int epochs, OptimizerKind kind = OptimizerKind::adam, double lr = 1e-2) {
    TrainConfig t;
    t.batch_size = batch;
    t.epochs_per_month = epochs;
    t.optimizer = {kind, lr};
    t.seed = 17;
    return t;
}

std::string bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("SGD step") {
    ModelParams<double> p = ModelParams<double>::init(3, 4, 0.5, 1);
    const auto before = p.item_embeddings;
    SparseGrad<double> g(4);
    Vector<double> unit = Vector<double>::Zero(4);
    unit(0) = 1.0;
    g.add_row(1, unit);
    OptimizerState<double> state;
    apply_optimizer_step(p, g, state, {OptimizerKind::sgd, 0.1});
    CHECK(p.item_embeddings(1, 0) == doctest::Approx(before(1, 0) - 0.1).epsilon(1e-15));
    CHECK(p.item_embeddings.row(1).tail(3) == before.row(1).tail(3));
    CHECK(p.item_embeddings.row(0) == before.row(0));
    CHECK(p.item_embeddings.row(2) == before.row(2));
}

TEST_CASE("first Adam step moves by about the learning rate") {
    for (double scale : {1e-6, 1.0, 1e6}) {
        ModelParams<double> p = ModelParams<double>::init(2, 3, 0.5, 1);
        const auto before = p.item_embeddings;
        SparseGrad<double> g(3);
        Vector<double> v(3);
        v << 0.3 * scale, -2.0 * scale, 1.1 * scale;
        g.add_row(0, v);
        OptimizerState<double> state;
        apply_optimizer_step(p, g, state, {OptimizerKind::adam, 1e-3});
        const auto delta = (p.item_embeddings.row(0) - before.row(0)).cwiseAbs().eval();
        for (Eigen::Index k = 0; k < 3; ++k) CHECK(delta(k) == doctest::Approx(1e-3).epsilon(1e-3));
    }
}

TEST_CASE("lazy Adam equals a dense Adam per row") {
    // Dense reference on one d=2 row, written out from the update rule.
    struct Dense {
        double m[2] = {0, 0}, v[2] = {0, 0}, x[2];
        int t = 0;
        void step(const double* g, double lr) {
            ++t;
            for (int k = 0; k < 2; ++k) {
                m[k] = 0.9 * m[k] + 0.1 * g[k];
                v[k] = 0.999 * v[k] + 0.001 * g[k] * g[k];
                const double mh = m[k] / (1 - std::pow(0.9, t));
                const double vh = v[k] / (1 - std::pow(0.999, t));
                x[k] -= lr * mh / (std::sqrt(vh) + 1e-8);
            }
        }
    };
    ModelParams<double> p = ModelParams<double>::init(3, 2, 0.5, 4);
    Dense r0{{0, 0}, {0, 0}, {p.item_embeddings(0, 0), p.item_embeddings(0, 1)}};
    Dense r2{{0, 0}, {0, 0}, {p.item_embeddings(2, 0), p.item_embeddings(2, 1)}};
    OptimizerState<double> state;
    const OptimizerConfig adam{OptimizerKind::adam, 0.05};
    const double ga[2] = {0.4, -1.5}, gb[2] = {2.0, 0.1}, gc[2] = {-0.7, 0.3};
    auto grad = [](ItemId row, const double* g) {
        SparseGrad<double> s(2);
        Vector<double> v(2);
        v << g[0], g[1];
        s.add_row(row, v);
        return s;
    };
    apply_optimizer_step(p, grad(0, ga), state, adam);
    r0.step(ga, 0.05);
    apply_optimizer_step(p, grad(2, gb), state, adam);
    r2.step(gb, 0.05);
    apply_optimizer_step(p, grad(0, gc), state, adam);
    r0.step(gc, 0.05);
    for (int k = 0; k < 2; ++k) {
        CHECK(p.item_embeddings(0, k) == doctest::Approx(r0.x[k]).epsilon(1e-14));
        CHECK(p.item_embeddings(2, k) == doctest::Approx(r2.x[k]).epsilon(1e-14));
    }
    CHECK(state.rows.at(0).steps == 2);
    CHECK(state.rows.at(2).steps == 1);
    CHECK(state.rows.count(1) == 0);
}

TEST_CASE("non-finite gradients abort before any update") {
    ModelParams<double> p = ModelParams<double>::init(3, 2, 0.5, 4);
    const auto before = p.item_embeddings;
    SparseGrad<double> g(2);
    Vector<double> ok(2), bad(2);
    ok << 1, 1;
    bad << std::nan(""), 0;
    g.add_row(0, ok);
    g.add_row(1, bad);
    OptimizerState<double> state;
    CHECK_THROWS_AS(apply_optimizer_step(p, g, state, {}), NonFiniteGradient);
    CHECK(p.item_embeddings == before);
}

TEST_CASE("checkpoint round trip") {
    Checkpoint c;
    c.params = ModelParams<double>::init(5, 3, 0.07, 9);
    c.params.attention << 0.1, -0.2, 0.3;
    c.encoder.aggregator = Aggregator::attention;
    c.optimizer = OptimizerKind::adam;
    c.optimizer_state.rows[2] = {Vector<double>::Constant(3, 0.5), Vector<double>::Constant(3, 0.25), 7};
    c.optimizer_state.rows[kAttentionRow] = {Vector<double>::Constant(3, -1.0), Vector<double>::Constant(3, 2.0), 3};
    c.cursor = {2, 1, 99, 5, false};
    c.seed = 1234;
    c.fingerprint = 0xfeedbeefULL;

    std::stringstream buf;
    write_checkpoint(buf, c);
    const std::string raw = buf.str();
    CHECK(raw.substr(0, 4) == "UMCK");
    const Checkpoint back = read_checkpoint(buf);
    CHECK(back.params.item_embeddings == c.params.item_embeddings);
    CHECK(back.params.attention == c.params.attention);
    CHECK(back.params.temperature == c.params.temperature);
    CHECK(back.encoder.aggregator == Aggregator::attention);
    CHECK(back.cursor == c.cursor);
    CHECK(back.seed == 1234);
    CHECK(back.fingerprint == 0xfeedbeefULL);
    REQUIRE(back.optimizer_state.rows.size() == 2);
    CHECK(back.optimizer_state.rows.at(2).steps == 7);
    CHECK(back.optimizer_state.rows.at(kAttentionRow).v == c.optimizer_state.rows.at(kAttentionRow).v);

    std::stringstream again;
    write_checkpoint(again, back);
    CHECK(again.str() == raw);

    std::string wrong_magic = raw;
    wrong_magic[0] = 'X';
    std::istringstream bad(wrong_magic);
    CHECK_THROWS(read_checkpoint(bad));
    std::istringstream truncated(raw.substr(0, raw.size() - 5));
    CHECK_THROWS(read_checkpoint(truncated));
    std::string future = raw;
    future[4] = 9;
    std::istringstream newer(future);
    CHECK_THROWS(read_checkpoint(newer));
    CHECK_THROWS(load_checkpoint("/nonexistent/file.umck"));
    CHECK(fingerprint_of("abc") != fingerprint_of("abd"));
    CHECK(fingerprint_of("") == 0xcbf29ce484222325ULL);
}

TEST_CASE("one month, one epoch, one batch is one step") {
    Corpus c = make_corpus(1, {20});
    const auto init = ModelParams<double>::init(10, 4, 0.2, 3);
    const TrainResult r = train_incremental(c.examples, c.months, init, {}, loss_preset("bbcNCE"), config(64, 1));
    CHECK(r.cursor.step == 1);
    CHECK(r.step_losses.size() == 1);
    REQUIRE(r.trace.size() == 1);
    CHECK(r.trace[0].steps == 1);
    CHECK(r.cursor.finished);
}

TEST_CASE("step count is epochs times batches per month") {
    Corpus c = make_corpus(2);
    const auto init = ModelParams<double>::init(10, 4, 0.2, 3);
    for (std::size_t batch : {2u, 7u, 16u, 64u}) {
        for (int epochs : {1, 3}) {
            const TrainResult r =
                train_incremental(c.examples, c.months, init, {}, loss_preset("InfoNCE"), config(batch, epochs));
            std::uint64_t expected = 0;
            for (int n : {40, 37, 45}) expected += std::uint64_t(epochs) * ((n + batch - 1) / batch);
            CHECK(r.cursor.step == expected);
            CHECK(r.trace.size() == 3);
        }
    }
}

TEST_CASE("full-batch SGD descends") {
    Corpus c = make_corpus(3, {60});
    const auto init = ModelParams<double>::init(10, 4, 0.5, 3);
    for (const char* preset : {"bbcNCE", "InfoNCE", "SSM"}) {
        LossConfig loss = loss_preset(preset);
        if (loss.family == LossFamily::ssm) {
            std::set<ItemId> targets;
            for (const auto& e : c.examples) targets.insert(e.target_item);
            loss.num_sampled = int(targets.size()) - 1;  // exhaustive: the objective is deterministic
            loss.ssm_proposal = Proposal::uniform;
        }
        const TrainResult r = train_incremental(c.examples, c.months, init, {}, loss,
                                                config(1000, 6, OptimizerKind::sgd, 0.01));
        REQUIRE(r.step_losses.size() == 6);
        for (std::size_t k = 1; k < 6; ++k) CHECK(r.step_losses[k] <= r.step_losses[k - 1]);
    }
}

TEST_CASE("single month: incremental and shuffled take identical steps") {
    Corpus c = make_corpus(4, {50});
    const auto init = ModelParams<double>::init(10, 4, 0.2, 3);
    const TrainResult a = train_incremental(c.examples, c.months, init, {}, loss_preset("bbcNCE"), config(8, 2));
    const TrainResult b = train_shuffled(c.examples, c.months, init, {}, loss_preset("bbcNCE"), config(8, 2));
    CHECK(a.step_losses == b.step_losses);
    CHECK(a.params.item_embeddings == b.params.item_embeddings);
}

TEST_CASE("training is deterministic and resumes bit-identically") {
    Corpus c = make_corpus(5);
    const auto init = ModelParams<double>::init(10, 4, 0.2, 3);
    for (const char* preset : {"bbcNCE", "SSM"}) {
        CAPTURE(preset);
        LossConfig loss = loss_preset(preset);
        loss.num_sampled = 4;
        const fs::path full_dir = scratch(std::string("full_") + preset);
        TrainHooks hooks;
        hooks.checkpoint_dir = full_dir;
        hooks.fingerprint = 42;
        const TrainResult full = train_incremental(c.examples, c.months, init, {}, loss, config(8, 2), hooks);
        const TrainResult repeat = train_incremental(c.examples, c.months, init, {}, loss, config(8, 2), hooks);
        CHECK(repeat.params.item_embeddings == full.params.item_embeddings);
        CHECK(repeat.step_losses == full.step_losses);

        for (std::uint32_t stop : {1u, 2u}) {
            const fs::path dir = scratch(std::string("part_") + preset);
            TrainHooks part = hooks;
            part.checkpoint_dir = dir;
            part.stop_after_months = stop;
            const TrainResult first = train_incremental(c.examples, c.months, init, {}, loss, config(8, 2), part);
            CHECK(first.trace.size() == stop);
            CHECK_FALSE(first.cursor.finished);
            const Checkpoint saved = load_checkpoint(dir / "latest.umck");
            TrainHooks rest = hooks;
            rest.checkpoint_dir = dir;
            rest.resume = &saved;
            const auto other_init = ModelParams<double>::init(10, 4, 0.2, 99);
            const TrainResult second = train_incremental(c.examples, c.months, other_init, {}, loss, config(8, 2), rest);
            CHECK(second.params.item_embeddings == full.params.item_embeddings);
            CHECK(second.cursor == full.cursor);
            CHECK(bytes(dir / "latest.umck") == bytes(full_dir / "latest.umck"));
            CHECK(bytes(dir / "month_03.umck") == bytes(full_dir / "month_03.umck"));
        }

        // mismatched settings are refused
        const Checkpoint saved = load_checkpoint(full_dir / "month_01.umck");
        TrainHooks wrong = hooks;
        wrong.resume = &saved;
        wrong.fingerprint = 43;
        CHECK_THROWS_AS(train_incremental(c.examples, c.months, init, {}, loss, config(8, 2), wrong),
                        std::invalid_argument);
        wrong.fingerprint = 42;
        TrainConfig other_seed = config(8, 2);
        other_seed.seed = 18;
        CHECK_THROWS_AS(train_incremental(c.examples, c.months, init, {}, loss, other_seed, wrong),
                        std::invalid_argument);
    }
}

TEST_CASE("month bookkeeping") {
    Corpus c = make_corpus(6);
    const auto init = ModelParams<double>::init(10, 4, 0.2, 3);
    TrainConfig cfg = config(16, 1);
    cfg.months = {1, 2, 3, 4};
    std::vector<int> seen;
    TrainHooks hooks;
    hooks.after_month = [&](const ModelParams<double>&, int month) {
        seen.push_back(month);
        return double(month) / 10.0;
    };
    const TrainResult r = train_incremental(c.examples, c.months, init, {}, loss_preset("bbcNCE"), cfg, hooks);
    CHECK(seen == std::vector<int>{1, 2, 3});
    REQUIRE(r.trace.size() == 3);
    CHECK(*r.trace[2].metric == doctest::Approx(0.3));
    CHECK(r.notices.size() == 1);
    CHECK(r.notices[0].find("month 4") != std::string::npos);

    // a trailing single example: counted as a step, no update
    Corpus odd = make_corpus(7, {17});
    const TrainResult s = train_incremental(odd.examples, odd.months, init, {}, loss_preset("bbcNCE"), config(8, 1));
    CHECK(s.cursor.step == 3);
    CHECK(s.notices.size() == 1);

    TrainConfig bad = config(1, 1);
    CHECK_THROWS_AS(train_incremental(c.examples, c.months, init, {}, loss_preset("bbcNCE"), bad),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_train_mode("random"), std::invalid_argument);
}

TEST_CASE("BCE trains on labeled examples") {
    Corpus c = make_corpus(8);
    const auto labeled = sample_negatives_bce(c.examples, NegativeStrategy::uniform, 1, 3);
    const auto init = ModelParams<double>::init(10, 4, 0.2, 3);
    const TrainResult r = train_shuffled(labeled, c.months, init, {}, loss_preset("BCE-uniform"), config(32, 2));
    CHECK(r.cursor.step == 2 * ((labeled.size() + 31) / 32));
    CHECK_THROWS_AS(train_shuffled(c.examples, c.months, init, {}, loss_preset("BCE-uniform"), config(32, 2)),
                    std::invalid_argument);
}

TEST_CASE("embedding export") {
    const fs::path dir = scratch("export");
    const auto p = ModelParams<double>::init(3, 2, 0.2, 3);
    export_embeddings(dir / "emb.tsv", p, {}, {{0, 1}, {2}});
    std::ifstream in(dir / "emb.tsv");
    std::string line;
    int users = 0, items = 0;
    while (std::getline(in, line)) {
        if (line.starts_with("user\t")) ++users;
        if (line.starts_with("item\t")) ++items;
    }
    CHECK(users == 2);
    CHECK(items == 3);
}
