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
#include <numeric>

#include "matchkit/model.hpp"
#include "matchkit/objective.hpp"
#include "matchkit/optimizer.hpp"

using namespace matchkit;

namespace {

ModelParams<double> params_from(std::initializer_list<std::initializer_list<double>> rows, double tau = 1.0) {
    ModelParams<double> p;
    p.item_embeddings.resize(Eigen::Index(rows.size()), Eigen::Index(rows.begin()->size()));
    Eigen::Index r = 0;
    for (const auto& row : rows) {
        Eigen::Index c = 0;
        for (double v : row) p.item_embeddings(r, c++) = v;
        ++r;
    }
    p.attention = Vector<double>::Zero(p.dim());
    p.temperature = tau;
    return p;
}

}  // namespace

TEST_CASE("encode_user aggregators") {
    const auto p = params_from({{1, 2}, {3, -4}, {0, 6}});
    const std::vector<ItemId> one{1};
    for (auto agg : {Aggregator::mean, Aggregator::last, Aggregator::attention})
        CHECK(encode_user<double>(one, p, {agg}) == p.item_embeddings.row(1).transpose());

    const std::vector<ItemId> two{0, 1};
    const Vector<double> mean = encode_user<double>(two, p, {Aggregator::mean});
    CHECK(mean(0) == 2.0);
    CHECK(mean(1) == -1.0);
    CHECK(encode_user<double>(two, p, {Aggregator::last}) == p.item_embeddings.row(1).transpose());
    // zero attention vector: uniform softmax weights
    const std::vector<ItemId> three{0, 1, 2};
    CHECK((encode_user<double>(three, p, {Aggregator::attention}) - encode_user<double>(three, p, {Aggregator::mean}))
              .norm() < 1e-15);

    auto q = p;
    q.attention << 0.5, -0.25;
    const Vector<double> att = encode_user<double>(two, q, {Aggregator::attention});
    const double l0 = 1 * 0.5 + 2 * -0.25, l1 = 3 * 0.5 - 4 * -0.25;
    const double w0 = std::exp(l0) / (std::exp(l0) + std::exp(l1));
    CHECK(att(0) == doctest::Approx(w0 * 1 + (1 - w0) * 3).epsilon(1e-14));
    CHECK(att(1) == doctest::Approx(w0 * 2 + (1 - w0) * -4).epsilon(1e-14));
}

TEST_CASE("out-of-vocabulary handling") {
    const auto p = params_from({{1, 0}, {0, 1}});
    const std::vector<ItemId> bad{0, 5};
    CHECK_THROWS_AS(encode_user<double>(bad, p), OutOfVocabulary);
    std::size_t skipped = 0;
    CHECK(encode_user_lenient<double>(bad, p, {}, &skipped) == p.item_embeddings.row(0).transpose());
    CHECK(skipped == 1);
    const std::vector<ItemId> none{7, 8};
    CHECK_THROWS_AS(encode_user_lenient<double>(none, p), std::invalid_argument);
    CHECK_THROWS_AS(encode_item(2, p), OutOfVocabulary);
    CHECK_THROWS_AS(encode_item(-1, p), OutOfVocabulary);
    const std::vector<ItemId> empty;
    CHECK_THROWS_AS(encode_user<double>(empty, p), std::invalid_argument);
}

TEST_CASE("encode_item reads the shared table") {
    auto p = params_from({{1, 2}, {3, 4}});
    CHECK(encode_item(0, p) == p.item_embeddings.row(0).transpose());
    const std::vector<ItemId> seq{1};
    p.item_embeddings(1, 0) = 9.0;
    CHECK(encode_item(1, p)(0) == 9.0);
    CHECK(encode_user<double>(seq, p)(0) == 9.0);
}

TEST_CASE("score") {
    Vector<double> u(2), i(2);
    u << 1, 2;
    CHECK(score(u, u, 0.25) == doctest::Approx(4.0).epsilon(1e-15));
    Vector<double> o(2);
    o << -2, 1;
    CHECK(score(u, o, 0.25) == 0.0);
    i << 3, 4;
    CHECK(score(u, i, 0.5) == doctest::Approx(1.96774).epsilon(1e-5));
    CHECK(score(u, i, 0.5) == doctest::Approx(2.0 * 11.0 / (std::sqrt(5.0) * 5.0)).epsilon(1e-15));
    CHECK(score(Vector<double>(3.7 * u), i, 0.5) == doctest::Approx(score(u, i, 0.5)).epsilon(1e-15));
    CHECK_THROWS_AS(score(Vector<double>::Zero(2), i, 0.5), std::domain_error);
    CHECK(std::abs(score(u, Vector<double>(-u), 0.3)) <= 1.0 / 0.3 + 1e-12);
}

TEST_CASE("score_matrix") {
    const auto p = ModelParams<double>::init(6, 4, 0.2, 3);
    std::vector<TrainingExample> batch(3);
    batch[0].pseudo_user = {0, 1};
    batch[0].target_item = 2;
    batch[1].pseudo_user = {3};
    batch[1].target_item = 4;
    batch[2].pseudo_user = {5, 0, 2};
    batch[2].target_item = 1;
    const Matrix<double> m = score_matrix<double, TrainingExample>(batch, p);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            CHECK(m(r, c) == doctest::Approx(score(encode_user<double>(batch[std::size_t(r)].pseudo_user, p),
                                                   encode_item(batch[std::size_t(c)].target_item, p), 0.2))
                                 .epsilon(1e-13));
    CHECK(m.cwiseAbs().maxCoeff() <= 5.0 + 1e-12);

    const std::vector<TrainingExample> single{batch[1]};
    const Matrix<double> s = score_matrix<double, TrainingExample>(single, p);
    CHECK(s.rows() == 1);
    CHECK(s(0, 0) == doctest::Approx(m(1, 1)).epsilon(1e-14));

    const std::vector<TrainingExample> permuted{batch[2], batch[0], batch[1]};
    const Matrix<double> pm = score_matrix<double, TrainingExample>(permuted, p);
    const int perm[3] = {2, 0, 1};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) CHECK(pm(r, c) == doctest::Approx(m(perm[r], perm[c])).epsilon(1e-14));
}

TEST_CASE("init and validation") {
    const auto p = ModelParams<double>::init(10, 16, 0.1, 42);
    CHECK(p.item_embeddings.cwiseAbs().maxCoeff() <= 0.25);
    CHECK(p.attention.isZero());
    CHECK(ModelParams<double>::init(10, 16, 0.1, 42).item_embeddings == p.item_embeddings);
    CHECK_THROWS_AS(ModelParams<double>::init(10, 16, 0.0, 42), std::invalid_argument);
    auto bad = p;
    bad.item_embeddings(0, 0) = std::nan("");
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CHECK_THROWS_AS(parse_aggregator("max"), std::invalid_argument);
}

TEST_CASE("a gradient step only moves touched rows") {
    auto p = ModelParams<double>::init(8, 4, 0.5, 1);
    std::vector<TrainingExample> batch(2);
    batch[0].pseudo_user = {0};
    batch[0].target_item = 1;
    batch[1].pseudo_user = {2};
    batch[1].target_item = 3;
    const auto out = bidirectional_nce_loss<double>(batch, p, {}, BidirectionalFlags{});
    const auto before = p.item_embeddings;
    OptimizerState<double> state;
    apply_optimizer_step(p, out.grads, state, {OptimizerKind::sgd, 0.1});
    for (int r = 0; r < 8; ++r) {
        const bool moved = (p.item_embeddings.row(r) - before.row(r)).norm() > 0;
        CHECK(moved == (r < 4));
    }
}
