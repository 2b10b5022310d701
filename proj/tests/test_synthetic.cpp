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
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>

#include "matchkit/optima_verifier.hpp"
#include "matchkit/stats.hpp"
#include "matchkit/synthetic.hpp"

using namespace matchkit;

TEST_CASE("rank statistics") {
    const std::vector<double> x{1, 2, 3, 4}, y{10, 20, 30, 45}, z{4, 3, 2, 1};
    CHECK(spearman(x, y) == doctest::Approx(1.0));
    CHECK(spearman(x, z) == doctest::Approx(-1.0));
    const std::vector<double> ties{1, 1, 2};
    CHECK(average_ranks(ties) == std::vector<double>{1.5, 1.5, 3});
    const std::vector<double> flat{2, 2, 2};
    CHECK(std::isnan(pearson(flat, ties)));
}

TEST_CASE("synthetic generation") {
    SUBCASE("a single nonzero cell") {
        SyntheticSpec spec = uniform_synthetic_spec(3, 4, 500);
        spec.joint.setZero();
        spec.joint(1, 2) = 1.0;
        const SyntheticData d = generate_synthetic(spec, 1);
        CHECK(d.examples.size() == 500);
        for (const auto& r : d.log) {
            CHECK(r.user_id == 1);
            CHECK(r.item_id == 2);
        }
        CHECK(d.tables.counts(1, 2) == 500);
    }
    SUBCASE("uniform joint passes a chi-square test") {
        const SyntheticData d = generate_synthetic(uniform_synthetic_spec(8, 12, 100000), 5);
        const double e = 100000.0 / 96.0;
        double stat = 0.0;
        for (int u = 0; u < 8; ++u)
            for (int i = 0; i < 12; ++i) stat += (d.tables.counts(u, i) - e) * (d.tables.counts(u, i) - e) / e;
        const double p = 1.0 - boost::math::cdf(boost::math::chi_squared(95.0), stat);
        CHECK(p > 0.001);
        CHECK(d.tables.total == 100000);
    }
    SUBCASE("drift tables apply month by month") {
        SyntheticSpec spec = uniform_synthetic_spec(2, 2, 1000);
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2), b = Eigen::MatrixXd::Zero(2, 2);
        a(0, 0) = 1.0;
        b(1, 1) = 1.0;
        spec.drift = {a, b};
        spec.months = 2;
        const SyntheticData d = generate_synthetic(spec, 3);
        REQUIRE(d.monthly.size() == 2);
        CHECK(d.monthly[0].counts(0, 0) == 500);
        CHECK(d.monthly[0].total == 500);
        CHECK(d.monthly[1].counts(1, 1) == 500);
        for (const auto& e : d.examples) {
            const int month = d.month_index.month_of(e.day);
            CHECK(e.target_item == (month == 1 ? 0 : 1));
        }
    }
    SUBCASE("examples use history tokens and full-sample marginals") {
        const SyntheticData d = generate_synthetic(default_synthetic_spec(), 1);
        CHECK(d.vocabulary_size() == 20);
        const auto& e = d.examples.front();
        REQUIRE(e.pseudo_user.size() == 1);
        const int u = e.pseudo_user[0] - 12;
        CHECK(e.log_p_u == doctest::Approx(std::log(d.tables.user(u))).epsilon(1e-12));
        CHECK(e.log_p_i == doctest::Approx(std::log(d.tables.item(e.target_item))).epsilon(1e-12));
        CHECK(generate_synthetic(default_synthetic_spec(), 1).examples == d.examples);
    }
    SUBCASE("spec validation") {
        SyntheticSpec spec = uniform_synthetic_spec(2, 2, 10);
        spec.joint(0, 0) += 1e-9;
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
        for (const auto& s : {default_synthetic_spec(), drifting_synthetic_spec(), skewed_synthetic_spec()})
            CHECK_NOTHROW(s.validate());
        const SyntheticSpec def = default_synthetic_spec();
        CHECK(def.num_users == 8);
        CHECK(def.num_items == 12);
        CHECK(def.num_samples == 200000);
        for (int u = 0; u < 8; ++u) CHECK((def.joint.row(u).array() > 0).count() >= 2);
        for (int i = 0; i < 12; ++i) CHECK((def.joint.col(i).array() > 0).count() >= 2);
        CHECK((def.joint.array() == 0).count() > 0);
    }
}

TEST_CASE("target tables") {
    EmpiricalTables t;
    t.counts = Eigen::MatrixXd(2, 2);
    t.counts << 3, 1, 0, 4;
    t.total = 8;
    const Eigen::MatrixXd joint = target_table(t, OptimumTarget::joint);
    CHECK(joint(0, 0) == doctest::Approx(std::log(3.0 / 8.0)));
    CHECK(std::isnan(joint(1, 0)));
    CHECK(target_table(t, OptimumTarget::item_given_user)(0, 1) == doctest::Approx(std::log(1.0 / 4.0)));
    CHECK(target_table(t, OptimumTarget::user_given_item)(0, 1) == doctest::Approx(std::log(1.0 / 5.0)));
    CHECK(target_table(t, OptimumTarget::pointwise_mutual_information)(1, 1) ==
          doctest::Approx(std::log((4.0 / 8.0) / ((4.0 / 8.0) * (5.0 / 8.0)))));
}

TEST_CASE("check_optimum") {
    const VerifyConfig cfg;
    SUBCASE("uniform tables: constant target, zero residual") {
        EmpiricalTables t;
        t.counts = Eigen::MatrixXd::Constant(3, 4, 5.0);
        t.total = 60;
        for (const auto& name : loss_preset_names()) {
            const OptimumReport r = check_optimum(loss_preset(name), Eigen::MatrixXd::Constant(3, 4, 1.5), t, cfg, 0.05);
            CHECK(r.residual < 1e-12);
            CHECK(r.target_range < 1e-12);
            CHECK(r.observed == 12);
        }
    }
    SUBCASE("offsets within the loss's gauge are ignored") {
        EmpiricalTables t;
        t.counts = Eigen::MatrixXd(3, 3);
        t.counts << 5, 1, 0, 2, 7, 3, 1, 1, 9;
        t.total = std::int64_t(t.counts.sum());
        const Eigen::MatrixXd cond = target_table(t, OptimumTarget::item_given_user);
        Eigen::MatrixXd phi = cond;
        for (int u = 0; u < 3; ++u) phi.row(u).array() += 2.0 * u - 1.0;
        phi(0, 2) = 0.0;  // unobserved cell, ignored
        const OptimumReport row = check_optimum(loss_preset("row-bcNCE"), phi, t, cfg, 0.05);
        CHECK(row.gauge == Gauge::per_user);
        CHECK(row.residual < 1e-12);
        CHECK(row.spearman == doctest::Approx(1.0));
        CHECK(row.excluded == 1);
        CHECK(row.passed);
        CHECK(row.global_residual > 0.5);
        const OptimumReport joint = check_optimum(loss_preset("bbcNCE"), target_table(t, OptimumTarget::joint).array() + 3.0, t, cfg, 0.05);
        CHECK(joint.gauge == Gauge::global);
        CHECK(joint.constant == doctest::Approx(3.0));
        CHECK(joint.residual < 1e-12);
        CHECK_FALSE(joint.range_exceeded);
        CHECK(check_optimum(loss_preset("bbcNCE"), phi, t, cfg, 10.0).range_exceeded);
        CHECK(gauge_of(loss_preset("col-bcNCE")) == Gauge::per_item);
        CHECK(gauge_of(loss_preset("SimCLR")) == Gauge::global);
        CHECK(gauge_of(loss_preset("BCE-user_marginal")) == Gauge::global);
    }
}

TEST_CASE("short sweep: cardinality, names and report") {
    VerifyConfig cfg;
    cfg.epochs = 3;
    const SyntheticSpec spec = uniform_synthetic_spec(3, 4, 2000);
    const auto reports = run_table_sweep(spec, {1, 2, 3}, cfg);
    CHECK(reports.size() == 30);
    for (const auto& r : reports)
        if (r.config == "row-bcNCE") CHECK(target_name(r.target) == "log p(i|u)");
    const SyntheticData data = generate_synthetic(spec, 1);
    const auto agreement = group_agreement(reports, data.tables, 0.9);
    CHECK(agreement.size() == 3 * (1 + 3 + 1 + 3));
    std::ostringstream out;
    write_sweep_report(out, reports, agreement);
    std::size_t lines = 0;
    for (char ch : out.str()) lines += ch == '\n';
    CHECK(lines == 1 + 30 + agreement.size());
    CHECK(equal_optimum_groups().size() == 4);
}

TEST_CASE("structured 4x5 joint: bbcNCE recovers log p(u,i); InfoNCE and SimCLR agree") {
    SyntheticSpec spec = uniform_synthetic_spec(4, 5, 40000);
    spec.joint << 8, 4, 2, 1, 0.5,  //
        1, 6, 3, 0.5, 2,            //
        0.5, 1, 7, 4, 1,            //
        3, 0.5, 1, 2, 6;
    spec.joint /= spec.joint.sum();
    const SyntheticData data = generate_synthetic(spec, 2);
    VerifyConfig cfg;
    cfg.epochs = 1500;
    const OptimumReport bbc = train_and_check("bbcNCE", data, 1, cfg);
    CHECK(bbc.spearman >= 0.95);
    const OptimumReport info = train_and_check("InfoNCE", data, 1, cfg);
    const OptimumReport simclr = train_and_check("SimCLR", data, 1, cfg);
    const auto agreement = group_agreement({info, simclr}, data.tables, 0.9);
    REQUIRE(agreement.size() == 1);
    CHECK(agreement[0].spearman >= 0.95);
}
