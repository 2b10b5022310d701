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

#include "matchkit/optima_verifier.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

#include "matchkit/stats.hpp"
#include "matchkit/trainer.hpp"

namespace matchkit {

Eigen::MatrixXd score_table(const SyntheticData& data, const ModelParams<double>& params,
                            const EncoderConfig& encoder) {
    Eigen::MatrixXd phi(data.num_users, data.num_items);
    for (int u = 0; u < data.num_users; ++u) {
        const std::vector<ItemId> history{data.history_token(u)};
        const Vector<double> user = encode_user<double>(history, params, encoder);
        for (int i = 0; i < data.num_items; ++i) phi(u, i) = score(user, encode_item(i, params), params.temperature);
    }
    return phi;
}

Eigen::MatrixXd target_table(const EmpiricalTables& tables, OptimumTarget target) {
    const Eigen::Index rows = tables.counts.rows();
    const Eigen::Index cols = tables.counts.cols();
    const Eigen::VectorXd row_sum = tables.counts.rowwise().sum();
    const Eigen::RowVectorXd col_sum = tables.counts.colwise().sum();
    const double total = double(tables.total);
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index u = 0; u < rows; ++u) {
        for (Eigen::Index i = 0; i < cols; ++i) {
            const double c = tables.counts(u, i);
            if (c <= 0.0) {
                out(u, i) = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            switch (target) {
                case OptimumTarget::joint: out(u, i) = std::log(c / total); break;
                case OptimumTarget::item_given_user: out(u, i) = std::log(c / row_sum(u)); break;
                case OptimumTarget::user_given_item: out(u, i) = std::log(c / col_sum(i)); break;
                case OptimumTarget::pointwise_mutual_information:
                    out(u, i) = std::log(c * total / (row_sum(u) * col_sum(i)));
                    break;
            }
        }
    }
    return out;
}

Gauge gauge_of(const LossConfig& loss) {
    switch (loss.family) {
        case LossFamily::bce: return Gauge::global;
        case LossFamily::ssm:
        case LossFamily::full_softmax_row: return Gauge::per_user;
        case LossFamily::full_softmax_col: return Gauge::per_item;
        case LossFamily::bidirectional:
            if (loss.flags.alpha && loss.flags.beta) return Gauge::global;
            return loss.flags.alpha ? Gauge::per_user : Gauge::per_item;
    }
    return Gauge::global;
}

std::string_view to_string(Gauge gauge) {
    switch (gauge) {
        case Gauge::global: return "global";
        case Gauge::per_user: return "per_user";
        case Gauge::per_item: return "per_item";
    }
    return "unknown";
}

namespace {

struct Fit {
    double residual = 0.0;
    double spearman = 0.0;
};

/// Offsets phi - target by its mean within each group, then reports the worst
/// remaining deviation and the rank agreement of group-centered values.
Fit fit_offsets(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& target, Gauge gauge) {
    auto group_of = [&](Eigen::Index u, Eigen::Index i) {
        return gauge == Gauge::global ? Eigen::Index(0) : gauge == Gauge::per_user ? u : i;
    };
    const Eigen::Index groups = gauge == Gauge::global ? 1 : gauge == Gauge::per_user ? phi.rows() : phi.cols();
    Eigen::VectorXd phi_sum = Eigen::VectorXd::Zero(groups), target_sum = Eigen::VectorXd::Zero(groups);
    Eigen::VectorXd n = Eigen::VectorXd::Zero(groups);
    for (Eigen::Index u = 0; u < phi.rows(); ++u) {
        for (Eigen::Index i = 0; i < phi.cols(); ++i) {
            if (std::isnan(target(u, i))) continue;
            const Eigen::Index g = group_of(u, i);
            phi_sum(g) += phi(u, i);
            target_sum(g) += target(u, i);
            n(g) += 1.0;
        }
    }
    Fit fit;
    std::vector<double> x, y;
    for (Eigen::Index u = 0; u < phi.rows(); ++u) {
        for (Eigen::Index i = 0; i < phi.cols(); ++i) {
            if (std::isnan(target(u, i))) continue;
            const Eigen::Index g = group_of(u, i);
            const double centered_phi = phi(u, i) - phi_sum(g) / n(g);
            const double centered_target = target(u, i) - target_sum(g) / n(g);
            fit.residual = std::max(fit.residual, std::abs(centered_phi - centered_target));
            x.push_back(centered_phi);
            y.push_back(centered_target);
        }
    }
    fit.spearman = x.empty() ? 0.0 : spearman(x, y);
    return fit;
}

}  // namespace

OptimumReport check_optimum(const LossConfig& loss, const Eigen::MatrixXd& phi, const EmpiricalTables& tables,
                            const VerifyConfig& config, double temperature) {
    OptimumReport report;
    report.config = loss.preset;
    report.target = optimum_target(loss);
    report.gauge = gauge_of(loss);
    report.phi = phi;
    const Eigen::MatrixXd target = target_table(tables, report.target);
    std::vector<double> y, diff;
    for (Eigen::Index k = 0; k < target.size(); ++k) {
        if (std::isnan(target(k))) {
            ++report.excluded;
            continue;
        }
        y.push_back(target(k));
        diff.push_back(phi(k) - target(k));
    }
    report.observed = y.size();
    if (y.empty()) return report;
    report.constant = std::accumulate(diff.begin(), diff.end(), 0.0) / double(diff.size());
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    report.target_range = *hi - *lo;
    report.range_exceeded = report.target_range > 2.0 / temperature;
    const Fit global = fit_offsets(phi, target, Gauge::global);
    report.global_residual = global.residual;
    report.global_spearman = global.spearman;
    const Fit gauged = report.gauge == Gauge::global ? global : fit_offsets(phi, target, report.gauge);
    report.residual = gauged.residual;
    report.spearman = gauged.spearman;
    report.passed = report.spearman >= config.min_spearman && report.residual <= config.max_residual;
    return report;
}

OptimumReport train_and_check(const std::string& preset, const SyntheticData& data, std::uint64_t seed,
                              const VerifyConfig& config) {
    LossConfig loss = loss_preset(preset);
    // a grid with few items cannot supply more than K - 1 distinct negatives
    loss.num_sampled = std::min(config.num_sampled, data.num_items - 1);
    loss.ssm_proposal = config.ssm_proposal;
    loss.negative_ratio = config.negative_ratio;
    ModelParams<double> params =
        ModelParams<double>::init(data.vocabulary_size(), config.dim, config.temperature, mix_seed(seed, 1));
    TrainConfig train;
    train.epochs_per_month = config.epochs;
    train.optimizer = config.optimizer;
    train.seed = mix_seed(seed, 3);
    const EncoderConfig encoder;

    TrainResult result;
    if (loss.family == LossFamily::bce) {
        const std::vector<LabeledExample> labeled =
            sample_negatives_bce(data.examples, loss.negative_strategy, loss.negative_ratio, mix_seed(seed, 2));
        train.batch_size = config.batch_size ? config.batch_size : labeled.size();
        result = train_shuffled(labeled, data.month_index, std::move(params), encoder, loss, train);
    } else {
        train.batch_size = config.batch_size ? config.batch_size : data.examples.size();
        result = train_shuffled(data.examples, data.month_index, std::move(params), encoder, loss, train);
    }
    OptimumReport report =
        check_optimum(loss, score_table(data, result.params, encoder), data.tables, config, config.temperature);
    report.seed = seed;
    report.final_loss = result.step_losses.empty() ? 0.0 : result.step_losses.back();
    return report;
}

std::vector<OptimumReport> run_table_sweep(const SyntheticSpec& spec, const std::vector<std::uint64_t>& seeds,
                                           const VerifyConfig& config, std::uint64_t data_seed) {
    const SyntheticData data = generate_synthetic(spec, data_seed);
    std::vector<OptimumReport> reports;
    for (const auto& preset : loss_preset_names())
        for (std::uint64_t seed : seeds) reports.push_back(train_and_check(preset, data, seed, config));
    return reports;
}

std::vector<std::vector<std::string>> equal_optimum_groups() {
    return {{"BCE-uniform", "bbcNCE"},
            {"BCE-user_marginal", "row-bcNCE", "SSM"},
            {"BCE-item_marginal", "col-bcNCE"},
            {"BCE-product_of_marginals", "InfoNCE", "SimCLR"}};
}

namespace {

/// Removes per-row and/or per-column means over observed cells.
Eigen::MatrixXd center(Eigen::MatrixXd phi, const Eigen::MatrixXd& counts, bool rows, bool cols) {
    auto remove = [&](bool by_row) {
        const Eigen::Index groups = by_row ? phi.rows() : phi.cols();
        for (Eigen::Index g = 0; g < groups; ++g) {
            double sum = 0.0, n = 0.0;
            for (Eigen::Index k = 0; k < (by_row ? phi.cols() : phi.rows()); ++k) {
                const Eigen::Index u = by_row ? g : k, i = by_row ? k : g;
                if (counts(u, i) > 0.0) {
                    sum += phi(u, i);
                    n += 1.0;
                }
            }
            if (n == 0.0) continue;
            for (Eigen::Index k = 0; k < (by_row ? phi.cols() : phi.rows()); ++k) {
                const Eigen::Index u = by_row ? g : k, i = by_row ? k : g;
                phi(u, i) -= sum / n;
            }
        }
    };
    if (rows) remove(true);
    if (cols) remove(false);
    return phi;
}

}  // namespace

std::vector<AgreementReport> group_agreement(const std::vector<OptimumReport>& reports,
                                             const EmpiricalTables& tables, double min_spearman) {
    std::vector<AgreementReport> out;
    auto find = [&](const std::string& name, std::uint64_t seed) -> const OptimumReport* {
        for (const auto& r : reports)
            if (r.config == name && r.seed == seed) return &r;
        return nullptr;
    };
    std::vector<std::uint64_t> seeds;
    for (const auto& r : reports)
        if (std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end()) seeds.push_back(r.seed);
    for (const auto& group : equal_optimum_groups()) {
        for (std::uint64_t seed : seeds) {
            for (std::size_t a = 0; a < group.size(); ++a) {
                for (std::size_t b = a + 1; b < group.size(); ++b) {
                    const OptimumReport* ra = find(group[a], seed);
                    const OptimumReport* rb = find(group[b], seed);
                    if (!ra || !rb) continue;
                    const bool rows = ra->gauge == Gauge::per_user || rb->gauge == Gauge::per_user;
                    const bool cols = ra->gauge == Gauge::per_item || rb->gauge == Gauge::per_item;
                    const Eigen::MatrixXd a_centered = center(ra->phi, tables.counts, rows, cols);
                    const Eigen::MatrixXd b_centered = center(rb->phi, tables.counts, rows, cols);
                    std::vector<double> x, y;
                    for (Eigen::Index k = 0; k < tables.counts.size(); ++k) {
                        if (tables.counts(k) <= 0.0) continue;
                        x.push_back(a_centered(k));
                        y.push_back(b_centered(k));
                    }
                    const double rho = spearman(x, y);
                    out.push_back({group[a], group[b], seed, rho, rho >= min_spearman});
                }
            }
        }
    }
    return out;
}

void write_sweep_report(std::ostream& out, const std::vector<OptimumReport>& reports,
                        const std::vector<AgreementReport>& agreement) {
    out << std::setprecision(6);
    out << "kind\tconfig\tseed\ttarget\tgauge\tspearman\tresidual\tglobal_spearman\tglobal_residual\tconstant\t"
           "observed\texcluded\ttarget_range\trange_exceeded\tstatus\n";
    for (const auto& r : reports) {
        out << "optimum\t" << r.config << '\t' << r.seed << '\t' << target_name(r.target) << '\t' << to_string(r.gauge)
            << '\t' << r.spearman << '\t' << r.residual << '\t' << r.global_spearman << '\t' << r.global_residual
            << '\t' << r.constant << '\t' << r.observed << '\t' << r.excluded << '\t'
            << r.target_range << '\t' << (r.range_exceeded ? "yes" : "no") << '\t' << (r.passed ? "pass" : "FLAG")
            << '\n';
    }
    for (const auto& a : agreement) {
        out << "agreement\t" << a.first << '~' << a.second << '\t' << a.seed << "\t-\t-\t" << a.spearman
            << "\t-\t-\t-\t-\t-\t-\t-\t-\t" << (a.passed ? "pass" : "FLAG") << '\n';
    }
}

}  // namespace matchkit
