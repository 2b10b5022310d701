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

#include "matchkit/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "matchkit/checkpoint.hpp"

namespace matchkit {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view text) {
    T value{};
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || end != text.data() + text.size())
        throw std::invalid_argument("'" + std::string(text) + "' is not a valid number");
    return value;
}

template <typename T>
T parse_positive(std::string_view text) {
    const T value = parse_number<T>(text);
    if (!(value > T(0))) throw std::invalid_argument("'" + std::string(text) + "' must be positive");
    return value;
}

bool parse_bool(std::string_view text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw std::invalid_argument("'" + std::string(text) + "' is not a boolean");
}

template <typename T>
std::string format_number(T value) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, end);
}

std::string format_bool(bool b) { return b ? "true" : "false"; }

template <typename T>
std::vector<T> parse_list(std::string_view text) {
    std::vector<T> out;
    while (!text.empty()) {
        const auto comma = text.find(',');
        const std::string_view item = trim(text.substr(0, comma));
        if (!item.empty()) out.push_back(parse_number<T>(item));
        if (comma == std::string_view::npos) break;
        text.remove_prefix(comma + 1);
    }
    return out;
}

template <typename T>
std::string format_list(const std::vector<T>& values) {
    std::string out;
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (k) out += ',';
        out += format_number(values[k]);
    }
    return out;
}

/// Loss keys are collected first and resolved once the whole file is read,
/// since an explicit family or flag overrides whatever the preset implied.
struct LossKeys {
    std::map<std::string, std::string> values;
};

struct Entry {
    std::string key;
    std::function<void(RunConfig&, LossKeys&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::vector<Entry>& registry() {
    static const std::vector<Entry> entries = [] {
        std::vector<Entry> e;
        auto loss_key = [&](const std::string& key, std::function<std::string(const RunConfig&)> get) {
            e.push_back({key, [key](RunConfig&, LossKeys& l, std::string_view v) { l.values[key] = std::string(v); },
                         std::move(get)});
        };
        e.push_back({"seed", [](RunConfig& c, LossKeys&, std::string_view v) { c.seed = parse_number<std::uint64_t>(v); },
                     [](const RunConfig& c) { return format_number(c.seed); }});
        e.push_back({"data.events", [](RunConfig& c, LossKeys&, std::string_view v) { c.data.events = std::string(v); },
                     [](const RunConfig& c) { return c.data.events.string(); }});
        e.push_back({"data.delimiter",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         if (v == "tab" || v == "\\t") {
                             c.data.delimiter = '\t';
                         } else if (v.size() == 1) {
                             c.data.delimiter = v[0];
                         } else {
                             throw std::invalid_argument("delimiter must be one character or 'tab'");
                         }
                     },
                     [](const RunConfig& c) {
                         return c.data.delimiter == '\t' ? std::string("tab") : std::string(1, c.data.delimiter);
                     }});
        e.push_back({"data.has_header",
                     [](RunConfig& c, LossKeys&, std::string_view v) { c.data.has_header = parse_bool(v); },
                     [](const RunConfig& c) { return format_bool(c.data.has_header); }});
        e.push_back({"data.horizon_days",
                     [](RunConfig& c, LossKeys&, std::string_view v) { c.data.horizon_days = parse_number<int>(v); },
                     [](const RunConfig& c) { return format_number(c.data.horizon_days); }});
        e.push_back({"data.max_seq_len",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.data.max_seq_len = parse_number<std::size_t>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.data.max_seq_len); }});
        e.push_back({"data.months_total",
                     [](RunConfig& c, LossKeys&, std::string_view v) { c.data.months_total = parse_number<int>(v); },
                     [](const RunConfig& c) { return format_number(c.data.months_total); }});
        e.push_back({"data.min_degree",
                     [](RunConfig& c, LossKeys&, std::string_view v) { c.data.min_degree = parse_number<int>(v); },
                     [](const RunConfig& c) { return format_number(c.data.min_degree); }});
        e.push_back({"output.dir", [](RunConfig& c, LossKeys&, std::string_view v) { c.output_dir = std::string(v); },
                     [](const RunConfig& c) { return c.output_dir.string(); }});
        e.push_back({"model.dim",
                     [](RunConfig& c, LossKeys&, std::string_view v) { c.model.dim = parse_positive<Eigen::Index>(v); },
                     [](const RunConfig& c) { return format_number(c.model.dim); }});
        e.push_back({"model.aggregator",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.model.encoder.aggregator = parse_aggregator(v);
                     },
                     [](const RunConfig& c) { return std::string(to_string(c.model.encoder.aggregator)); }});
        e.push_back({"model.temperature",
                     [](RunConfig& c, LossKeys&, std::string_view v) { c.model.temperature = parse_positive<double>(v); },
                     [](const RunConfig& c) { return format_number(c.model.temperature); }});
        loss_key("loss.preset", [](const RunConfig& c) { return c.loss.preset; });
        loss_key("loss.family", [](const RunConfig& c) { return std::string(to_string(c.loss.family)); });
        loss_key("loss.alpha", [](const RunConfig& c) { return format_number(int(c.loss.flags.alpha)); });
        loss_key("loss.beta", [](const RunConfig& c) { return format_number(int(c.loss.flags.beta)); });
        loss_key("loss.delta_alpha", [](const RunConfig& c) { return format_number(int(c.loss.flags.delta_alpha)); });
        loss_key("loss.delta_beta", [](const RunConfig& c) { return format_number(int(c.loss.flags.delta_beta)); });
        loss_key("loss.negative_strategy",
                 [](const RunConfig& c) { return std::string(to_string(c.loss.negative_strategy)); });
        loss_key("loss.negative_ratio", [](const RunConfig& c) { return format_number(c.loss.negative_ratio); });
        loss_key("loss.num_sampled", [](const RunConfig& c) { return format_number(c.loss.num_sampled); });
        loss_key("loss.ssm_proposal", [](const RunConfig& c) { return std::string(to_string(c.loss.ssm_proposal)); });
        e.push_back({"train.mode", [](RunConfig& c, LossKeys&, std::string_view v) { c.mode = parse_train_mode(v); },
                     [](const RunConfig& c) { return std::string(to_string(c.mode)); }});
        e.push_back({"train.epochs_per_month",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.train.epochs_per_month = parse_number<int>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.train.epochs_per_month); }});
        e.push_back({"train.batch_size",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.train.batch_size = parse_number<std::size_t>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.train.batch_size); }});
        e.push_back({"train.months",
                     [](RunConfig& c, LossKeys&, std::string_view v) { c.train.months = parse_list<int>(v); },
                     [](const RunConfig& c) { return format_list(c.train.months); }});
        e.push_back({"train.optimizer",
                     [](RunConfig& c, LossKeys&, std::string_view v) { c.train.optimizer.kind = parse_optimizer(v); },
                     [](const RunConfig& c) { return std::string(to_string(c.train.optimizer.kind)); }});
        e.push_back({"train.learning_rate",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.train.optimizer.learning_rate = parse_number<double>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.train.optimizer.learning_rate); }});
        e.push_back({"train.adam_beta1",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.train.optimizer.beta1 = parse_number<double>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.train.optimizer.beta1); }});
        e.push_back({"train.adam_beta2",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.train.optimizer.beta2 = parse_number<double>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.train.optimizer.beta2); }});
        e.push_back({"train.adam_epsilon",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.train.optimizer.epsilon = parse_number<double>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.train.optimizer.epsilon); }});
        e.push_back({"eval.task", [](RunConfig& c, LossKeys&, std::string_view v) { c.eval.task = parse_eval_task(v); },
                     [](const RunConfig& c) { return std::string(to_string(c.eval.task)); }});
        e.push_back({"eval.num_negatives",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.eval.num_negatives = parse_number<std::size_t>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.eval.num_negatives); }});
        e.push_back({"eval.top_n",
                     [](RunConfig& c, LossKeys&, std::string_view v) { c.eval.top_n = parse_number<std::size_t>(v); },
                     [](const RunConfig& c) { return format_number(c.eval.top_n); }});
        e.push_back({"eval.popularity_window_days",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.eval.popularity_window_days = parse_number<int>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.eval.popularity_window_days); }});
        e.push_back({"eval.group_positives",
                     [](RunConfig& c, LossKeys&, std::string_view v) { c.eval.group_positives = parse_bool(v); },
                     [](const RunConfig& c) { return format_bool(c.eval.group_positives); }});
        e.push_back({"verify.spec",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         if (v != "default" && v != "uniform")
                             throw std::invalid_argument("verify.spec must be 'default' or 'uniform'");
                         c.verify.spec = std::string(v);
                     },
                     [](const RunConfig& c) { return c.verify.spec; }});
        e.push_back({"verify.seeds",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.verify.seeds = parse_list<std::uint64_t>(v);
                     },
                     [](const RunConfig& c) { return format_list(c.verify.seeds); }});
        e.push_back({"verify.data_seed",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.verify.data_seed = parse_number<std::uint64_t>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.verify.data_seed); }});
        e.push_back({"verify.dim",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.verify.config.dim = parse_positive<Eigen::Index>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.verify.config.dim); }});
        e.push_back({"verify.temperature",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.verify.config.temperature = parse_positive<double>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.verify.config.temperature); }});
        e.push_back({"verify.epochs",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.verify.config.epochs = parse_positive<int>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.verify.config.epochs); }});
        e.push_back({"verify.batch_size",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.verify.config.batch_size = parse_number<std::size_t>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.verify.config.batch_size); }});
        e.push_back({"verify.learning_rate",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.verify.config.optimizer.learning_rate = parse_number<double>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.verify.config.optimizer.learning_rate); }});
        e.push_back({"verify.num_sampled",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.verify.config.num_sampled = parse_number<int>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.verify.config.num_sampled); }});
        e.push_back({"verify.ssm_proposal",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.verify.config.ssm_proposal = parse_proposal(v);
                     },
                     [](const RunConfig& c) { return std::string(to_string(c.verify.config.ssm_proposal)); }});
        e.push_back({"verify.min_spearman",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.verify.config.min_spearman = parse_number<double>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.verify.config.min_spearman); }});
        e.push_back({"verify.max_residual",
                     [](RunConfig& c, LossKeys&, std::string_view v) {
                         c.verify.config.max_residual = parse_number<double>(v);
                     },
                     [](const RunConfig& c) { return format_number(c.verify.config.max_residual); }});
        return e;
    }();
    return entries;
}

void resolve_loss(RunConfig& config, const LossKeys& keys) {
    auto get = [&](const std::string& k) -> const std::string* {
        auto it = keys.values.find(k);
        return it == keys.values.end() ? nullptr : &it->second;
    };
    LossConfig loss = loss_preset(get("loss.preset") ? std::string_view(*get("loss.preset")) : "bbcNCE");
    if (auto v = get("loss.family")) loss.family = parse_loss_family(*v);
    if (auto v = get("loss.alpha")) loss.flags.alpha = parse_bool(*v);
    if (auto v = get("loss.beta")) loss.flags.beta = parse_bool(*v);
    if (auto v = get("loss.delta_alpha")) loss.flags.delta_alpha = parse_bool(*v);
    if (auto v = get("loss.delta_beta")) loss.flags.delta_beta = parse_bool(*v);
    if (auto v = get("loss.negative_strategy")) loss.negative_strategy = parse_negative_strategy(*v);
    if (auto v = get("loss.negative_ratio")) loss.negative_ratio = parse_number<int>(*v);
    if (auto v = get("loss.num_sampled")) loss.num_sampled = parse_number<int>(*v);
    if (auto v = get("loss.ssm_proposal")) loss.ssm_proposal = parse_proposal(*v);
    loss.validate();
    config.loss = loss;
}

}  // namespace

const std::vector<std::string>& run_config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& e : registry()) k.push_back(e.key);
        return k;
    }();
    return keys;
}

RunConfig parse_run_config(std::istream& in) {
    RunConfig config;
    LossKeys loss_keys;
    std::set<std::string> seen;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        const auto& entries = registry();
        const auto it = std::find_if(entries.begin(), entries.end(), [&](const Entry& e) { return e.key == key; });
        if (it == entries.end()) throw ParseError(line_no, "unknown key '" + key + "'");
        if (!seen.insert(key).second) throw ParseError(line_no, "key '" + key + "' given twice");
        try {
            it->set(config, loss_keys, value);
        } catch (const std::invalid_argument& err) {
            throw ParseError(line_no, key + ": " + err.what());
        }
    }
    try {
        resolve_loss(config, loss_keys);
        config.train.validate(config.loss);
    } catch (const std::invalid_argument& err) {
        throw ParseError(line_no, err.what());
    }
    config.train.seed = config.seed;
    return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path.string());
    try {
        return parse_run_config(in);
    } catch (const ParseError& err) {
        throw std::runtime_error(path.string() + ": " + err.what());
    }
}

std::string RunConfig::to_text() const {
    std::ostringstream out;
    for (const auto& e : registry()) out << e.key << " = " << e.get(*this) << '\n';
    return out.str();
}

std::uint64_t RunConfig::fingerprint() const {
    std::string canonical;
    for (const auto& e : registry()) {
        const bool shapes_model = e.key == "seed" || e.key.starts_with("data.") || e.key.starts_with("model.") ||
                                  e.key.starts_with("loss.") || e.key.starts_with("train.");
        if (shapes_model) canonical += e.key + "=" + e.get(*this) + "\n";
    }
    return fingerprint_of(canonical);
}

}  // namespace matchkit
