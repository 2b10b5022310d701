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

#include "matchkit/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace matchkit {

namespace {

template <typename T>
T to_little(T value) {
    if constexpr (std::endian::native == std::endian::little) {
        return value;
    } else {
        std::array<unsigned char, sizeof(T)> bytes;
        std::memcpy(bytes.data(), &value, sizeof(T));
        std::reverse(bytes.begin(), bytes.end());
        std::memcpy(&value, bytes.data(), sizeof(T));
        return value;
    }
}

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    template <typename T>
    void put(T value) {
        value = to_little(value);
        out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
    }
    void reals(const double* data, std::size_t n) {
        for (std::size_t k = 0; k < n; ++k) put<double>(data[k]);
    }

private:
    std::ostream& out_;
};

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    template <typename T>
    T get() {
        T value;
        in_.read(reinterpret_cast<char*>(&value), sizeof(T));
        if (!in_) throw std::runtime_error("checkpoint is truncated");
        return to_little(value);
    }
    void reals(double* data, std::size_t n) {
        for (std::size_t k = 0; k < n; ++k) data[k] = get<double>();
    }

private:
    std::istream& in_;
};

constexpr std::array<char, 4> kMagic{'U', 'M', 'C', 'K'};

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
    out.write(kMagic.data(), kMagic.size());
    Writer w(out);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint64_t>(ckpt.fingerprint);
    w.put<std::uint64_t>(ckpt.seed);
    w.put<std::uint64_t>(ckpt.cursor.step);
    w.put<std::uint64_t>(ckpt.cursor.pass);
    w.put<std::uint32_t>(ckpt.cursor.month_pos);
    w.put<std::uint32_t>(ckpt.cursor.epoch);
    w.put<std::uint32_t>(ckpt.cursor.finished ? 1 : 0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.encoder.aggregator));
    w.put<double>(ckpt.params.temperature);
    const auto rows = static_cast<std::uint64_t>(ckpt.params.num_items());
    const auto dim = static_cast<std::uint64_t>(ckpt.params.dim());
    w.put<std::uint64_t>(rows);
    w.put<std::uint64_t>(dim);
    w.reals(ckpt.params.item_embeddings.data(), rows * dim);
    w.reals(ckpt.params.attention.data(), dim);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.optimizer));
    w.put<std::uint64_t>(ckpt.optimizer_state.rows.size());
    for (const auto& [row, s] : ckpt.optimizer_state.rows) {
        w.put<std::int64_t>(row);
        w.put<std::uint64_t>(s.steps);
        w.reals(s.m.data(), dim);
        w.reals(s.v.data(), dim);
    }
    if (!out) throw std::runtime_error("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw std::runtime_error("not a checkpoint (bad magic bytes)");
    Reader r(in);
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ckpt;
    ckpt.fingerprint = r.get<std::uint64_t>();
    ckpt.seed = r.get<std::uint64_t>();
    ckpt.cursor.step = r.get<std::uint64_t>();
    ckpt.cursor.pass = r.get<std::uint64_t>();
    ckpt.cursor.month_pos = r.get<std::uint32_t>();
    ckpt.cursor.epoch = r.get<std::uint32_t>();
    ckpt.cursor.finished = r.get<std::uint32_t>() != 0;
    const auto aggregator = r.get<std::uint32_t>();
    if (aggregator > static_cast<std::uint32_t>(Aggregator::attention))
        throw std::runtime_error("checkpoint names an unknown aggregator");
    ckpt.encoder.aggregator = static_cast<Aggregator>(aggregator);
    ckpt.params.temperature = r.get<double>();
    const auto rows = r.get<std::uint64_t>();
    const auto dim = r.get<std::uint64_t>();
    if (rows == 0 || dim == 0 || rows > (1ULL << 32) || dim > (1ULL << 16))
        throw std::runtime_error("checkpoint has implausible table dimensions");
    ckpt.params.item_embeddings.resize(Eigen::Index(rows), Eigen::Index(dim));
    ckpt.params.attention.resize(Eigen::Index(dim));
    r.reals(ckpt.params.item_embeddings.data(), rows * dim);
    r.reals(ckpt.params.attention.data(), dim);
    const auto kind = r.get<std::uint32_t>();
    if (kind > static_cast<std::uint32_t>(OptimizerKind::adam))
        throw std::runtime_error("checkpoint names an unknown optimizer");
    ckpt.optimizer = static_cast<OptimizerKind>(kind);
    const auto n = r.get<std::uint64_t>();
    for (std::uint64_t k = 0; k < n; ++k) {
        const auto row = static_cast<ItemId>(r.get<std::int64_t>());
        AdamRow<double> s;
        s.steps = r.get<std::uint64_t>();
        s.m.resize(Eigen::Index(dim));
        s.v.resize(Eigen::Index(dim));
        r.reals(s.m.data(), dim);
        r.reals(s.v.data(), dim);
        ckpt.optimizer_state.rows.emplace(row, std::move(s));
    }
    ckpt.params.validate();
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        write_checkpoint(out, ckpt);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    return read_checkpoint(in);
}

std::uint64_t fingerprint_of(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) h = (h ^ c) * 1099511628211ULL;
    return h;
}

}  // namespace matchkit
