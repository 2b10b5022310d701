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

// Versioned binary checkpoint container.
//
// Layout (all integers and reals little-endian):
//   "UMCK"                       4 bytes magic
//   u32 version                  currently 1
//   u64 config fingerprint
//   u64 seed, u64 global step, u64 pass counter
//   u32 month cursor, u32 epoch cursor, u32 finished flag
//   u32 aggregator
//   f64 temperature
//   u64 num_items, u64 dim
//   f64[num_items * dim]         embedding table, row-major
//   f64[dim]                     attention vector
//   u32 optimizer kind
//   u64 n                        Adam rows, then per row:
//     i64 row (-1 = attention), u64 steps, f64[dim] m, f64[dim] v

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "matchkit/model.hpp"
#include "matchkit/optimizer.hpp"

namespace matchkit {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Where a training run stands: months are indices into the configured month list.
struct TrainCursor {
    std::uint32_t month_pos = 0;  // next month to train
    std::uint32_t epoch = 0;      // next epoch inside that month
    std::uint64_t step = 0;       // optimizer steps taken
    std::uint64_t pass = 0;       // epochs completed over all months
    bool finished = false;

    friend bool operator==(const TrainCursor&, const TrainCursor&) = default;
};

struct Checkpoint {
    ModelParams<double> params;
    EncoderConfig encoder;
    OptimizerKind optimizer = OptimizerKind::adam;
    OptimizerState<double> optimizer_state;
    TrainCursor cursor;
    std::uint64_t seed = 0;
    std::uint64_t fingerprint = 0;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// 64-bit FNV-1a, used for configuration fingerprints.
std::uint64_t fingerprint_of(std::string_view text);

}  // namespace matchkit
