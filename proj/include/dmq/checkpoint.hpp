// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

// Model checkpoint files.
//
// A checkpoint is a JSON document:
//
//   {
//     "format": "dmq-checkpoint",
//     "format_version": 1,
//     "schedule": {"kind": "linear_beta", "T": 50, "alpha_bar": [...]},
//     "data_dim": 2, "time_embed_dim": 16, "cond_embed_dim": 16,
//     "layers": [{"name": "fc0", "in": 34, "out": 64, "activation": "silu",
//                 "weight": [... row-major, in x out ...], "bias": [...]}, ...]
//   }
//
// Floats are written in shortest round-trip decimal form, so load(save(m))
// reproduces every weight bit for bit.

#pragma once

#include <string>

#include "dmq/diffusion.hpp"
#include "vendor_json.hpp"

namespace dmq {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  DenoiserModel model;
  NoiseSchedule schedule;
};

nlohmann::ordered_json checkpoint_to_json(const DenoiserModel& model, const NoiseSchedule& sched);
Checkpoint checkpoint_from_json(const nlohmann::ordered_json& doc);

void save_checkpoint(const std::string& path, const DenoiserModel& model,
                     const NoiseSchedule& sched);
// Throws DataError for unreadable, malformed or newer-version files.
Checkpoint load_checkpoint(const std::string& path);

// Hash of the canonical serialization; identifies a model in provenance records.
std::uint64_t model_hash(const DenoiserModel& model, const NoiseSchedule& sched);

// Shared helpers for JSON artifacts.
std::string read_file(const std::string& path);
// Writes atomically via a temporary file in the same directory.
void write_file(const std::string& path, const std::string& contents);

}  // namespace dmq
