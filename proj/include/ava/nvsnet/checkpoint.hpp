// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: little-endian binary, header magic "AVNV" + format
// version (u32) + record count (u32); each record is name length (u16),
// UTF-8 name, rank (u8), extents (u32 each), then the raw f32 payload.
// Renderer serialization stores every learnable tensor under its
// visit_params name, the condition registry (names, coordinates, mode), and
// the integer model hyperparameters needed to rebuild the containers.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "ava/nvsnet/params.hpp"

namespace ava::nvsnet {

struct CheckpointRecord {
    std::string name;
    std::vector<uint32_t> extents;
    std::vector<float> data;
};

void write_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> read_checkpoint(const std::string& path);

// All records describing `params`: weights, latent registry, model shape.
std::vector<CheckpointRecord> renderer_records(RendererParams& params);

void save_renderer(const std::string& path, RendererParams& params,
                   const std::vector<CheckpointRecord>& extra = {});

struct LoadedCheckpoint {
    RendererParams params;
    // Records not consumed by the renderer itself (e.g. optimizer state).
    std::map<std::string, CheckpointRecord> extra;
};

LoadedCheckpoint load_renderer(const std::string& path);

}  // namespace ava::nvsnet
