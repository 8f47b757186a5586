// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// On-disk dataset layout:
//   <root>/manifest.json                  scenes, splits, conditions, size
//   <root>/<scene_id>/cameras.json        per-view intrinsics + poses
//   <root>/<scene_id>/<condition>/<view_idx>.png
// The manifest records each scene's seed so the geometric spec can be
// regenerated deterministically on read.

#pragma once

#include <string>
#include <vector>

#include "ava/scenegen/scenegen.hpp"

namespace ava::scenegen {

void write_dataset(const std::vector<SceneBundle>& bundles, const std::string& root);

// Reads every scene listed in the manifest; malformed or missing pieces
// raise a format error naming the offending path/field.
std::vector<SceneBundle> read_dataset(const std::string& root);

}  // namespace ava::scenegen
