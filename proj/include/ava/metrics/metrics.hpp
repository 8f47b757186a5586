// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Image similarity and temporal-consistency measures. SSIM uses the
// canonical 11x11 Gaussian window (sigma 1.5, K1 0.01, K2 0.03) on a
// 0.299/0.587/0.114 grayscale reduction. Optical flow is coarse-to-fine
// block matching with parabolic sub-pixel refinement. The tSS consistency
// number is an SSIM-based proxy and is reported under that name only.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ava/util/image.hpp"

namespace ava::metrics {

// 10 * log10(1 / MSE) in dB over all channels; identical images cap at 100.
double psnr(const util::ImageF& a, const util::ImageF& b);

// Mean SSIM over all fully-interior 11x11 windows; needs min dim >= 11.
double ssim(const util::ImageF& a, const util::ImageF& b);

struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<float> uv;  // interleaved (u, v) per pixel, row-major

    float u(int x, int y) const { return uv[2 * (size_t(y) * size_t(width) + size_t(x))]; }
    float v(int x, int y) const { return uv[2 * (size_t(y) * size_t(width) + size_t(x)) + 1]; }
};

struct FlowOptions {
    int levels = 3;
    int patch = 7;   // odd patch edge
    int search = 3;  // +/- pixels searched per level
};

// Displacement d per pixel of `prev` such that next(p + d) ~ prev(p).
FlowField optical_flow(const util::ImageF& prev, const util::ImageF& next,
                       const FlowOptions& opts = {});

struct ConsistencyResult {
    double tof = 0.0;  // mean abs flow difference, pixels
    double tss = 0.0;  // mean abs SSIM difference between consecutive pairs
};

// Temporal consistency of a rendered sequence against its reference: for
// each consecutive pair, compare the rendered pair's flow to the reference
// pair's flow (tOF) and the rendered pair's SSIM to the reference pair's
// SSIM (tSS); both averaged over pairs.
ConsistencyResult consistency(const std::vector<util::ImageF>& rendered,
                              const std::vector<util::ImageF>& reference,
                              const FlowOptions& opts = {});

// One evaluation cell: render sources from `source` condition with the
// target condition's code, scored against target-condition ground truth.
struct PairMetrics {
    std::string source;
    std::string target;
    double psnr = 0.0;
    double ssim = 0.0;
    std::optional<double> tof;
    std::optional<double> tss;
};

struct MetricsReport {
    std::vector<PairMetrics> pairs;
};

std::string report_csv(const MetricsReport& report);
std::string report_markdown(const MetricsReport& report);

}  // namespace ava::metrics
