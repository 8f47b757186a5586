// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ava/metrics/metrics.hpp"
#include "ava/util/errors.hpp"

namespace ava::metrics {

namespace {

struct Gray {
    int width = 0;
    int height = 0;
    std::vector<float> v;

    float at(int x, int y) const {
        x = std::clamp(x, 0, width - 1);
        y = std::clamp(y, 0, height - 1);
        return v[size_t(y) * size_t(width) + size_t(x)];
    }
};

Gray to_gray(const util::ImageF& img) {
    Gray g;
    g.width = img.width;
    g.height = img.height;
    g.v.resize(size_t(img.width) * size_t(img.height));
    for (size_t i = 0; i < g.v.size(); ++i) {
        g.v[i] = 0.299f * img.rgb[3 * i] + 0.587f * img.rgb[3 * i + 1] +
                 0.114f * img.rgb[3 * i + 2];
    }
    return g;
}

Gray downsample2x(const Gray& g) {
    Gray out;
    out.width = std::max(1, g.width / 2);
    out.height = std::max(1, g.height / 2);
    out.v.resize(size_t(out.width) * size_t(out.height));
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            const float s = g.at(2 * x, 2 * y) + g.at(2 * x + 1, 2 * y) +
                            g.at(2 * x, 2 * y + 1) + g.at(2 * x + 1, 2 * y + 1);
            out.v[size_t(y) * size_t(out.width) + size_t(x)] = 0.25f * s;
        }
    }
    return out;
}

// Sum of squared differences between the patch of `prev` centred on p and
// the patch of `next` centred on p + d; borders clamp.
double patch_cost(const Gray& prev, const Gray& next, int px, int py, int dx, int dy, int half) {
    double cost = 0.0;
    for (int oy = -half; oy <= half; ++oy) {
        for (int ox = -half; ox <= half; ++ox) {
            const double diff =
                double(prev.at(px + ox, py + oy)) - double(next.at(px + dx + ox, py + dy + oy));
            cost += diff * diff;
        }
    }
    return cost;
}

// Offset of the parabola vertex through (-1, c0), (0, c1), (1, c2); zero
// when the three costs are degenerate, clamped to half a pixel.
double parabolic_offset(double c0, double c1, double c2) {
    const double denom = c0 - 2.0 * c1 + c2;
    if (denom <= 1e-12) return 0.0;
    const double delta = 0.5 * (c0 - c2) / denom;
    return std::clamp(delta, -0.5, 0.5);
}

}  // namespace

FlowField optical_flow(const util::ImageF& prev, const util::ImageF& next,
                       const FlowOptions& opts) {
    if (!prev.same_shape(next)) {
        throw util::InputError("optical_flow requires images of identical shape");
    }
    if (opts.levels < 1 || opts.patch < 1 || opts.patch % 2 == 0 || opts.search < 1) {
        throw util::InputError("optical_flow options need levels >= 1, odd patch, search >= 1");
    }

    std::vector<Gray> pyr_prev{to_gray(prev)};
    std::vector<Gray> pyr_next{to_gray(next)};
    for (int l = 1; l < opts.levels; ++l) {
        if (pyr_prev.back().width < 2 * opts.patch || pyr_prev.back().height < 2 * opts.patch) {
            break;  // stop coarsening once patches no longer fit
        }
        pyr_prev.push_back(downsample2x(pyr_prev.back()));
        pyr_next.push_back(downsample2x(pyr_next.back()));
    }

    const int half = opts.patch / 2;
    FlowField flow;
    flow.width = pyr_prev.back().width;
    flow.height = pyr_prev.back().height;
    flow.uv.assign(2 * size_t(flow.width) * size_t(flow.height), 0.0f);

    for (int level = int(pyr_prev.size()) - 1; level >= 0; --level) {
        const Gray& p = pyr_prev[size_t(level)];
        const Gray& n = pyr_next[size_t(level)];

        FlowField refined;
        refined.width = p.width;
        refined.height = p.height;
        refined.uv.assign(2 * size_t(p.width) * size_t(p.height), 0.0f);

        for (int y = 0; y < p.height; ++y) {
            for (int x = 0; x < p.width; ++x) {
                // Seed with the coarser level's estimate, doubled.
                float seed_u = 0.0f, seed_v = 0.0f;
                if (level + 1 < int(pyr_prev.size()) || flow.width != p.width) {
                    const int cx = std::min(x / 2, flow.width - 1);
                    const int cy = std::min(y / 2, flow.height - 1);
                    seed_u = 2.0f * flow.u(cx, cy);
                    seed_v = 2.0f * flow.v(cx, cy);
                }
                const int base_dx = int(std::lround(seed_u));
                const int base_dy = int(std::lround(seed_v));

                double best = std::numeric_limits<double>::infinity();
                int best_dx = base_dx, best_dy = base_dy;
                for (int dy = base_dy - opts.search; dy <= base_dy + opts.search; ++dy) {
                    for (int dx = base_dx - opts.search; dx <= base_dx + opts.search; ++dx) {
                        const double c = patch_cost(p, n, x, y, dx, dy, half);
                        if (c < best) {
                            best = c;
                            best_dx = dx;
                            best_dy = dy;
                        }
                    }
                }

                double sub_x = 0.0, sub_y = 0.0;
                if (best > 0.0) {
                    sub_x = parabolic_offset(patch_cost(p, n, x, y, best_dx - 1, best_dy, half),
                                             best,
                                             patch_cost(p, n, x, y, best_dx + 1, best_dy, half));
                    sub_y = parabolic_offset(patch_cost(p, n, x, y, best_dx, best_dy - 1, half),
                                             best,
                                             patch_cost(p, n, x, y, best_dx, best_dy + 1, half));
                }

                const size_t idx = 2 * (size_t(y) * size_t(p.width) + size_t(x));
                refined.uv[idx] = float(best_dx + sub_x);
                refined.uv[idx + 1] = float(best_dy + sub_y);
            }
        }
        flow = std::move(refined);
    }
    return flow;
}

}  // namespace ava::metrics
