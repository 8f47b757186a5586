// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Two-stage transformer renderer. Per 3D sample point, a view transformer
// cross-attends over features gathered from the source views; a ray
// transformer then self-attends along each ray's samples. After B
// alternating blocks, a final rendering ray transformer — the only place the
// appearance code enters — updates its value tokens through f_z([V; z]),
// leaving every attention map untouched by construction. Mean pooling plus
// an MLP head and a sigmoid produce the ray color.
//
// The appearance code's isolation on the value path is the architectural
// invariant this module is built around: attention probabilities are a
// function of queries and keys only, and z reaches neither.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ava/applat/latent.hpp"
#include "ava/diffcore/attention.hpp"
#include "ava/diffcore/ops.hpp"
#include "ava/encoder/unet.hpp"
#include "ava/geomcam/bilinear.hpp"
#include "ava/geomcam/camera.hpp"
#include "ava/nvsnet/params.hpp"
#include "ava/util/image.hpp"

namespace ava::nvsnet {

template <class Real>
struct SourceViewT {
    encoder::FeatureMapT<Real> features;
    geomcam::Camera camera;
};

// Encoded source set reused across every ray batch of one render call.
template <class Real>
struct SourceSetT {
    std::vector<SourceViewT<Real>> views;
};

template <class Real>
SourceSetT<Real> encode_sources(const RendererParamsT<Real>& params,
                                const std::vector<util::Image<float>>& images,
                                const std::vector<geomcam::Camera>& cameras) {
    if (images.empty() || images.size() != cameras.size()) {
        throw util::InputError("encode_sources needs matching non-empty image/camera lists");
    }
    SourceSetT<Real> set;
    for (size_t i = 0; i < images.size(); ++i) {
        SourceViewT<Real> v{encoder::encode_image(params.enc, encoder::image_tensor<Real>(images[i])),
                            cameras[i]};
        set.views.push_back(std::move(v));
    }
    return set;
}

// One recorded attention map (detached from the graph).
template <class Real>
struct AttnRecordT {
    std::string label;
    diffcore::Shape shape;
    std::vector<Real> probs;
};

struct RenderOptions {
    bool stratified = false;
    uint64_t sample_seed = 0;
    bool record_attention = false;
};

namespace detail {

// Sinusoidal positional encoding of a 3-vector: for each frequency band k,
// sin(2^k * pi * c) and cos(2^k * pi * c) per component.
template <class Real>
void pe_append(const geomcam::Vec3& v, int freqs, std::vector<Real>& out) {
    for (int k = 0; k < freqs; ++k) {
        const double w = std::ldexp(3.14159265358979323846, k);  // pi * 2^k
        for (int c = 0; c < 3; ++c) {
            out.push_back(Real(std::sin(w * v[c])));
            out.push_back(Real(std::cos(w * v[c])));
        }
    }
}

}  // namespace detail

// Constant (non-learned) per-point inputs shared by all view blocks.
template <class Real>
struct PointContextT {
    diffcore::TensorT<Real> feats;      // [P, N, d] gathered view features
    diffcore::TensorT<Real> k_extra;    // [P, N, 2*pe + 3] encodings + source dir
    diffcore::TensorT<Real> q_extra;    // [P, 1, 2*pe] encodings for the query
    diffcore::TensorT<Real> logit_bias;  // [P, 1, N]: 0 valid, -1e9 invalid
    diffcore::TensorT<Real> any_valid;  // [P, 1, 1]: 1 if any view sees the point
    int64_t num_points = 0;
    int num_views = 0;
};

// Gather features and build attention-side constants for P sample points.
// `dirs[p]` is the unit direction of the ray owning point p.
template <class Real>
PointContextT<Real> build_point_context(const RendererParamsT<Real>& params,
                                        const std::vector<geomcam::Vec3>& points,
                                        const std::vector<geomcam::Vec3>& dirs,
                                        const SourceSetT<Real>& sources) {
    using diffcore::TensorT;
    if (sources.views.empty()) throw util::InputError("render needs at least one source view");
    if (points.size() != dirs.size()) {
        throw util::InputError("point/direction arrays must have equal length");
    }
    const int64_t P = int64_t(points.size());
    const int N = int(sources.views.size());
    const int pe = params.config.pe_dim();
    const double inv_far = 1.0 / params.config.far;

    PointContextT<Real> ctx;
    ctx.num_points = P;
    ctx.num_views = N;

    // Per-point positional encodings (query side).
    std::vector<Real> q_extra;
    q_extra.reserve(size_t(P) * size_t(2 * pe));
    std::vector<std::vector<Real>> pe_cache(static_cast<size_t>(P));
    for (int64_t p = 0; p < P; ++p) {
        std::vector<Real>& pe_row = pe_cache[size_t(p)];
        pe_row.reserve(size_t(2 * pe));
        detail::pe_append<Real>(points[size_t(p)] * inv_far, params.config.pe_frequencies, pe_row);
        detail::pe_append<Real>(dirs[size_t(p)], params.config.pe_frequencies, pe_row);
        q_extra.insert(q_extra.end(), pe_row.begin(), pe_row.end());
    }
    ctx.q_extra = TensorT<Real>::constant({int(P), 1, 2 * pe}, std::move(q_extra));

    // Per-view gathers plus key-side constants.
    std::vector<TensorT<Real>> view_feats;
    std::vector<std::vector<uint8_t>> view_valid(static_cast<size_t>(N));
    std::vector<Real> k_extra(size_t(P) * size_t(N) * size_t(2 * pe + 3));
    for (int v = 0; v < N; ++v) {
        const auto& view = sources.views[size_t(v)];
        std::vector<geomcam::GridQuery> queries(static_cast<size_t>(P));
        for (int64_t p = 0; p < P; ++p) {
            bool in_front = false;
            queries[size_t(p)] =
                encoder::grid_query_for_point(view.features, view.camera, points[size_t(p)],
                                              in_front);
            const geomcam::Vec3 rel = (points[size_t(p)] - view.camera.center()).normalized();
            Real* row = k_extra.data() + (size_t(p) * size_t(N) + size_t(v)) * size_t(2 * pe + 3);
            const auto& pe_row = pe_cache[size_t(p)];
            std::copy(pe_row.begin(), pe_row.end(), row);
            row[2 * pe + 0] = Real(rel.x());
            row[2 * pe + 1] = Real(rel.y());
            row[2 * pe + 2] = Real(rel.z());
        }
        view_feats.push_back(
            geomcam::bilinear_gather(view.features.grid, queries, view_valid[size_t(v)]));
    }
    ctx.k_extra = TensorT<Real>::constant({int(P), N, 2 * pe + 3}, std::move(k_extra));

    // [N, P, d] -> [P, N, d]
    ctx.feats = diffcore::transpose01(diffcore::stack_leading(view_feats));

    std::vector<Real> bias(size_t(P) * size_t(N), Real(0));
    std::vector<Real> any_valid(size_t(P), Real(0));
    for (int64_t p = 0; p < P; ++p) {
        for (int v = 0; v < N; ++v) {
            if (view_valid[size_t(v)][size_t(p)]) {
                any_valid[size_t(p)] = Real(1);
            } else {
                bias[size_t(p) * size_t(N) + size_t(v)] = Real(-1e9);
            }
        }
    }
    ctx.logit_bias = TensorT<Real>::constant({int(P), 1, N}, std::move(bias));
    ctx.any_valid = TensorT<Real>::constant({int(P), 1, 1}, std::move(any_valid));
    return ctx;
}

template <class Real>
struct SublayerOutT {
    diffcore::TensorT<Real> tokens;
    diffcore::TensorT<Real> probs;
};

// Pre-norm view sublayer: tokens [P, 1, d] cross-attend over the point's
// per-view features; the masked attention output is zeroed for points no
// view can see, then added residually; a feedforward completes the block.
template <class Real>
SublayerOutT<Real> view_sublayer(const TransformerBlockT<Real>& blk,
                                 const diffcore::TensorT<Real>& tokens,
                                 const PointContextT<Real>& ctx) {
    using namespace diffcore;
    auto qn = layer_norm(tokens, blk.ln_attn_g, blk.ln_attn_b);
    auto q_in = concat_last<Real>({qn, ctx.q_extra});
    auto k_in = concat_last<Real>({ctx.feats, ctx.k_extra});
    auto probs = attention_probs(q_in, k_in, blk.attn, std::optional<TensorT<Real>>(ctx.logit_bias));
    auto attn_out = mul(attention_apply(probs, ctx.feats, blk.attn), ctx.any_valid);
    auto t = add(tokens, attn_out);
    auto f = mlp_forward(layer_norm(t, blk.ln_ffn_g, blk.ln_ffn_b), blk.ffn);
    return {add(t, f), std::move(probs)};
}

// Pre-norm self-attention sublayer along each ray: tokens [R, M, d].
// The optional value hook is how the appearance code enters the rendering
// block; it cannot touch `probs`, which depend only on queries and keys.
template <class Real>
SublayerOutT<Real> ray_sublayer(const TransformerBlockT<Real>& blk,
                                const diffcore::TensorT<Real>& tokens,
                                const diffcore::ValueHookT<Real>& value_hook = nullptr) {
    using namespace diffcore;
    auto tn = layer_norm(tokens, blk.ln_attn_g, blk.ln_attn_b);
    auto probs = attention_probs(tn, tn, blk.attn);
    auto attn_out = attention_apply(probs, tn, blk.attn, value_hook);
    auto t = add(tokens, attn_out);
    auto f = mlp_forward(layer_norm(t, blk.ln_ffn_g, blk.ln_ffn_b), blk.ffn);
    return {add(t, f), std::move(probs)};
}

// Value hook realizing the appearance update V' = f_z([V; z]).
template <class Real>
diffcore::ValueHookT<Real> appearance_value_hook(const RendererParamsT<Real>& params,
                                                 const diffcore::TensorT<Real>& z) {
    diffcore::TensorT<Real> fz_w = params.fz_w;
    diffcore::TensorT<Real> fz_b = params.fz_b;
    return [fz_w, fz_b, z](const diffcore::TensorT<Real>& v) {
        using namespace diffcore;
        const int R = v.dim(0), M = v.dim(1);
        const int dz = z.dim(-1);
        auto zb = broadcast_to(reshape(z, {1, 1, dz}), {R, M, dz});
        return linear(concat_last<Real>({v, zb}), fz_w, fz_b);
    };
}

// Everything computed before the appearance code is involved: the token
// trunk plus the rendering block's attention probabilities. Rendering with
// two different codes reuses one context, sharing all geometry compute.
template <class Real>
struct RayBatchContextT {
    diffcore::TensorT<Real> tokens;     // [R, M, d] after the trunk
    diffcore::TensorT<Real> normed;     // rendering block's LN'd tokens
    diffcore::TensorT<Real> probs;      // rendering block's attention
    std::vector<AttnRecordT<Real>> trace;  // trunk + rendering block maps
    int num_rays = 0;
    int num_samples = 0;
};

template <class Real>
void record_attention(std::vector<AttnRecordT<Real>>& trace, const std::string& label,
                      const diffcore::TensorT<Real>& probs, bool enabled) {
    if (!enabled) return;
    AttnRecordT<Real> rec;
    rec.label = label;
    rec.shape = probs.shape();
    rec.probs.assign(probs.data().begin(), probs.data().end());
    trace.push_back(std::move(rec));
}

template <class Real>
RayBatchContextT<Real> build_ray_context(const RendererParamsT<Real>& params,
                                         const std::vector<geomcam::Ray>& rays,
                                         const SourceSetT<Real>& sources,
                                         const RenderOptions& opts = {}) {
    using namespace diffcore;
    if (rays.empty()) throw util::InputError("render needs at least one ray");
    const int R = int(rays.size());
    const int M = params.config.samples_per_ray;
    const int d = params.config.token_dim;

    std::vector<geomcam::Vec3> points;
    std::vector<geomcam::Vec3> dirs;
    points.reserve(size_t(R) * size_t(M));
    dirs.reserve(size_t(R) * size_t(M));
    for (int r = 0; r < R; ++r) {
        const auto samples = geomcam::sample_along_ray(
            rays[size_t(r)], M, opts.stratified,
            util::derive_seed(opts.sample_seed, "ray-samples", uint64_t(r)));
        for (const auto& x : samples.points) {
            points.push_back(x);
            dirs.push_back(samples.view_dir);
        }
    }
    auto ctx = build_point_context(params, points, dirs, sources);
    const int64_t P = ctx.num_points;

    RayBatchContextT<Real> out;
    out.num_rays = R;
    out.num_samples = M;

    auto tokens = broadcast_to(reshape(params.seed_token, {1, 1, d}), {int(P), 1, d});
    for (size_t b = 0; b < params.view_blocks.size(); ++b) {
        auto view_out = view_sublayer(params.view_blocks[b], tokens, ctx);
        record_attention(out.trace, "block" + std::to_string(b) + ".view", view_out.probs,
                         opts.record_attention);
        auto rays3 = reshape(view_out.tokens, {R, M, d});
        auto ray_out = ray_sublayer(params.ray_blocks[b], rays3);
        record_attention(out.trace, "block" + std::to_string(b) + ".ray", ray_out.probs,
                         opts.record_attention);
        tokens = reshape(ray_out.tokens, {int(P), 1, d});
    }

    out.tokens = reshape(tokens, {R, M, d});
    out.normed = layer_norm(out.tokens, params.render_block.ln_attn_g,
                            params.render_block.ln_attn_b);
    out.probs = attention_probs(out.normed, out.normed, params.render_block.attn);
    record_attention(out.trace, "render.ray", out.probs, opts.record_attention);
    return out;
}

// Appearance-conditioned tail: rendering-block value path, pooling, head.
template <class Real>
diffcore::TensorT<Real> render_with_code(const RendererParamsT<Real>& params,
                                         const RayBatchContextT<Real>& ctx,
                                         const applat::AppearanceCodeT<Real>& code) {
    using namespace diffcore;
    if (code.z.dim(-1) != params.config.latent_dim) {
        throw util::InputError("appearance code width does not match the model");
    }
    auto hook = appearance_value_hook(params, code.z);
    auto attn_out = attention_apply(ctx.probs, ctx.normed, params.render_block.attn, hook);
    auto t = add(ctx.tokens, attn_out);
    auto f = mlp_forward(layer_norm(t, params.render_block.ln_ffn_g, params.render_block.ln_ffn_b),
                         params.render_block.ffn);
    t = add(t, f);
    auto pooled = mean_axis1(t);  // [R, d]
    return sigmoid(mlp_forward(pooled, params.rgb_head));
}

template <class Real>
struct RenderResultT {
    diffcore::TensorT<Real> rgb;  // [R, 3] in [0, 1]
    std::vector<AttnRecordT<Real>> trace;
};

template <class Real>
RenderResultT<Real> render_rays(const RendererParamsT<Real>& params,
                                const std::vector<geomcam::Ray>& rays,
                                const SourceSetT<Real>& sources,
                                const applat::AppearanceCodeT<Real>& code,
                                const RenderOptions& opts = {}) {
    auto ctx = build_ray_context(params, rays, sources, opts);
    RenderResultT<Real> out;
    out.rgb = render_with_code(params, ctx, code);
    out.trace = std::move(ctx.trace);
    return out;
}

// Single-ray convenience: rgb 3-vector plus the full attention trace.
template <class Real>
RenderResultT<Real> render_ray(const RendererParamsT<Real>& params, const geomcam::Ray& ray,
                               const SourceSetT<Real>& sources,
                               const applat::AppearanceCodeT<Real>& code,
                               const RenderOptions& opts = {}) {
    return render_rays(params, {ray}, sources, code, opts);
}

// Full-frame render, tiled into ray batches. Rays are mutually independent,
// so the output is identical for every batch size.
template <class Real>
util::Image<float> render_image(const RendererParamsT<Real>& params,
                                const geomcam::Camera& target, const SourceSetT<Real>& sources,
                                const applat::AppearanceCodeT<Real>& code, int batch_size = 256) {
    if (batch_size < 1) throw util::InputError("render_image needs batch_size >= 1");
    const int W = target.width(), H = target.height();
    util::Image<float> img(W, H);
    std::vector<geomcam::Ray> batch;
    std::vector<int64_t> pixel_of;
    batch.reserve(size_t(batch_size));
    pixel_of.reserve(size_t(batch_size));

    auto flush = [&]() {
        if (batch.empty()) return;
        auto result = render_rays(params, batch, sources, code);
        const auto rgb = result.rgb.data();
        for (size_t i = 0; i < batch.size(); ++i) {
            for (int c = 0; c < 3; ++c) {
                img.rgb[size_t(pixel_of[i]) * 3 + size_t(c)] = float(rgb[i * 3 + size_t(c)]);
            }
        }
        batch.clear();
        pixel_of.clear();
    };

    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            batch.push_back(target.ray_for_pixel(x + 0.5, y + 0.5, params.config.near,
                                                 params.config.far));
            pixel_of.push_back(int64_t(y) * W + x);
            if (int(batch.size()) == batch_size) flush();
        }
    }
    flush();
    return img;
}

// ---------------------------------------------------------------------------
// Single-point wrappers matching the aggregation contracts, used by tests.
// ---------------------------------------------------------------------------

template <class Real>
struct ViewAggregateT {
    diffcore::TensorT<Real> token;  // [1, 1, d]; zero when no view sees the point
    bool any_valid = false;
    diffcore::TensorT<Real> attn;   // [1, heads, 1, N]
};

// Masked cross-view attention output for one 3D point (no residual/FFN wrap).
template <class Real>
ViewAggregateT<Real> view_aggregate(const RendererParamsT<Real>& params, int block,
                                    const geomcam::Vec3& x, const geomcam::Vec3& theta,
                                    const SourceSetT<Real>& sources,
                                    const std::optional<diffcore::TensorT<Real>>& prev_token = {}) {
    using namespace diffcore;
    const int d = params.config.token_dim;
    auto ctx = build_point_context(params, {x}, {theta}, sources);
    TensorT<Real> tokens = prev_token ? reshape(*prev_token, {1, 1, d})
                                      : reshape(params.seed_token, {1, 1, d});
    const auto& blk = params.view_blocks.at(size_t(block));
    auto qn = layer_norm(tokens, blk.ln_attn_g, blk.ln_attn_b);
    auto q_in = concat_last<Real>({qn, ctx.q_extra});
    auto k_in = concat_last<Real>({ctx.feats, ctx.k_extra});
    auto probs = attention_probs(q_in, k_in, blk.attn,
                                 std::optional<TensorT<Real>>(ctx.logit_bias));
    ViewAggregateT<Real> out;
    out.token = mul(attention_apply(probs, ctx.feats, blk.attn), ctx.any_valid);
    out.any_valid = ctx.any_valid.data()[0] != Real(0);
    out.attn = reshape(probs, {1, blk.attn.heads, 1, ctx.num_views});
    return out;
}

// One ray-transformer block over a token sequence [R, M, d].
template <class Real>
SublayerOutT<Real> ray_aggregate(const RendererParamsT<Real>& params, int block,
                                 const diffcore::TensorT<Real>& tokens) {
    return ray_sublayer(params.ray_blocks.at(size_t(block)), tokens);
}

}  // namespace ava::nvsnet
