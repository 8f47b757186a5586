// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// All learnable state of the renderer plus the model hyperparameters needed
// to rebuild it. Parameters are enumerated by visit_params with stable names
// used by the optimizer and the checkpoint format.

#pragma once

#include <string>
#include <vector>

#include "ava/applat/latent.hpp"
#include "ava/diffcore/attention.hpp"
#include "ava/encoder/unet.hpp"

namespace ava::nvsnet {

struct ModelConfig {
    int token_dim = 32;        // width of view/ray tokens and encoder features
    int heads = 4;
    int blocks = 2;            // alternating view/ray transformer blocks
    int samples_per_ray = 32;
    int pe_frequencies = 6;    // sinusoidal bands on position and direction
    int ffn_multiplier = 2;    // hidden width of transformer feedforwards
    int latent_dim = 136;
    int latent_hidden1 = 16;
    int latent_hidden2 = 68;
    applat::LatentMode latent_mode = applat::LatentMode::kStructured;
    std::vector<std::string> conditions = {"day", "evening", "rain", "night"};
    double near = 0.5;
    double far = 30.0;

    int pe_dim() const { return 2 * 3 * pe_frequencies; }  // per 3-vector
};

// One pre-norm transformer sublayer pair: attention + feedforward.
template <class Real>
struct TransformerBlockT {
    diffcore::AttentionWeightsT<Real> attn;
    diffcore::MlpWeightsT<Real> ffn;           // d -> mult*d -> d
    diffcore::TensorT<Real> ln_attn_g, ln_attn_b;  // query-stream norm before attention
    diffcore::TensorT<Real> ln_ffn_g, ln_ffn_b;    // norm before feedforward
};

template <class Real>
struct RendererParamsT {
    ModelConfig config;
    encoder::EncoderParamsT<Real> enc;
    diffcore::TensorT<Real> seed_token;              // [d], query seed for block 0
    std::vector<TransformerBlockT<Real>> view_blocks;  // size B
    std::vector<TransformerBlockT<Real>> ray_blocks;   // size B
    TransformerBlockT<Real> render_block;            // final ray transformer (takes z)
    diffcore::TensorT<Real> fz_w, fz_b;              // [d + d_z, d], [d]
    diffcore::MlpWeightsT<Real> rgb_head;            // d -> d -> 3
    applat::LatentBankT<Real> latent;
};

using RendererParams = RendererParamsT<float>;

namespace detail {

template <class Real>
TransformerBlockT<Real> make_block(int dq, int dk, int dv, int d, int heads, int ffn_mult,
                                   util::Rng& rng) {
    TransformerBlockT<Real> blk;
    blk.attn = diffcore::make_attention_weights<Real>(dq, dk, dv, d, d, heads, rng);
    blk.ffn = diffcore::make_mlp_weights<Real>({d, ffn_mult * d, d}, rng);
    blk.ln_attn_g = diffcore::TensorT<Real>::param({d}, std::vector<Real>(size_t(d), Real(1)));
    blk.ln_attn_b = diffcore::TensorT<Real>::param({d}, std::vector<Real>(size_t(d), Real(0)));
    blk.ln_ffn_g = diffcore::TensorT<Real>::param({d}, std::vector<Real>(size_t(d), Real(1)));
    blk.ln_ffn_b = diffcore::TensorT<Real>::param({d}, std::vector<Real>(size_t(d), Real(0)));
    return blk;
}

}  // namespace detail

template <class Real>
RendererParamsT<Real> make_renderer_params(const ModelConfig& cfg, uint64_t seed) {
    util::Rng rng(seed);
    const int d = cfg.token_dim;
    const int pe = cfg.pe_dim();

    RendererParamsT<Real> p;
    p.config = cfg;
    p.enc = encoder::make_encoder_params<Real>(d, rng);
    {
        std::vector<Real> seed_tok(static_cast<size_t>(d));
        for (auto& v : seed_tok) v = Real(rng.next_gaussian()) * Real(0.1);
        p.seed_token = diffcore::TensorT<Real>::param({d}, std::move(seed_tok));
    }
    for (int b = 0; b < cfg.blocks; ++b) {
        // View attention: query = [token | PE(x) | PE(theta)], keys carry the
        // gathered feature plus the same encodings plus the raw source-view
        // direction; values are the gathered features alone.
        p.view_blocks.push_back(detail::make_block<Real>(d + 2 * pe, d + 2 * pe + 3, d, d,
                                                         cfg.heads, cfg.ffn_multiplier, rng));
        p.ray_blocks.push_back(
            detail::make_block<Real>(d, d, d, d, cfg.heads, cfg.ffn_multiplier, rng));
    }
    p.render_block = detail::make_block<Real>(d, d, d, d, cfg.heads, cfg.ffn_multiplier, rng);

    // f_z starts as the identity on the value block and zero on the latent
    // block, so conditioning has no effect until training moves it.
    {
        const int dz = cfg.latent_dim;
        std::vector<Real> w(size_t(d + dz) * size_t(d), Real(0));
        for (int i = 0; i < d; ++i) w[size_t(i) * size_t(d) + size_t(i)] = Real(1);
        p.fz_w = diffcore::TensorT<Real>::param({d + dz, d}, std::move(w));
        p.fz_b = diffcore::TensorT<Real>::param({d}, std::vector<Real>(size_t(d), Real(0)));
    }
    p.rgb_head = diffcore::make_mlp_weights<Real>({d, d, 3}, rng);
    p.latent = applat::make_latent_bank<Real>(cfg.latent_mode, cfg.latent_dim,
                                              cfg.latent_hidden1, cfg.latent_hidden2,
                                              cfg.conditions, rng);
    return p;
}

// Stable-name enumeration of every learnable tensor. Both latent modes'
// parameters are visited regardless of the active mode so checkpoints and
// optimizer state stay mode-independent.
template <class Real, class Fn>
void visit_params(RendererParamsT<Real>& p, Fn&& fn) {
    fn("encoder.w_in", p.enc.w_in);
    fn("encoder.b_in", p.enc.b_in);
    fn("encoder.w_down1", p.enc.w_down1);
    fn("encoder.b_down1", p.enc.b_down1);
    fn("encoder.w_down2", p.enc.w_down2);
    fn("encoder.b_down2", p.enc.b_down2);
    fn("encoder.w_up1", p.enc.w_up1);
    fn("encoder.b_up1", p.enc.b_up1);
    fn("encoder.w_up2", p.enc.w_up2);
    fn("encoder.b_up2", p.enc.b_up2);
    fn("encoder.w_head", p.enc.w_head);
    fn("encoder.b_head", p.enc.b_head);
    fn("seed_token", p.seed_token);

    auto visit_block = [&fn](const std::string& prefix, TransformerBlockT<Real>& blk) {
        fn(prefix + ".attn.wq", blk.attn.wq);
        fn(prefix + ".attn.bq", blk.attn.bq);
        fn(prefix + ".attn.wk", blk.attn.wk);
        fn(prefix + ".attn.bk", blk.attn.bk);
        fn(prefix + ".attn.wv", blk.attn.wv);
        fn(prefix + ".attn.bv", blk.attn.bv);
        fn(prefix + ".attn.wo", blk.attn.wo);
        fn(prefix + ".attn.bo", blk.attn.bo);
        for (size_t i = 0; i < blk.ffn.ws.size(); ++i) {
            fn(prefix + ".ffn.w" + std::to_string(i), blk.ffn.ws[i]);
            fn(prefix + ".ffn.b" + std::to_string(i), blk.ffn.bs[i]);
        }
        fn(prefix + ".ln_attn.g", blk.ln_attn_g);
        fn(prefix + ".ln_attn.b", blk.ln_attn_b);
        fn(prefix + ".ln_ffn.g", blk.ln_ffn_g);
        fn(prefix + ".ln_ffn.b", blk.ln_ffn_b);
    };
    for (size_t b = 0; b < p.view_blocks.size(); ++b) {
        visit_block("block" + std::to_string(b) + ".view", p.view_blocks[b]);
        visit_block("block" + std::to_string(b) + ".ray", p.ray_blocks[b]);
    }
    visit_block("render", p.render_block);

    fn("fz.w", p.fz_w);
    fn("fz.b", p.fz_b);
    for (size_t i = 0; i < p.rgb_head.ws.size(); ++i) {
        fn("head.w" + std::to_string(i), p.rgb_head.ws[i]);
        fn("head.b" + std::to_string(i), p.rgb_head.bs[i]);
    }
    for (size_t i = 0; i < p.latent.generator.ws.size(); ++i) {
        fn("latent.structured.w" + std::to_string(i), p.latent.generator.ws[i]);
        fn("latent.structured.b" + std::to_string(i), p.latent.generator.bs[i]);
    }
    for (const auto& name : p.latent.conditions) {
        fn("latent.free." + name, p.latent.free_codes.at(name));
    }
}

template <class Real>
int64_t count_params(RendererParamsT<Real>& p) {
    int64_t total = 0;
    visit_params(p, [&total](const std::string&, diffcore::TensorT<Real>& t) {
        total += t.size();
    });
    return total;
}

}  // namespace ava::nvsnet
