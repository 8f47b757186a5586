// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-head attention decomposed into two phases: computing attention
// probabilities (queries/keys only) and applying them to values. A caller
// may modify the projected value tokens through a hook before they are
// aggregated; because the hook runs strictly on the value path, the
// attention probabilities are byte-identical with and without it.

#pragma once

#include <functional>
#include <optional>

#include "ava/diffcore/ops.hpp"
#include "ava/diffcore/tensor.hpp"

namespace ava::diffcore {

template <class Real>
struct AttentionWeightsT {
    TensorT<Real> wq, bq;  // [dq, d], [d]
    TensorT<Real> wk, bk;  // [dk, d], [d]
    TensorT<Real> wv, bv;  // [dv, d], [d]
    TensorT<Real> wo, bo;  // [d, dout], [dout]
    int heads = 1;

    int inner_dim() const { return wq.dim(1); }
    int out_dim() const { return wo.dim(1); }
};

using AttentionWeights = AttentionWeightsT<float>;

template <class Real>
struct AttentionOutputT {
    TensorT<Real> tokens;  // [B, nq, dout]
    TensorT<Real> attn;    // [B, heads, nq, nk], rows sum to 1
};

template <class Real>
using ValueHookT = std::function<TensorT<Real>(const TensorT<Real>&)>;

// Affine map along the last axis: x [*, din] -> [*, dout].
template <class Real>
TensorT<Real> linear(const TensorT<Real>& x, const TensorT<Real>& w, const TensorT<Real>& b) {
    return add(matmul(x, w), b);
}

template <class Real>
AttentionWeightsT<Real> make_attention_weights(int dq, int dk, int dv, int d, int dout,
                                               int heads, util::Rng& rng) {
    if (d % heads != 0) throw util::InputError("attention inner dim not divisible by heads");
    auto init = [&rng](int fan_in, int fan_out) {
        std::vector<Real> w(size_t(fan_in) * size_t(fan_out));
        const Real s = Real(std::sqrt(1.0 / double(fan_in)));
        for (auto& v : w) v = Real(rng.next_gaussian()) * s;
        return TensorT<Real>::param({fan_in, fan_out}, std::move(w));
    };
    AttentionWeightsT<Real> aw;
    aw.wq = init(dq, d);
    aw.bq = TensorT<Real>::param({d}, std::vector<Real>(size_t(d), Real(0)));
    aw.wk = init(dk, d);
    aw.bk = TensorT<Real>::param({d}, std::vector<Real>(size_t(d), Real(0)));
    aw.wv = init(dv, d);
    aw.bv = TensorT<Real>::param({d}, std::vector<Real>(size_t(d), Real(0)));
    aw.wo = init(d, dout);
    aw.bo = TensorT<Real>::param({dout}, std::vector<Real>(size_t(dout), Real(0)));
    aw.heads = heads;
    return aw;
}

// Replicate a non-differentiated additive logit bias [B, nq, nk] across heads
// into [B*h, nq, nk].
template <class Real>
TensorT<Real> expand_logit_bias(const TensorT<Real>& bias, int heads) {
    if (bias.rank() != 3) throw util::InputError("logit bias must be [B, nq, nk]");
    const int64_t B = bias.dim(0), nq = bias.dim(1), nk = bias.dim(2);
    std::vector<Real> out(static_cast<size_t>(B * heads * nq * nk));
    const Real* src = bias.data().data();
    for (int64_t b = 0; b < B; ++b) {
        for (int h = 0; h < heads; ++h) {
            std::copy(src + b * nq * nk, src + (b + 1) * nq * nk,
                      out.begin() + ((b * heads + h) * nq * nk));
        }
    }
    return TensorT<Real>::constant({int(B * heads), int(nq), int(nk)}, std::move(out));
}

// Softmax(QK^T / sqrt(dh) + bias): value tokens play no part here.
// q_in [B, nq, dq], k_in [B, nk, dk] -> probs [B*h, nq, nk].
template <class Real>
TensorT<Real> attention_probs(const TensorT<Real>& q_in, const TensorT<Real>& k_in,
                              const AttentionWeightsT<Real>& w,
                              const std::optional<TensorT<Real>>& logit_bias = {}) {
    const int h = w.heads;
    auto q = split_heads(linear(q_in, w.wq, w.bq), h);
    auto k = split_heads(linear(k_in, w.wk, w.bk), h);
    const int dh = q.dim(-1);
    auto logits = scale(matmul_nt(q, k), Real(1) / Real(std::sqrt(double(dh))));
    if (logit_bias) logits = add(logits, expand_logit_bias(*logit_bias, h));
    return softmax_last(logits);
}

// Project values (optionally transformed by `hook`), weight them by `probs`,
// and apply the output projection. probs [B*h, nq, nk], v_in [B, nk, dv].
template <class Real>
TensorT<Real> attention_apply(const TensorT<Real>& probs, const TensorT<Real>& v_in,
                              const AttentionWeightsT<Real>& w,
                              const ValueHookT<Real>& value_hook = nullptr) {
    auto v = linear(v_in, w.wv, w.bv);
    if (value_hook) {
        auto v_mod = value_hook(v);
        if (v_mod.shape() != v.shape()) {
            throw util::InputError("value hook must preserve the value token shape");
        }
        v = std::move(v_mod);
    }
    auto vh = split_heads(v, w.heads);
    auto mixed = merge_heads(matmul(probs, vh), w.heads);
    return linear(mixed, w.wo, w.bo);
}

// Full attention pass; returns output tokens plus the attention map
// reshaped to [B, heads, nq, nk].
template <class Real>
AttentionOutputT<Real> multi_head_attention(const TensorT<Real>& q_in, const TensorT<Real>& k_in,
                                            const TensorT<Real>& v_in,
                                            const AttentionWeightsT<Real>& w,
                                            const ValueHookT<Real>& value_hook = nullptr,
                                            const std::optional<TensorT<Real>>& logit_bias = {}) {
    auto probs = attention_probs(q_in, k_in, w, logit_bias);
    auto tokens = attention_apply(probs, v_in, w, value_hook);
    const int B = q_in.dim(0);
    const int nq = q_in.dim(1);
    const int nk = k_in.dim(1);
    auto attn = reshape(probs, {B, w.heads, nq, nk});
    return {std::move(tokens), std::move(attn)};
}

// ---------------------------------------------------------------------------
// Plain MLP: affine layers with GELU on all hidden activations.
// ---------------------------------------------------------------------------

template <class Real>
struct MlpWeightsT {
    std::vector<TensorT<Real>> ws;  // each [din_i, dout_i]
    std::vector<TensorT<Real>> bs;  // each [dout_i]
};

using MlpWeights = MlpWeightsT<float>;

template <class Real>
MlpWeightsT<Real> make_mlp_weights(const std::vector<int>& dims, util::Rng& rng) {
    if (dims.size() < 2) throw util::InputError("mlp needs at least one layer");
    MlpWeightsT<Real> m;
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        const int fan_in = dims[i], fan_out = dims[i + 1];
        std::vector<Real> w(size_t(fan_in) * size_t(fan_out));
        const Real s = Real(std::sqrt(1.0 / double(fan_in)));
        for (auto& v : w) v = Real(rng.next_gaussian()) * s;
        m.ws.push_back(TensorT<Real>::param({fan_in, fan_out}, std::move(w)));
        m.bs.push_back(TensorT<Real>::param({fan_out}, std::vector<Real>(size_t(fan_out), Real(0))));
    }
    return m;
}

template <class Real>
TensorT<Real> mlp_forward(const TensorT<Real>& x, const MlpWeightsT<Real>& m) {
    TensorT<Real> h = x;
    for (size_t i = 0; i < m.ws.size(); ++i) {
        h = linear(h, m.ws[i], m.bs[i]);
        if (i + 1 < m.ws.size()) h = gelu(h);
    }
    return h;
}

}  // namespace ava::diffcore
