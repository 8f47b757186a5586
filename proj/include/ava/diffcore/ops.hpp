// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Structural tensor ops: batched matmul, softmax, layer norm, reductions,
// shape manipulation, and 2-d convolution. All loops assign each output
// element (or each destination gradient row) to exactly one iteration, so
// results are identical for any thread count.

#pragma once

#include <algorithm>
#include <cmath>

#include "ava/diffcore/tensor.hpp"

namespace ava::diffcore {

namespace detail {

// Interpret a shape as [batch, rows, cols] with batch = product of leading dims.
struct Mat3 {
    int64_t batch;
    int64_t rows;
    int64_t cols;
};

inline Mat3 as_mat3(const Shape& s) {
    if (s.size() < 2) throw util::InputError("matmul operand needs rank >= 2, got " + shape_str(s));
    int64_t b = 1;
    for (size_t i = 0; i + 2 < s.size(); ++i) b *= s[i];
    return {b, s[s.size() - 2], s[s.size() - 1]};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul: a [*, n, k] x b [k, m] or [*, k, m] -> [*, n, m].
// A rank-2 b is shared across the batch; otherwise leading dims must match.
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> matmul(const TensorT<Real>& a, const TensorT<Real>& b) {
    const auto ma = detail::as_mat3(a.shape());
    const auto mb = detail::as_mat3(b.shape());
    const bool shared_b = b.rank() == 2;
    if (ma.cols != mb.rows) {
        throw util::InputError("matmul inner dims differ: " + shape_str(a.shape()) + " x " +
                               shape_str(b.shape()));
    }
    if (!shared_b && mb.batch != ma.batch) {
        throw util::InputError("matmul batch dims differ: " + shape_str(a.shape()) + " x " +
                               shape_str(b.shape()));
    }

    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(int(mb.cols));
    auto n = detail::make_node<Real>(out_shape, {a.node(), b.node()});

    const int64_t B = ma.batch, N = ma.rows, K = ma.cols, M = mb.cols;
    const Real* pa = a.data().data();
    const Real* pb = b.data().data();
    Real* po = n->value.data();

#pragma omp parallel for schedule(static) if (B * N > 8)
    for (int64_t bi = 0; bi < B * N; ++bi) {
        const int64_t bb = bi / N;
        const Real* arow = pa + bi * K;
        const Real* bmat = pb + (shared_b ? 0 : bb * K * M);
        Real* orow = po + bi * M;
        std::fill(orow, orow + M, Real(0));
        for (int64_t k = 0; k < K; ++k) {
            const Real av = arow[k];
            const Real* brow = bmat + k * M;
            for (int64_t m = 0; m < M; ++m) orow[m] += av * brow[m];
        }
    }
    AVA_CHECK_FINITE(*n, "matmul");

    if (n->requires_grad) {
        n->backprop = [B, N, K, M, shared_b](Node<Real>& self) {
            auto& an = *self.parents[0];
            auto& bn = *self.parents[1];
            const Real* pa = an.value.data();
            const Real* pb = bn.value.data();
            const Real* g = self.grad.data();
            if (an.requires_grad) {
                Real* ga = an.grad.data();
                // dA[b,i,k] = dot(dC[b,i,:], B[b,k,:])
#pragma omp parallel for schedule(static) if (B * N > 8)
                for (int64_t bi = 0; bi < B * N; ++bi) {
                    const int64_t bb = bi / N;
                    const Real* grow = g + bi * M;
                    const Real* bmat = pb + (shared_b ? 0 : bb * K * M);
                    Real* garow = ga + bi * K;
                    for (int64_t k = 0; k < K; ++k) {
                        const Real* brow = bmat + k * M;
                        Real acc = Real(0);
                        for (int64_t m = 0; m < M; ++m) acc += grow[m] * brow[m];
                        garow[k] += acc;
                    }
                }
            }
            if (bn.requires_grad) {
                Real* gb = bn.grad.data();
                if (shared_b) {
                    // dB[k,:] += sum_{b,i} A[b,i,k] * dC[b,i,:]; one thread owns row k.
#pragma omp parallel for schedule(static) if (K > 8)
                    for (int64_t k = 0; k < K; ++k) {
                        Real* gbrow = gb + k * M;
                        for (int64_t bi = 0; bi < B * N; ++bi) {
                            const Real av = pa[bi * K + k];
                            if (av == Real(0)) continue;
                            const Real* grow = g + bi * M;
                            for (int64_t m = 0; m < M; ++m) gbrow[m] += av * grow[m];
                        }
                    }
                } else {
#pragma omp parallel for schedule(static) if (B > 1)
                    for (int64_t bb = 0; bb < B; ++bb) {
                        const Real* amat = pa + bb * N * K;
                        const Real* gmat = g + bb * N * M;
                        Real* gbmat = gb + bb * K * M;
                        for (int64_t i = 0; i < N; ++i) {
                            const Real* arow = amat + i * K;
                            const Real* grow = gmat + i * M;
                            for (int64_t k = 0; k < K; ++k) {
                                const Real av = arow[k];
                                if (av == Real(0)) continue;
                                Real* gbrow = gbmat + k * M;
                                for (int64_t m = 0; m < M; ++m) gbrow[m] += av * grow[m];
                            }
                        }
                    }
                }
            }
        };
    }
    return TensorT<Real>(std::move(n));
}

// a [*, n, k] x b^T where b [*, m, k] -> [*, n, m]. Batch dims must match.
template <class Real>
TensorT<Real> matmul_nt(const TensorT<Real>& a, const TensorT<Real>& b) {
    const auto ma = detail::as_mat3(a.shape());
    const auto mb = detail::as_mat3(b.shape());
    if (ma.cols != mb.cols || ma.batch != mb.batch) {
        throw util::InputError("matmul_nt shape mismatch: " + shape_str(a.shape()) + " x " +
                               shape_str(b.shape()) + "^T");
    }
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(int(mb.rows));
    auto n = detail::make_node<Real>(out_shape, {a.node(), b.node()});

    const int64_t B = ma.batch, N = ma.rows, K = ma.cols, M = mb.rows;
    const Real* pa = a.data().data();
    const Real* pb = b.data().data();
    Real* po = n->value.data();

#pragma omp parallel for schedule(static) if (B * N > 8)
    for (int64_t bi = 0; bi < B * N; ++bi) {
        const int64_t bb = bi / N;
        const Real* arow = pa + bi * K;
        const Real* bmat = pb + bb * M * K;
        Real* orow = po + bi * M;
        for (int64_t m = 0; m < M; ++m) {
            const Real* brow = bmat + m * K;
            Real acc = Real(0);
            for (int64_t k = 0; k < K; ++k) acc += arow[k] * brow[k];
            orow[m] = acc;
        }
    }
    AVA_CHECK_FINITE(*n, "matmul_nt");

    if (n->requires_grad) {
        n->backprop = [B, N, K, M](Node<Real>& self) {
            auto& an = *self.parents[0];
            auto& bn = *self.parents[1];
            const Real* pa = an.value.data();
            const Real* pb = bn.value.data();
            const Real* g = self.grad.data();
            if (an.requires_grad) {
                Real* ga = an.grad.data();
                // dA[b,i,:] += sum_m dC[b,i,m] * B[b,m,:]
#pragma omp parallel for schedule(static) if (B * N > 8)
                for (int64_t bi = 0; bi < B * N; ++bi) {
                    const int64_t bb = bi / N;
                    const Real* grow = g + bi * M;
                    const Real* bmat = pb + bb * M * K;
                    Real* garow = ga + bi * K;
                    for (int64_t m = 0; m < M; ++m) {
                        const Real gv = grow[m];
                        if (gv == Real(0)) continue;
                        const Real* brow = bmat + m * K;
                        for (int64_t k = 0; k < K; ++k) garow[k] += gv * brow[k];
                    }
                }
            }
            if (bn.requires_grad) {
                Real* gb = bn.grad.data();
                // dB[b,m,:] += sum_i dC[b,i,m] * A[b,i,:]; one thread owns (b,m).
#pragma omp parallel for schedule(static) if (B * M > 8)
                for (int64_t bm = 0; bm < B * M; ++bm) {
                    const int64_t bb = bm / M;
                    const int64_t m = bm % M;
                    const Real* amat = pa + bb * N * K;
                    const Real* gmat = g + bb * N * M;
                    Real* gbrow = gb + bm * K;
                    for (int64_t i = 0; i < N; ++i) {
                        const Real gv = gmat[i * M + m];
                        if (gv == Real(0)) continue;
                        const Real* arow = amat + i * K;
                        for (int64_t k = 0; k < K; ++k) gbrow[k] += gv * arow[k];
                    }
                }
            }
        };
    }
    return TensorT<Real>(std::move(n));
}

// ---------------------------------------------------------------------------
// Softmax over the last axis, numerically stabilized by row-max subtraction.
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> softmax_last(const TensorT<Real>& a) {
    auto n = detail::make_node<Real>(a.shape(), {a.node()});
    const int64_t cols = a.dim(-1);
    const int64_t rows = a.size() / cols;
    const Real* pa = a.data().data();
    Real* po = n->value.data();

#pragma omp parallel for schedule(static) if (rows > 8)
    for (int64_t r = 0; r < rows; ++r) {
        const Real* x = pa + r * cols;
        Real* y = po + r * cols;
        Real mx = x[0];
        for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
        Real sum = Real(0);
        for (int64_t c = 0; c < cols; ++c) {
            y[c] = std::exp(x[c] - mx);
            sum += y[c];
        }
        const Real inv = Real(1) / sum;
        for (int64_t c = 0; c < cols; ++c) y[c] *= inv;
    }
    AVA_CHECK_FINITE(*n, "softmax_last");

    if (n->requires_grad) {
        n->backprop = [cols, rows](Node<Real>& self) {
            auto& p = *self.parents[0];
            const Real* y = self.value.data();
            const Real* g = self.grad.data();
            Real* gx = p.grad.data();
#pragma omp parallel for schedule(static) if (rows > 8)
            for (int64_t r = 0; r < rows; ++r) {
                const Real* yr = y + r * cols;
                const Real* gr = g + r * cols;
                Real* gxr = gx + r * cols;
                Real dot = Real(0);
                for (int64_t c = 0; c < cols; ++c) dot += gr[c] * yr[c];
                for (int64_t c = 0; c < cols; ++c) gxr[c] += yr[c] * (gr[c] - dot);
            }
        };
    }
    return TensorT<Real>(std::move(n));
}

// ---------------------------------------------------------------------------
// Layer normalization over the last axis with learned gain/bias.
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> layer_norm(const TensorT<Real>& x, const TensorT<Real>& gain,
                         const TensorT<Real>& bias, Real eps = Real(1e-5)) {
    const int64_t cols = x.dim(-1);
    if (gain.size() != cols || bias.size() != cols) {
        throw util::InputError("layer_norm gain/bias must have length of last axis");
    }
    auto n = detail::make_node<Real>(x.shape(), {x.node(), gain.node(), bias.node()});
    const int64_t rows = x.size() / cols;
    const Real* px = x.data().data();
    const Real* pg = gain.data().data();
    const Real* pb = bias.data().data();
    Real* po = n->value.data();

#pragma omp parallel for schedule(static) if (rows > 8)
    for (int64_t r = 0; r < rows; ++r) {
        const Real* xr = px + r * cols;
        Real* yr = po + r * cols;
        Real mean = Real(0);
        for (int64_t c = 0; c < cols; ++c) mean += xr[c];
        mean /= Real(cols);
        Real var = Real(0);
        for (int64_t c = 0; c < cols; ++c) {
            const Real d = xr[c] - mean;
            var += d * d;
        }
        var /= Real(cols);
        const Real inv_std = Real(1) / std::sqrt(var + eps);
        for (int64_t c = 0; c < cols; ++c) {
            yr[c] = (xr[c] - mean) * inv_std * pg[c] + pb[c];
        }
    }
    AVA_CHECK_FINITE(*n, "layer_norm");

    if (n->requires_grad) {
        n->backprop = [cols, rows, eps](Node<Real>& self) {
            auto& xn = *self.parents[0];
            auto& gn = *self.parents[1];
            auto& bn = *self.parents[2];
            const Real* px = xn.value.data();
            const Real* pg = gn.value.data();
            const Real* g = self.grad.data();

            if (xn.requires_grad) {
                Real* gx = xn.grad.data();
#pragma omp parallel for schedule(static) if (rows > 8)
                for (int64_t r = 0; r < rows; ++r) {
                    const Real* xr = px + r * cols;
                    const Real* gr = g + r * cols;
                    Real* gxr = gx + r * cols;
                    Real mean = Real(0);
                    for (int64_t c = 0; c < cols; ++c) mean += xr[c];
                    mean /= Real(cols);
                    Real var = Real(0);
                    for (int64_t c = 0; c < cols; ++c) {
                        const Real d = xr[c] - mean;
                        var += d * d;
                    }
                    var /= Real(cols);
                    const Real inv_std = Real(1) / std::sqrt(var + eps);
                    Real mean_dxhat = Real(0), mean_dxhat_xhat = Real(0);
                    for (int64_t c = 0; c < cols; ++c) {
                        const Real xhat = (xr[c] - mean) * inv_std;
                        const Real dxhat = gr[c] * pg[c];
                        mean_dxhat += dxhat;
                        mean_dxhat_xhat += dxhat * xhat;
                    }
                    mean_dxhat /= Real(cols);
                    mean_dxhat_xhat /= Real(cols);
                    for (int64_t c = 0; c < cols; ++c) {
                        const Real xhat = (xr[c] - mean) * inv_std;
                        const Real dxhat = gr[c] * pg[c];
                        gxr[c] += inv_std * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                    }
                }
            }
            if (gn.requires_grad || bn.requires_grad) {
                Real* gg = gn.requires_grad ? gn.grad.data() : nullptr;
                Real* gb = bn.requires_grad ? bn.grad.data() : nullptr;
                // One thread owns feature column c.
#pragma omp parallel for schedule(static) if (cols > 8)
                for (int64_t c = 0; c < cols; ++c) {
                    Real acc_g = Real(0), acc_b = Real(0);
                    for (int64_t r = 0; r < rows; ++r) {
                        const Real* xr = px + r * cols;
                        Real mean = Real(0);
                        for (int64_t cc = 0; cc < cols; ++cc) mean += xr[cc];
                        mean /= Real(cols);
                        Real var = Real(0);
                        for (int64_t cc = 0; cc < cols; ++cc) {
                            const Real d = xr[cc] - mean;
                            var += d * d;
                        }
                        var /= Real(cols);
                        const Real inv_std = Real(1) / std::sqrt(var + eps);
                        const Real xhat = (xr[c] - mean) * inv_std;
                        acc_g += g[r * cols + c] * xhat;
                        acc_b += g[r * cols + c];
                    }
                    if (gg) gg[c] += acc_g;
                    if (gb) gb[c] += acc_b;
                }
            }
        };
    }
    return TensorT<Real>(std::move(n));
}

// ---------------------------------------------------------------------------
// Reductions.
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> sum_all(const TensorT<Real>& a) {
    auto n = detail::make_node<Real>({1}, {a.node()});
    const Real* pa = a.data().data();
    Real acc = Real(0);
    for (int64_t i = 0; i < a.size(); ++i) acc += pa[i];
    n->value[0] = acc;
    if (n->requires_grad) {
        n->backprop = [](Node<Real>& self) {
            auto& p = *self.parents[0];
            const Real g = self.grad[0];
            Real* gx = p.grad.data();
            const int64_t total = int64_t(p.value.size());
#pragma omp parallel for schedule(static) if (total > 16384)
            for (int64_t i = 0; i < total; ++i) gx[i] += g;
        };
    }
    return TensorT<Real>(std::move(n));
}

template <class Real>
TensorT<Real> mean_all(const TensorT<Real>& a) {
    return scale(sum_all(a), Real(1) / Real(a.size()));
}

// Mean over axis 1 of a rank-3 tensor [B, N, D] -> [B, D].
template <class Real>
TensorT<Real> mean_axis1(const TensorT<Real>& a) {
    if (a.rank() != 3) throw util::InputError("mean_axis1 expects rank-3 input");
    const int64_t B = a.dim(0), N = a.dim(1), D = a.dim(2);
    auto n = detail::make_node<Real>({int(B), int(D)}, {a.node()});
    const Real* pa = a.data().data();
    Real* po = n->value.data();
#pragma omp parallel for schedule(static) if (B > 8)
    for (int64_t b = 0; b < B; ++b) {
        Real* orow = po + b * D;
        std::fill(orow, orow + D, Real(0));
        for (int64_t i = 0; i < N; ++i) {
            const Real* arow = pa + (b * N + i) * D;
            for (int64_t d = 0; d < D; ++d) orow[d] += arow[d];
        }
        const Real inv = Real(1) / Real(N);
        for (int64_t d = 0; d < D; ++d) orow[d] *= inv;
    }
    if (n->requires_grad) {
        n->backprop = [B, N, D](Node<Real>& self) {
            auto& p = *self.parents[0];
            Real* gx = p.grad.data();
            const Real* g = self.grad.data();
            const Real inv = Real(1) / Real(N);
#pragma omp parallel for schedule(static) if (B * N > 8)
            for (int64_t bi = 0; bi < B * N; ++bi) {
                const int64_t b = bi / N;
                Real* gxrow = gx + bi * D;
                const Real* grow = g + b * D;
                for (int64_t d = 0; d < D; ++d) gxrow[d] += grow[d] * inv;
            }
        };
    }
    return TensorT<Real>(std::move(n));
}

// Mean squared error between same-shape tensors; returns a scalar.
template <class Real>
TensorT<Real> mse(const TensorT<Real>& a, const TensorT<Real>& b) {
    if (a.shape() != b.shape()) {
        throw util::InputError("mse requires identical shapes, got " + shape_str(a.shape()) +
                               " vs " + shape_str(b.shape()));
    }
    return mean_all(square(sub(a, b)));
}

// ---------------------------------------------------------------------------
// Shape manipulation.
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> reshape(const TensorT<Real>& a, Shape shape) {
    if (numel(shape) != a.size()) {
        throw util::InputError("reshape from " + shape_str(a.shape()) + " to " +
                               shape_str(shape) + " changes element count");
    }
    auto n = detail::make_node<Real>(std::move(shape), {a.node()});
    std::copy(a.data().begin(), a.data().end(), n->value.begin());
    if (n->requires_grad) {
        n->backprop = [](Node<Real>& self) {
            auto& p = *self.parents[0];
            Real* gx = p.grad.data();
            const Real* g = self.grad.data();
            const int64_t total = int64_t(self.value.size());
            for (int64_t i = 0; i < total; ++i) gx[i] += g[i];
        };
    }
    return TensorT<Real>(std::move(n));
}

template <class Real>
TensorT<Real> broadcast_to(const TensorT<Real>& a, const Shape& shape) {
    return add(a, TensorT<Real>::zeros(shape));
}

// Concatenate along the last axis; all other dims must match.
template <class Real>
TensorT<Real> concat_last(const std::vector<TensorT<Real>>& parts) {
    if (parts.empty()) throw util::InputError("concat_last needs at least one tensor");
    Shape base = parts[0].shape();
    int total_last = 0;
    std::vector<std::shared_ptr<Node<Real>>> parents;
    for (const auto& t : parts) {
        Shape s = t.shape();
        if (Shape(s.begin(), s.end() - 1) != Shape(base.begin(), base.end() - 1)) {
            throw util::InputError("concat_last parts disagree on leading dims");
        }
        total_last += s.back();
        parents.push_back(t.node());
    }
    Shape out_shape(base.begin(), base.end() - 1);
    out_shape.push_back(total_last);
    auto n = detail::make_node<Real>(out_shape, std::move(parents));

    const int64_t rows = numel(out_shape) / total_last;
    std::vector<int> widths, offsets;
    int off = 0;
    for (const auto& t : parts) {
        widths.push_back(t.dim(-1));
        offsets.push_back(off);
        off += t.dim(-1);
    }
    Real* po = n->value.data();
#pragma omp parallel for schedule(static) if (rows > 64)
    for (int64_t r = 0; r < rows; ++r) {
        for (size_t p = 0; p < widths.size(); ++p) {
            const Real* src = n->parents[p]->value.data() + r * widths[p];
            std::copy(src, src + widths[p], po + r * total_last + offsets[p]);
        }
    }
    if (n->requires_grad) {
        n->backprop = [rows, total_last, widths, offsets](Node<Real>& self) {
            const Real* g = self.grad.data();
            for (size_t p = 0; p < widths.size(); ++p) {
                auto& pn = *self.parents[p];
                if (!pn.requires_grad) continue;
                Real* gx = pn.grad.data();
                const int w = widths[p];
                const int o = offsets[p];
#pragma omp parallel for schedule(static) if (rows > 64)
                for (int64_t r = 0; r < rows; ++r) {
                    const Real* grow = g + r * total_last + o;
                    Real* gxrow = gx + r * w;
                    for (int c = 0; c < w; ++c) gxrow[c] += grow[c];
                }
            }
        };
    }
    return TensorT<Real>(std::move(n));
}

// Slice along the last axis: out[..., :] = a[..., start:start+len].
template <class Real>
TensorT<Real> slice_last(const TensorT<Real>& a, int start, int len) {
    const int last = a.dim(-1);
    if (start < 0 || len <= 0 || start + len > last) {
        throw util::InputError("slice_last range out of bounds");
    }
    Shape out_shape = a.shape();
    out_shape.back() = len;
    auto n = detail::make_node<Real>(out_shape, {a.node()});
    const int64_t rows = a.size() / last;
    const Real* pa = a.data().data();
    Real* po = n->value.data();
#pragma omp parallel for schedule(static) if (rows > 64)
    for (int64_t r = 0; r < rows; ++r) {
        std::copy(pa + r * last + start, pa + r * last + start + len, po + r * len);
    }
    if (n->requires_grad) {
        n->backprop = [rows, last, start, len](Node<Real>& self) {
            auto& p = *self.parents[0];
            Real* gx = p.grad.data();
            const Real* g = self.grad.data();
#pragma omp parallel for schedule(static) if (rows > 64)
            for (int64_t r = 0; r < rows; ++r) {
                const Real* grow = g + r * len;
                Real* gxrow = gx + r * last + start;
                for (int c = 0; c < len; ++c) gxrow[c] += grow[c];
            }
        };
    }
    return TensorT<Real>(std::move(n));
}

// Stack R same-shape [N, D] tensors into [R, N, D] -- or more generally,
// stack along a new leading axis.
template <class Real>
TensorT<Real> stack_leading(const std::vector<TensorT<Real>>& parts) {
    if (parts.empty()) throw util::InputError("stack_leading needs at least one tensor");
    const Shape base = parts[0].shape();
    std::vector<std::shared_ptr<Node<Real>>> parents;
    for (const auto& t : parts) {
        if (t.shape() != base) throw util::InputError("stack_leading parts must share a shape");
        parents.push_back(t.node());
    }
    Shape out_shape;
    out_shape.push_back(int(parts.size()));
    out_shape.insert(out_shape.end(), base.begin(), base.end());
    auto n = detail::make_node<Real>(out_shape, std::move(parents));
    const int64_t chunk = numel(base);
    for (size_t p = 0; p < parts.size(); ++p) {
        std::copy(n->parents[p]->value.begin(), n->parents[p]->value.end(),
                  n->value.begin() + int64_t(p) * chunk);
    }
    if (n->requires_grad) {
        n->backprop = [chunk](Node<Real>& self) {
            const Real* g = self.grad.data();
            for (size_t p = 0; p < self.parents.size(); ++p) {
                auto& pn = *self.parents[p];
                if (!pn.requires_grad) continue;
                Real* gx = pn.grad.data();
                const Real* gsrc = g + int64_t(p) * chunk;
                for (int64_t i = 0; i < chunk; ++i) gx[i] += gsrc[i];
            }
        };
    }
    return TensorT<Real>(std::move(n));
}

// Transpose a rank-3 tensor's first two axes: [A, B, D] -> [B, A, D].
template <class Real>
TensorT<Real> transpose01(const TensorT<Real>& x) {
    if (x.rank() != 3) throw util::InputError("transpose01 expects rank-3 input");
    const int64_t A = x.dim(0), B = x.dim(1), D = x.dim(2);
    auto n = detail::make_node<Real>({int(B), int(A), int(D)}, {x.node()});
    const Real* px = x.data().data();
    Real* po = n->value.data();
#pragma omp parallel for schedule(static) if (A * B > 64)
    for (int64_t ab = 0; ab < A * B; ++ab) {
        const int64_t a = ab / B, b = ab % B;
        std::copy(px + (a * B + b) * D, px + (a * B + b + 1) * D, po + (b * A + a) * D);
    }
    if (n->requires_grad) {
        n->backprop = [A, B, D](Node<Real>& self) {
            auto& p = *self.parents[0];
            Real* gx = p.grad.data();
            const Real* g = self.grad.data();
#pragma omp parallel for schedule(static) if (A * B > 64)
            for (int64_t ab = 0; ab < A * B; ++ab) {
                const int64_t a = ab / B, b = ab % B;
                const Real* grow = g + (b * A + a) * D;
                Real* gxrow = gx + (a * B + b) * D;
                for (int64_t d = 0; d < D; ++d) gxrow[d] += grow[d];
            }
        };
    }
    return TensorT<Real>(std::move(n));
}

// [B, N, h*dh] -> [B*h, N, dh]: split feature axis into heads hoisted into the batch.
template <class Real>
TensorT<Real> split_heads(const TensorT<Real>& x, int heads) {
    if (x.rank() != 3) throw util::InputError("split_heads expects rank-3 input [B, N, D]");
    const int64_t B = x.dim(0), N = x.dim(1), D = x.dim(2);
    if (D % heads != 0) throw util::InputError("feature dim not divisible by head count");
    const int64_t dh = D / heads;
    auto n = detail::make_node<Real>({int(B * heads), int(N), int(dh)}, {x.node()});
    const Real* px = x.data().data();
    Real* po = n->value.data();
#pragma omp parallel for schedule(static) if (B * N > 64)
    for (int64_t bn = 0; bn < B * N; ++bn) {
        const int64_t b = bn / N, i = bn % N;
        const Real* src = px + (b * N + i) * D;
        for (int64_t h = 0; h < heads; ++h) {
            Real* dst = po + ((b * heads + h) * N + i) * dh;
            std::copy(src + h * dh, src + (h + 1) * dh, dst);
        }
    }
    if (n->requires_grad) {
        const int64_t H = heads;
        n->backprop = [B, N, D, dh, H](Node<Real>& self) {
            auto& p = *self.parents[0];
            Real* gx = p.grad.data();
            const Real* g = self.grad.data();
#pragma omp parallel for schedule(static) if (B * N > 64)
            for (int64_t bn = 0; bn < B * N; ++bn) {
                const int64_t b = bn / N, i = bn % N;
                Real* dst = gx + (b * N + i) * D;
                for (int64_t h = 0; h < H; ++h) {
                    const Real* src = g + ((b * H + h) * N + i) * dh;
                    for (int64_t d = 0; d < dh; ++d) dst[h * dh + d] += src[d];
                }
            }
        };
    }
    return TensorT<Real>(std::move(n));
}

// [B*h, N, dh] -> [B, N, h*dh]: inverse of split_heads.
template <class Real>
TensorT<Real> merge_heads(const TensorT<Real>& x, int heads) {
    if (x.rank() != 3) throw util::InputError("merge_heads expects rank-3 input [B*h, N, dh]");
    const int64_t BH = x.dim(0), N = x.dim(1), dh = x.dim(2);
    if (BH % heads != 0) throw util::InputError("batch dim not divisible by head count");
    const int64_t B = BH / heads;
    const int64_t D = dh * heads;
    auto n = detail::make_node<Real>({int(B), int(N), int(D)}, {x.node()});
    const Real* px = x.data().data();
    Real* po = n->value.data();
#pragma omp parallel for schedule(static) if (B * N > 64)
    for (int64_t bn = 0; bn < B * N; ++bn) {
        const int64_t b = bn / N, i = bn % N;
        Real* dst = po + (b * N + i) * D;
        for (int64_t h = 0; h < heads; ++h) {
            const Real* src = px + ((b * heads + h) * N + i) * dh;
            std::copy(src, src + dh, dst + h * dh);
        }
    }
    if (n->requires_grad) {
        const int64_t H = heads;
        n->backprop = [B, N, D, dh, H](Node<Real>& self) {
            auto& p = *self.parents[0];
            Real* gx = p.grad.data();
            const Real* g = self.grad.data();
#pragma omp parallel for schedule(static) if (B * N > 64)
            for (int64_t bn = 0; bn < B * N; ++bn) {
                const int64_t b = bn / N, i = bn % N;
                const Real* src = g + (b * N + i) * D;
                for (int64_t h = 0; h < H; ++h) {
                    Real* dst = gx + ((b * H + h) * N + i) * dh;
                    for (int64_t d = 0; d < dh; ++d) dst[d] += src[h * dh + d];
                }
            }
        };
    }
    return TensorT<Real>(std::move(n));
}

// ---------------------------------------------------------------------------
// 2-d convolution on HWC layout. Weight is [kh, kw, cin, cout], bias [cout].
// Zero padding keeps "same" spatial extent for stride 1; for stride s the
// output is ceil(extent / s). Kernel extents must be odd.
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> conv2d(const TensorT<Real>& x, const TensorT<Real>& w, const TensorT<Real>& b,
                     int stride) {
    if (x.rank() != 3 || w.rank() != 4) {
        throw util::InputError("conv2d expects x [H,W,C] and w [kh,kw,cin,cout]");
    }
    const int64_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
    const int64_t kh = w.dim(0), kw = w.dim(1), cin = w.dim(2), cout = w.dim(3);
    if (cin != C) throw util::InputError("conv2d channel mismatch");
    if (kh % 2 == 0 || kw % 2 == 0) throw util::InputError("conv2d kernel extents must be odd");
    if (b.size() != cout) throw util::InputError("conv2d bias length mismatch");
    const int64_t ph = kh / 2, pw = kw / 2;
    const int64_t Ho = (H + stride - 1) / stride;
    const int64_t Wo = (W + stride - 1) / stride;

    auto n = detail::make_node<Real>({int(Ho), int(Wo), int(cout)},
                                     {x.node(), w.node(), b.node()});
    const Real* px = x.data().data();
    const Real* pw_ = w.data().data();
    const Real* pb = b.data().data();
    Real* po = n->value.data();

#pragma omp parallel for schedule(static) if (Ho > 4)
    for (int64_t oy = 0; oy < Ho; ++oy) {
        for (int64_t ox = 0; ox < Wo; ++ox) {
            Real* out = po + (oy * Wo + ox) * cout;
            for (int64_t c = 0; c < cout; ++c) out[c] = pb[c];
            const int64_t iy0 = oy * stride - ph;
            const int64_t ix0 = ox * stride - pw;
            for (int64_t ky = 0; ky < kh; ++ky) {
                const int64_t iy = iy0 + ky;
                if (iy < 0 || iy >= H) continue;
                for (int64_t kx = 0; kx < kw; ++kx) {
                    const int64_t ix = ix0 + kx;
                    if (ix < 0 || ix >= W) continue;
                    const Real* xin = px + (iy * W + ix) * C;
                    const Real* wk = pw_ + (ky * kw + kx) * C * cout;
                    for (int64_t c = 0; c < C; ++c) {
                        const Real xv = xin[c];
                        if (xv == Real(0)) continue;
                        const Real* wrow = wk + c * cout;
                        for (int64_t o = 0; o < cout; ++o) out[o] += xv * wrow[o];
                    }
                }
            }
        }
    }
    AVA_CHECK_FINITE(*n, "conv2d");

    if (n->requires_grad) {
        n->backprop = [H, W, C, kh, kw, cout, ph, pw, Ho, Wo, stride](Node<Real>& self) {
            auto& xn = *self.parents[0];
            auto& wn = *self.parents[1];
            auto& bn = *self.parents[2];
            const Real* px = xn.value.data();
            const Real* pw_ = wn.value.data();
            const Real* g = self.grad.data();

            if (xn.requires_grad) {
                Real* gx = xn.grad.data();
                // One thread owns input row iy.
#pragma omp parallel for schedule(static) if (H > 4)
                for (int64_t iy = 0; iy < H; ++iy) {
                    for (int64_t ix = 0; ix < W; ++ix) {
                        Real* gin = gx + (iy * W + ix) * C;
                        for (int64_t ky = 0; ky < kh; ++ky) {
                            const int64_t oy_num = iy + ph - ky;
                            if (oy_num < 0 || oy_num % stride != 0) continue;
                            const int64_t oy = oy_num / stride;
                            if (oy >= Ho) continue;
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                const int64_t ox_num = ix + pw - kx;
                                if (ox_num < 0 || ox_num % stride != 0) continue;
                                const int64_t ox = ox_num / stride;
                                if (ox >= Wo) continue;
                                const Real* grow = g + (oy * Wo + ox) * cout;
                                const Real* wk = pw_ + (ky * kw + kx) * C * cout;
                                for (int64_t c = 0; c < C; ++c) {
                                    const Real* wrow = wk + c * cout;
                                    Real acc = Real(0);
                                    for (int64_t o = 0; o < cout; ++o) acc += grow[o] * wrow[o];
                                    gin[c] += acc;
                                }
                            }
                        }
                    }
                }
            }
            if (wn.requires_grad) {
                Real* gw = wn.grad.data();
                // One thread owns kernel tap (ky, kx).
#pragma omp parallel for schedule(static) if (kh * kw > 1)
                for (int64_t tap = 0; tap < kh * kw; ++tap) {
                    const int64_t ky = tap / kw, kx = tap % kw;
                    Real* gwk = gw + tap * C * cout;
                    for (int64_t oy = 0; oy < Ho; ++oy) {
                        const int64_t iy = oy * stride - ph + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (int64_t ox = 0; ox < Wo; ++ox) {
                            const int64_t ix = ox * stride - pw + kx;
                            if (ix < 0 || ix >= W) continue;
                            const Real* xin = px + (iy * W + ix) * C;
                            const Real* grow = g + (oy * Wo + ox) * cout;
                            for (int64_t c = 0; c < C; ++c) {
                                const Real xv = xin[c];
                                if (xv == Real(0)) continue;
                                Real* gwrow = gwk + c * cout;
                                for (int64_t o = 0; o < cout; ++o) gwrow[o] += xv * grow[o];
                            }
                        }
                    }
                }
            }
            if (bn.requires_grad) {
                Real* gb = bn.grad.data();
#pragma omp parallel for schedule(static) if (cout > 8)
                for (int64_t o = 0; o < cout; ++o) {
                    Real acc = Real(0);
                    for (int64_t i = 0; i < Ho * Wo; ++i) acc += g[i * cout + o];
                    gb[o] += acc;
                }
            }
        };
    }
    return TensorT<Real>(std::move(n));
}

// Nearest-neighbour 2x upsampling on HWC layout.
template <class Real>
TensorT<Real> upsample2x(const TensorT<Real>& x) {
    if (x.rank() != 3) throw util::InputError("upsample2x expects [H,W,C]");
    const int64_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
    auto n = detail::make_node<Real>({int(2 * H), int(2 * W), int(C)}, {x.node()});
    const Real* px = x.data().data();
    Real* po = n->value.data();
#pragma omp parallel for schedule(static) if (H > 8)
    for (int64_t oy = 0; oy < 2 * H; ++oy) {
        const int64_t iy = oy / 2;
        for (int64_t ox = 0; ox < 2 * W; ++ox) {
            const int64_t ix = ox / 2;
            const Real* src = px + (iy * W + ix) * C;
            Real* dst = po + (oy * 2 * W + ox) * C;
            std::copy(src, src + C, dst);
        }
    }
    if (n->requires_grad) {
        n->backprop = [H, W, C](Node<Real>& self) {
            auto& p = *self.parents[0];
            Real* gx = p.grad.data();
            const Real* g = self.grad.data();
#pragma omp parallel for schedule(static) if (H > 8)
            for (int64_t iy = 0; iy < H; ++iy) {
                for (int64_t ix = 0; ix < W; ++ix) {
                    Real* dst = gx + (iy * W + ix) * C;
                    for (int64_t sy = 0; sy < 2; ++sy) {
                        for (int64_t sx = 0; sx < 2; ++sx) {
                            const Real* src = g + ((2 * iy + sy) * 2 * W + 2 * ix + sx) * C;
                            for (int64_t c = 0; c < C; ++c) dst[c] += src[c];
                        }
                    }
                }
            }
        };
    }
    return TensorT<Real>(std::move(n));
}

// Crop the top-left [H, W] region of a [H', W', C] map (H <= H', W <= W').
template <class Real>
TensorT<Real> crop_to(const TensorT<Real>& x, int H, int W) {
    if (x.rank() != 3) throw util::InputError("crop_to expects [H,W,C]");
    const int64_t Hi = x.dim(0), Wi = x.dim(1), C = x.dim(2);
    if (H > Hi || W > Wi) throw util::InputError("crop_to target larger than input");
    if (H == Hi && W == Wi) return x;
    auto n = detail::make_node<Real>({H, W, int(C)}, {x.node()});
    const Real* px = x.data().data();
    Real* po = n->value.data();
    for (int64_t y = 0; y < H; ++y) {
        std::copy(px + y * Wi * C, px + (y * Wi + W) * C, po + y * W * C);
    }
    if (n->requires_grad) {
        n->backprop = [H, W, Wi, C](Node<Real>& self) {
            auto& p = *self.parents[0];
            Real* gx = p.grad.data();
            const Real* g = self.grad.data();
            for (int64_t y = 0; y < H; ++y) {
                for (int64_t i = 0; i < W * C; ++i) gx[y * Wi * C + i] += g[y * W * C + i];
            }
        };
    }
    return TensorT<Real>(std::move(n));
}

}  // namespace ava::diffcore
