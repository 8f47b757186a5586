// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense n-d tensors with reverse-mode gradient propagation. The forward pass
// records a graph of nodes; backward() walks it in reverse topological order.
// Scalar type is a template parameter: float for training/inference, double
// for finite-difference verification.

#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "ava/util/errors.hpp"
#include "ava/util/rng.hpp"

namespace ava::diffcore {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <class Real>
struct Node {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;  // allocated lazily, same length as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad, accumulates into parents' grad buffers.
    std::function<void(Node&)> backprop;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), Real(0));
    }
};

template <class Real>
class TensorT {
public:
    TensorT() = default;

    static TensorT constant(Shape shape, std::vector<Real> data) {
        auto n = std::make_shared<Node<Real>>();
        if (int64_t(data.size()) != numel(shape)) {
            throw util::InputError("tensor data length " + std::to_string(data.size()) +
                                   " does not match shape " + shape_str(shape));
        }
        n->shape = std::move(shape);
        n->value = std::move(data);
        return TensorT(std::move(n));
    }

    static TensorT zeros(Shape shape) {
        return constant(std::move(shape), std::vector<Real>(size_t(numel(shape)), Real(0)));
    }

    static TensorT full(Shape shape, Real v) {
        return constant(std::move(shape), std::vector<Real>(size_t(numel(shape)), v));
    }

    static TensorT scalar(Real v) { return constant({1}, {v}); }

    // Leaf with gradient tracking (a learnable parameter).
    static TensorT param(Shape shape, std::vector<Real> data) {
        TensorT t = constant(std::move(shape), std::move(data));
        t.node_->requires_grad = true;
        return t;
    }

    static TensorT randn(Shape shape, util::Rng& rng, Real stddev = Real(1)) {
        std::vector<Real> data(size_t(numel(shape)));
        for (auto& v : data) v = Real(rng.next_gaussian()) * stddev;
        return constant(std::move(shape), std::move(data));
    }

    bool valid() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const {
        return node_->shape[i < 0 ? node_->shape.size() + i : size_t(i)];
    }
    int rank() const { return int(node_->shape.size()); }
    int64_t size() const { return int64_t(node_->value.size()); }

    std::span<const Real> data() const { return node_->value; }
    std::span<Real> mutable_data() { return node_->value; }
    Real item() const {
        assert(size() == 1);
        return node_->value[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    std::span<const Real> grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    std::span<Real> mutable_grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->value.size(), Real(0)); }

    // Reverse-mode sweep from a scalar. Accumulates into leaf grads (+=).
    void backward() const {
        if (size() != 1) throw util::InputError("backward() requires a scalar tensor");
        if (!node_->requires_grad) return;

        // Reverse topological order via iterative DFS.
        std::vector<Node<Real>*> order;
        std::unordered_set<Node<Real>*> visited;
        std::vector<std::pair<Node<Real>*, size_t>> stack;
        stack.push_back({node_.get(), 0});
        visited.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, idx] = stack.back();
            if (idx < n->parents.size()) {
                Node<Real>* p = n->parents[idx].get();
                ++idx;
                if (p->requires_grad && !visited.count(p)) {
                    visited.insert(p);
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }

        for (Node<Real>* n : order) n->ensure_grad();
        node_->grad[0] += Real(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node<Real>* n = *it;
            if (n->backprop) {
                for (auto& p : n->parents) p->ensure_grad();
                n->backprop(*n);
            }
        }
    }

    // Detached copy: same values, no graph history.
    TensorT detach() const {
        return constant(node_->shape, node_->value);
    }

    std::shared_ptr<Node<Real>>& node() { return node_; }
    const std::shared_ptr<Node<Real>>& node() const { return node_; }

    explicit TensorT(std::shared_ptr<Node<Real>> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<Node<Real>> node_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

namespace detail {

#ifndef NDEBUG
template <class Real>
inline void check_finite(const Node<Real>& n, const char* op) {
    for (Real v : n.value) {
        if (!std::isfinite(double(v))) {
            assert(false && "non-finite value produced by forward op");
            (void)op;
            return;
        }
    }
}
#define AVA_CHECK_FINITE(node, op) ::ava::diffcore::detail::check_finite(node, op)
#else
#define AVA_CHECK_FINITE(node, op) ((void)0)
#endif

template <class Real>
std::shared_ptr<Node<Real>> make_node(Shape shape,
                                      std::vector<std::shared_ptr<Node<Real>>> parents) {
    auto n = std::make_shared<Node<Real>>();
    n->shape = std::move(shape);
    n->value.resize(size_t(numel(n->shape)));
    for (auto& p : parents) {
        if (p->requires_grad) n->requires_grad = true;
    }
    n->parents = std::move(parents);
    return n;
}

// Right-aligned broadcast of two shapes; dims must match or be 1.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    Shape out(std::max(a.size(), b.size()));
    for (size_t i = 0; i < out.size(); ++i) {
        const int da = i < out.size() - a.size() ? 1 : a[i - (out.size() - a.size())];
        const int db = i < out.size() - b.size() ? 1 : b[i - (out.size() - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw util::InputError("shapes not broadcastable: " + shape_str(a) + " vs " +
                                   shape_str(b));
        }
        out[i] = std::max(da, db);
    }
    return out;
}

// Strides of `in` viewed in the coordinate system of `out` (0 where broadcast).
inline std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
    std::vector<int64_t> strides(out.size(), 0);
    int64_t s = 1;
    for (int i = int(in.size()) - 1; i >= 0; --i) {
        const size_t oi = out.size() - in.size() + size_t(i);
        strides[oi] = (in[size_t(i)] == 1 && out[oi] != 1) ? 0 : s;
        s *= in[size_t(i)];
    }
    return strides;
}

// Sum `src` (laid out as `out_shape`) into a buffer of `in_shape`.
// Deterministic: each destination element is reduced by a single sequential loop.
template <class Real>
void reduce_to(const Real* src, const Shape& out_shape, Real* dst, const Shape& in_shape) {
    const int64_t n_out = numel(out_shape);
    const int64_t n_in = numel(in_shape);
    if (n_out == n_in && in_shape.size() <= out_shape.size()) {
        // No replication, plain accumulate.
        for (int64_t i = 0; i < n_in; ++i) dst[i] += src[i];
        return;
    }
    const auto in_strides = broadcast_strides(in_shape, out_shape);
    std::vector<int64_t> out_strides(out_shape.size());
    int64_t s = 1;
    for (int i = int(out_shape.size()) - 1; i >= 0; --i) {
        out_strides[size_t(i)] = s;
        s *= out_shape[size_t(i)];
    }
    // For every output element, find its input slot; accumulate sequentially.
    std::vector<int> idx(out_shape.size(), 0);
    for (int64_t o = 0; o < n_out; ++o) {
        int64_t in_off = 0;
        int64_t rem = o;
        for (size_t d = 0; d < out_shape.size(); ++d) {
            const int64_t c = rem / out_strides[d];
            rem %= out_strides[d];
            in_off += c * in_strides[d];
        }
        dst[in_off] += src[o];
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops with numpy-style broadcasting.
// ---------------------------------------------------------------------------

template <class Real, class Fwd, class Bwd>
TensorT<Real> binary_op(const TensorT<Real>& a, const TensorT<Real>& b, Fwd fwd, Bwd bwd,
                        const char* name) {
    const Shape out_shape = detail::broadcast_shape(a.shape(), b.shape());
    auto n = detail::make_node<Real>(out_shape, {a.node(), b.node()});
    const auto sa = detail::broadcast_strides(a.shape(), out_shape);
    const auto sb = detail::broadcast_strides(b.shape(), out_shape);
    const int64_t total = numel(out_shape);

    std::vector<int64_t> out_strides(out_shape.size());
    int64_t s = 1;
    for (int i = int(out_shape.size()) - 1; i >= 0; --i) {
        out_strides[size_t(i)] = s;
        s *= out_shape[size_t(i)];
    }
    const bool same_shape = a.shape() == b.shape();

    const Real* pa = a.data().data();
    const Real* pb = b.data().data();
    Real* po = n->value.data();
    if (same_shape) {
#pragma omp parallel for schedule(static) if (total > 16384)
        for (int64_t i = 0; i < total; ++i) po[i] = fwd(pa[i], pb[i]);
    } else {
#pragma omp parallel for schedule(static) if (total > 16384)
        for (int64_t i = 0; i < total; ++i) {
            int64_t oa = 0, ob = 0, rem = i;
            for (size_t d = 0; d < out_shape.size(); ++d) {
                const int64_t c = rem / out_strides[d];
                rem %= out_strides[d];
                oa += c * sa[d];
                ob += c * sb[d];
            }
            po[i] = fwd(pa[oa], pb[ob]);
        }
    }
    AVA_CHECK_FINITE(*n, name);

    if (n->requires_grad) {
        Shape ash = a.shape(), bsh = b.shape();
        n->backprop = [fwd, bwd, ash, bsh, out_shape, out_strides, sa, sb,
                       same_shape](Node<Real>& self) {
            auto& pa_n = *self.parents[0];
            auto& pb_n = *self.parents[1];
            const Real* va = pa_n.value.data();
            const Real* vb = pb_n.value.data();
            const Real* g = self.grad.data();
            const int64_t total = int64_t(self.value.size());
            if (same_shape) {
                // No broadcasting: every output element owns one (a, b) pair,
                // so gradients accumulate in place without staging.
                Real* gpa = pa_n.requires_grad ? pa_n.grad.data() : nullptr;
                Real* gpb = pb_n.requires_grad ? pb_n.grad.data() : nullptr;
#pragma omp parallel for schedule(static) if (total > 16384)
                for (int64_t i = 0; i < total; ++i) {
                    Real da, db;
                    bwd(va[i], vb[i], g[i], da, db);
                    if (gpa) gpa[i] += da;
                    if (gpb) gpb[i] += db;
                }
                return;
            }
            // Stage per-input gradients in out-shape, then reduce.
            std::vector<Real> ga(static_cast<size_t>(total)), gb(static_cast<size_t>(total));
#pragma omp parallel for schedule(static) if (total > 16384)
            for (int64_t i = 0; i < total; ++i) {
                int64_t oa = 0, ob = 0, rem = i;
                for (size_t d = 0; d < out_shape.size(); ++d) {
                    const int64_t c = rem / out_strides[d];
                    rem %= out_strides[d];
                    oa += c * sa[d];
                    ob += c * sb[d];
                }
                Real da, db;
                bwd(va[oa], vb[ob], g[i], da, db);
                ga[size_t(i)] = da;
                gb[size_t(i)] = db;
            }
            if (pa_n.requires_grad) {
                detail::reduce_to(ga.data(), out_shape, pa_n.grad.data(), ash);
            }
            if (pb_n.requires_grad) {
                detail::reduce_to(gb.data(), out_shape, pb_n.grad.data(), bsh);
            }
        };
    }
    return TensorT<Real>(std::move(n));
}

template <class Real>
TensorT<Real> add(const TensorT<Real>& a, const TensorT<Real>& b) {
    return binary_op<Real>(
        a, b, [](Real x, Real y) { return x + y; },
        [](Real, Real, Real g, Real& da, Real& db) {
            da = g;
            db = g;
        },
        "add");
}

template <class Real>
TensorT<Real> sub(const TensorT<Real>& a, const TensorT<Real>& b) {
    return binary_op<Real>(
        a, b, [](Real x, Real y) { return x - y; },
        [](Real, Real, Real g, Real& da, Real& db) {
            da = g;
            db = -g;
        },
        "sub");
}

template <class Real>
TensorT<Real> mul(const TensorT<Real>& a, const TensorT<Real>& b) {
    return binary_op<Real>(
        a, b, [](Real x, Real y) { return x * y; },
        [](Real x, Real y, Real g, Real& da, Real& db) {
            da = g * y;
            db = g * x;
        },
        "mul");
}

template <class Real>
TensorT<Real> operator+(const TensorT<Real>& a, const TensorT<Real>& b) { return add(a, b); }
template <class Real>
TensorT<Real> operator-(const TensorT<Real>& a, const TensorT<Real>& b) { return sub(a, b); }
template <class Real>
TensorT<Real> operator*(const TensorT<Real>& a, const TensorT<Real>& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// Elementwise unary ops.
// ---------------------------------------------------------------------------

template <class Real, class Fwd, class Bwd>
TensorT<Real> unary_op(const TensorT<Real>& a, Fwd fwd, Bwd bwd, const char* name) {
    auto n = detail::make_node<Real>(a.shape(), {a.node()});
    const Real* pa = a.data().data();
    Real* po = n->value.data();
    const int64_t total = a.size();
#pragma omp parallel for schedule(static) if (total > 16384)
    for (int64_t i = 0; i < total; ++i) po[i] = fwd(pa[i]);
    AVA_CHECK_FINITE(*n, name);

    if (n->requires_grad) {
        n->backprop = [bwd](Node<Real>& self) {
            auto& p = *self.parents[0];
            const Real* x = p.value.data();
            const Real* y = self.value.data();
            const Real* g = self.grad.data();
            Real* gx = p.grad.data();
            const int64_t total = int64_t(self.value.size());
#pragma omp parallel for schedule(static) if (total > 16384)
            for (int64_t i = 0; i < total; ++i) gx[i] += bwd(x[i], y[i], g[i]);
        };
    }
    return TensorT<Real>(std::move(n));
}

template <class Real>
TensorT<Real> scale(const TensorT<Real>& a, Real c) {
    return unary_op<Real>(
        a, [c](Real x) { return x * c; }, [c](Real, Real, Real g) { return g * c; }, "scale");
}

template <class Real>
TensorT<Real> add_scalar(const TensorT<Real>& a, Real c) {
    return unary_op<Real>(
        a, [c](Real x) { return x + c; }, [](Real, Real, Real g) { return g; }, "add_scalar");
}

template <class Real>
TensorT<Real> square(const TensorT<Real>& a) {
    return unary_op<Real>(
        a, [](Real x) { return x * x; }, [](Real x, Real, Real g) { return g * Real(2) * x; },
        "square");
}

template <class Real>
TensorT<Real> sigmoid(const TensorT<Real>& a) {
    return unary_op<Real>(
        a,
        [](Real x) {
            // Stable in both tails.
            if (x >= Real(0)) {
                const Real e = std::exp(-x);
                return Real(1) / (Real(1) + e);
            }
            const Real e = std::exp(x);
            return e / (Real(1) + e);
        },
        [](Real, Real y, Real g) { return g * y * (Real(1) - y); }, "sigmoid");
}

template <class Real>
TensorT<Real> gelu(const TensorT<Real>& a) {
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    return unary_op<Real>(
        a,
        [](Real x) {
            return Real(0.5) * x * Real(1.0 + std::erf(double(x) * kInvSqrt2));
        },
        [](Real x, Real, Real g) {
            const double cdf = 0.5 * (1.0 + std::erf(double(x) * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * double(x) * double(x));
            return g * Real(cdf + double(x) * pdf);
        },
        "gelu");
}

template <class Real>
TensorT<Real> relu(const TensorT<Real>& a) {
    return unary_op<Real>(
        a, [](Real x) { return x > Real(0) ? x : Real(0); },
        [](Real x, Real, Real g) { return x > Real(0) ? g : Real(0); }, "relu");
}

}  // namespace ava::diffcore
