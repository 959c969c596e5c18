// Copyright 2026 the sfir authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "sfir/common.hpp"

// Minimal dense-tensor engine with a reverse-mode tape. Templated on the
// scalar so training runs in f32 while gradient-check harnesses instantiate
// the same graph in f64.

namespace sfir::ad {

template <typename S>
struct TensorT {
    std::vector<int> shape;
    std::vector<S> data;

    TensorT() = default;
    explicit TensorT(std::vector<int> shp, S fill = S(0))
        : shape(std::move(shp)), data(checked_numel(shape), fill) {}
    TensorT(std::vector<int> shp, std::vector<S> d)
        : shape(std::move(shp)), data(std::move(d)) {
        SFIR_CHECK(data.size() == checked_numel(shape), "tensor data length != shape product");
    }

    static TensorT zeros(std::vector<int> shp) { return TensorT(std::move(shp)); }
    static TensorT full(std::vector<int> shp, S v) { return TensorT(std::move(shp), v); }
    static TensorT scalar(S v) { return TensorT({1}, std::vector<S>{v}); }

    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    size_t numel() const { return data.size(); }

    template <typename T>
    TensorT<T> cast() const {
        TensorT<T> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
        return out;
    }

    static size_t checked_numel(const std::vector<int>& shp) {
        size_t n = 1;
        for (int d : shp) {
            SFIR_CHECK(d > 0, "tensor dims must be positive");
            n *= static_cast<size_t>(d);
        }
        return n;
    }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "{";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "}";
    return os.str();
}

// ---------------------------------------------------------------------------
// GEMM kernels. Plain loops arranged so the inner loop is contiguous; the
// compiler vectorizes these. C is accumulated into, never overwritten.

// C[M,N] += A[M,K] * B[K,N]
template <typename S>
void gemm_nn(int M, int N, int K, const S* A, const S* B, S* C) {
    for (int i = 0; i < M; ++i) {
        const S* a = A + static_cast<size_t>(i) * K;
        S* c = C + static_cast<size_t>(i) * N;
        for (int k = 0; k < K; ++k) {
            const S av = a[k];
            const S* b = B + static_cast<size_t>(k) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// C[M,N] += A[M,K] * B^T, B stored [N,K]
template <typename S>
void gemm_nt(int M, int N, int K, const S* A, const S* B, S* C) {
    for (int i = 0; i < M; ++i) {
        const S* a = A + static_cast<size_t>(i) * K;
        S* c = C + static_cast<size_t>(i) * N;
        for (int j = 0; j < N; ++j) {
            const S* b = B + static_cast<size_t>(j) * K;
            S acc = 0;
            for (int k = 0; k < K; ++k) acc += a[k] * b[k];
            c[j] += acc;
        }
    }
}

// C[M,N] += A^T * B, A stored [K,M], B stored [K,N]
template <typename S>
void gemm_tn(int M, int N, int K, const S* A, const S* B, S* C) {
    for (int k = 0; k < K; ++k) {
        const S* a = A + static_cast<size_t>(k) * M;
        const S* b = B + static_cast<size_t>(k) * N;
        for (int i = 0; i < M; ++i) {
            const S av = a[i];
            S* c = C + static_cast<size_t>(i) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// ---------------------------------------------------------------------------
// Tape

template <typename S>
struct NodeT {
    TensorT<S> value;
    TensorT<S> grad;  // allocated on first accumulation
    bool requires_grad = false;
    bool grad_touched = false;
    std::vector<std::shared_ptr<NodeT<S>>> inputs;
    std::function<void()> backward_fn;  // reads this->grad, accumulates into inputs
    const char* op = "leaf";

    TensorT<S>& ensure_grad() {
        if (grad.data.empty()) grad = TensorT<S>::zeros(value.shape);
        grad_touched = true;
        return grad;
    }
};

template <typename S>
using NodePtr = std::shared_ptr<NodeT<S>>;

template <typename S>
class VarT {
public:
    VarT() = default;

    static VarT leaf(TensorT<S> t, bool requires_grad = false) {
        VarT v;
        v.n_ = std::make_shared<NodeT<S>>();
        v.n_->value = std::move(t);
        v.n_->requires_grad = requires_grad;
        return v;
    }
    static VarT constant(TensorT<S> t) { return leaf(std::move(t), false); }

    bool defined() const { return static_cast<bool>(n_); }
    const TensorT<S>& value() const { return n_->value; }
    TensorT<S>& value() { return n_->value; }
    const TensorT<S>& grad() const { return n_->grad; }
    bool requires_grad() const { return n_->requires_grad; }
    NodePtr<S> node() const { return n_; }

    void zero_grad() {
        std::fill(n_->grad.data.begin(), n_->grad.data.end(), S(0));
        n_->grad_touched = false;
    }

private:
    NodePtr<S> n_;
};

/// While alive, ops record no tape: outputs never require gradients.
/// Inference paths use this to avoid graph bookkeeping.
class NoGradGuard {
public:
    NoGradGuard() { ++depth(); }
    ~NoGradGuard() { --depth(); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
    static bool active() { return depth() > 0; }

private:
    static int& depth() {
        thread_local int d = 0;
        return d;
    }
};

namespace detail {

template <typename S>
VarT<S> make_op(const char* op, TensorT<S> value, std::vector<NodePtr<S>> inputs,
                std::function<void()> backward_fn) {
    bool needs = false;
    if (!NoGradGuard::active())
        for (const auto& in : inputs)
            if (in->requires_grad) needs = true;
    VarT<S> out = VarT<S>::leaf(std::move(value), needs);
    out.node()->op = op;
    if (needs) {
        out.node()->inputs = std::move(inputs);
        out.node()->backward_fn = std::move(backward_fn);
    }
    return out;
}

template <typename S>
void check_same_shape(const char* op, const TensorT<S>& a, const TensorT<S>& b) {
    SFIR_CHECK(a.shape == b.shape, std::string(op) + ": shape mismatch " +
                                       shape_str(a.shape) + " vs " + shape_str(b.shape));
}

}  // namespace detail

/// Reverse sweep from a scalar root. Gradients of every visited node are
/// checked finite afterwards; NaN/Inf is a hard error.
template <typename S>
void backward(const VarT<S>& root) {
    SFIR_CHECK(root.value().numel() == 1, "backward: root must be scalar");
    if (!root.requires_grad()) return;

    // Iterative post-order DFS over the requires_grad subgraph.
    std::vector<NodeT<S>*> order;
    std::unordered_set<NodeT<S>*> visited;
    std::vector<std::pair<NodeT<S>*, size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->inputs.size()) {
            NodeT<S>* child = node->inputs[next_child++].get();
            if (child->requires_grad && visited.insert(child).second)
                stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->ensure_grad().data[0] = S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeT<S>* n = *it;
        if (n->backward_fn && n->grad_touched) n->backward_fn();
    }

    for (NodeT<S>* n : order) {
        for (S g : n->grad.data)
            SFIR_CHECK(std::isfinite(static_cast<double>(g)),
                       std::string("backward: non-finite gradient in op '") + n->op + "'");
    }
}

// ---------------------------------------------------------------------------
// Elementwise and shape ops

template <typename S>
VarT<S> add(const VarT<S>& a, const VarT<S>& b) {
    detail::check_same_shape("add", a.value(), b.value());
    TensorT<S> out = a.value();
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] += b.value().data[i];
    auto an = a.node(), bn = b.node();
    VarT<S> y = detail::make_op<S>("add", std::move(out), {an, bn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad())
        yn->backward_fn = [yn, an = an.get(), bn = bn.get()] {
            const auto& g = yn->grad.data;
            if (an->requires_grad) {
                auto& ga = an->ensure_grad().data;
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad().data;
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        };
    return y;
}

template <typename S>
VarT<S> sub(const VarT<S>& a, const VarT<S>& b) {
    detail::check_same_shape("sub", a.value(), b.value());
    TensorT<S> out = a.value();
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] -= b.value().data[i];
    auto an = a.node(), bn = b.node();
    VarT<S> y = detail::make_op<S>("sub", std::move(out), {an, bn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad())
        yn->backward_fn = [yn, an = an.get(), bn = bn.get()] {
            const auto& g = yn->grad.data;
            if (an->requires_grad) {
                auto& ga = an->ensure_grad().data;
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad().data;
                for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        };
    return y;
}

template <typename S>
VarT<S> mul(const VarT<S>& a, const VarT<S>& b) {
    detail::check_same_shape("mul", a.value(), b.value());
    TensorT<S> out = a.value();
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] *= b.value().data[i];
    auto an = a.node(), bn = b.node();
    VarT<S> y = detail::make_op<S>("mul", std::move(out), {an, bn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad())
        yn->backward_fn = [yn, an = an.get(), bn = bn.get()] {
            const auto& g = yn->grad.data;
            if (an->requires_grad) {
                auto& ga = an->ensure_grad().data;
                const auto& bv = bn->value.data;
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
            }
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad().data;
                const auto& av = an->value.data;
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
            }
        };
    return y;
}

/// y = alpha * x + beta, elementwise with scalar coefficients.
template <typename S>
VarT<S> affine(const VarT<S>& x, S alpha, S beta) {
    TensorT<S> out = x.value();
    for (auto& v : out.data) v = alpha * v + beta;
    auto xn = x.node();
    VarT<S> y = detail::make_op<S>("affine", std::move(out), {xn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad())
        yn->backward_fn = [yn, xn = xn.get(), alpha] {
            auto& gx = xn->ensure_grad().data;
            const auto& g = yn->grad.data;
            for (size_t i = 0; i < g.size(); ++i) gx[i] += alpha * g[i];
        };
    return y;
}

/// y[i, j] = x[i, j] + b[j] for x [N,F], b [F].
template <typename S>
VarT<S> add_rowvec(const VarT<S>& x, const VarT<S>& b) {
    SFIR_CHECK(x.value().rank() >= 1 && b.value().rank() == 1 &&
                   x.value().shape.back() == b.value().dim(0),
               "add_rowvec: last dim of " + shape_str(x.value().shape) +
                   " must match " + shape_str(b.value().shape));
    const int f = b.value().dim(0);
    const size_t rows = x.value().numel() / static_cast<size_t>(f);
    TensorT<S> out = x.value();
    for (size_t r = 0; r < rows; ++r)
        for (int j = 0; j < f; ++j) out.data[r * f + j] += b.value().data[j];
    auto xn = x.node(), bn = b.node();
    VarT<S> y = detail::make_op<S>("add_rowvec", std::move(out), {xn, bn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad())
        yn->backward_fn = [yn, xn = xn.get(), bn = bn.get(), rows, f] {
            const auto& g = yn->grad.data;
            if (xn->requires_grad) {
                auto& gx = xn->ensure_grad().data;
                for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            }
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad().data;
                for (size_t r = 0; r < rows; ++r)
                    for (int j = 0; j < f; ++j) gb[j] += g[r * f + j];
            }
        };
    return y;
}

template <typename S, typename Fwd, typename Bwd>
VarT<S> unary_op(const char* name, const VarT<S>& x, Fwd fwd, Bwd dydx) {
    TensorT<S> out = x.value();
    for (auto& v : out.data) v = fwd(v);
    auto xn = x.node();
    VarT<S> y = detail::make_op<S>(name, std::move(out), {xn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad())
        yn->backward_fn = [yn, xn = xn.get(), dydx] {
            auto& gx = xn->ensure_grad().data;
            const auto& g = yn->grad.data;
            const auto& xv = xn->value.data;
            const auto& yv = yn->value.data;
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dydx(xv[i], yv[i]);
        };
    return y;
}

template <typename S>
VarT<S> exp(const VarT<S>& x) {
    return unary_op<S>(
        "exp", x, [](S v) { return std::exp(v); }, [](S, S y) { return y; });
}

template <typename S>
VarT<S> log(const VarT<S>& x) {
    for (S v : x.value().data)
        SFIR_CHECK(v > S(0), "log: input must be positive");
    return unary_op<S>(
        "log", x, [](S v) { return std::log(v); }, [](S v, S) { return S(1) / v; });
}

template <typename S>
VarT<S> abs(const VarT<S>& x) {
    return unary_op<S>(
        "abs", x, [](S v) { return std::abs(v); },
        [](S v, S) { return v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)); });
}

template <typename S>
VarT<S> clamp(const VarT<S>& x, S lo, S hi) {
    return unary_op<S>(
        "clamp", x, [lo, hi](S v) { return std::clamp(v, lo, hi); },
        [lo, hi](S v, S) { return (v > lo && v < hi) ? S(1) : S(0); });
}

template <typename S>
VarT<S> sigmoid(const VarT<S>& x) {
    return unary_op<S>(
        "sigmoid", x, [](S v) { return S(1) / (S(1) + std::exp(-v)); },
        [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
VarT<S> gelu(const VarT<S>& x) {
    static constexpr double kInvSqrt2 = 0.7071067811865476;
    static constexpr double kInvSqrt2Pi = 0.3989422804014327;
    return unary_op<S>(
        "gelu", x,
        [](S v) {
            return static_cast<S>(0.5 * static_cast<double>(v) *
                                  (1.0 + std::erf(static_cast<double>(v) * kInvSqrt2)));
        },
        [](S v, S) {
            const double vd = static_cast<double>(v);
            return static_cast<S>(0.5 * (1.0 + std::erf(vd * kInvSqrt2)) +
                                  vd * kInvSqrt2Pi * std::exp(-0.5 * vd * vd));
        });
}

template <typename S>
VarT<S> sum(const VarT<S>& x) {
    S acc = 0;
    for (S v : x.value().data) acc += v;
    auto xn = x.node();
    VarT<S> y = detail::make_op<S>("sum", TensorT<S>::scalar(acc), {xn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad())
        yn->backward_fn = [yn, xn = xn.get()] {
            auto& gx = xn->ensure_grad().data;
            const S g = yn->grad.data[0];
            for (auto& v : gx) v += g;
        };
    return y;
}

template <typename S>
VarT<S> mean(const VarT<S>& x) {
    const S inv_n = S(1) / static_cast<S>(x.value().numel());
    return affine(sum(x), inv_n, S(0));
}

template <typename S>
VarT<S> reshape(const VarT<S>& x, std::vector<int> new_shape) {
    SFIR_CHECK(TensorT<S>::checked_numel(new_shape) == x.value().numel(),
               "reshape: element count mismatch " + shape_str(x.value().shape) + " -> " +
                   shape_str(new_shape));
    TensorT<S> out;
    out.shape = std::move(new_shape);
    out.data = x.value().data;
    auto xn = x.node();
    VarT<S> y = detail::make_op<S>("reshape", std::move(out), {xn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad())
        yn->backward_fn = [yn, xn = xn.get()] {
            auto& gx = xn->ensure_grad().data;
            const auto& g = yn->grad.data;
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        };
    return y;
}

namespace detail {

inline std::vector<size_t> strides_of(const std::vector<int>& shape) {
    std::vector<size_t> st(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        st[i] = st[i + 1] * static_cast<size_t>(shape[i + 1]);
    return st;
}

// out[c0,..,cr] (+)= in[c mapped through axes], i.e. out dim d walks in dim
// axes[d]. Shared by permute forward and its backward (accumulating) pass.
template <typename S>
void permute_copy(const TensorT<S>& in, const std::vector<int>& axes, TensorT<S>& out,
                  bool accumulate) {
    const auto in_strides = strides_of(in.shape);
    const auto out_strides = strides_of(out.shape);
    const int r = in.rank();
    std::function<void(int, size_t, size_t)> walk = [&](int d, size_t in_off, size_t out_off) {
        if (d == r) {
            if (accumulate)
                out.data[out_off] += in.data[in_off];
            else
                out.data[out_off] = in.data[in_off];
            return;
        }
        for (int i = 0; i < out.shape[d]; ++i)
            walk(d + 1, in_off + static_cast<size_t>(i) * in_strides[axes[d]],
                 out_off + static_cast<size_t>(i) * out_strides[d]);
    };
    walk(0, 0, 0);
}

}  // namespace detail

/// y.shape[d] = x.shape[axes[d]]; y[c] = x[c mapped through axes].
template <typename S>
VarT<S> permute(const VarT<S>& x, std::vector<int> axes) {
    const int r = x.value().rank();
    SFIR_CHECK(static_cast<int>(axes.size()) == r, "permute: axes rank mismatch");
    std::vector<int> seen(static_cast<size_t>(r), 0);
    for (int a : axes) {
        SFIR_CHECK(a >= 0 && a < r && !seen[a], "permute: axes must be a permutation");
        seen[a] = 1;
    }
    TensorT<S> out;
    out.shape.resize(static_cast<size_t>(r));
    for (int d = 0; d < r; ++d) out.shape[d] = x.value().shape[axes[d]];
    out.data.resize(x.value().numel());
    detail::permute_copy(x.value(), axes, out, false);

    auto xn = x.node();
    VarT<S> y = detail::make_op<S>("permute", std::move(out), {xn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad()) {
        std::vector<int> inv(static_cast<size_t>(r));
        for (int d = 0; d < r; ++d) inv[axes[d]] = d;
        yn->backward_fn = [yn, xn = xn.get(), inv] {
            auto& gx = xn->ensure_grad();
            detail::permute_copy(yn->grad, inv, gx, true);
        };
    }
    return y;
}

/// y[i, :] = x[idx[i], :] for x [N,F]. Backward scatter-adds.
template <typename S>
VarT<S> gather_rows(const VarT<S>& x, std::vector<int> idx) {
    SFIR_CHECK(x.value().rank() == 2, "gather_rows: input must be 2-D");
    const int n = x.value().dim(0), f = x.value().dim(1);
    for (int i : idx) SFIR_CHECK(i >= 0 && i < n, "gather_rows: index out of range");
    TensorT<S> out({static_cast<int>(idx.size()), f});
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy_n(x.value().data.begin() + static_cast<size_t>(idx[r]) * f, f,
                    out.data.begin() + r * f);
    auto xn = x.node();
    VarT<S> y = detail::make_op<S>("gather_rows", std::move(out), {xn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad())
        yn->backward_fn = [yn, xn = xn.get(), idx = std::move(idx), f] {
            auto& gx = xn->ensure_grad().data;
            const auto& g = yn->grad.data;
            for (size_t r = 0; r < idx.size(); ++r)
                for (int j = 0; j < f; ++j)
                    gx[static_cast<size_t>(idx[r]) * f + j] += g[r * f + j];
        };
    return y;
}

// ---------------------------------------------------------------------------
// Matrix ops

template <typename S>
VarT<S> matmul(const VarT<S>& a, const VarT<S>& b) {
    SFIR_CHECK(a.value().rank() == 2 && b.value().rank() == 2 &&
                   a.value().dim(1) == b.value().dim(0),
               "matmul: incompatible shapes " + shape_str(a.value().shape) + " x " +
                   shape_str(b.value().shape));
    const int m = a.value().dim(0), k = a.value().dim(1), n = b.value().dim(1);
    TensorT<S> out({m, n});
    gemm_nn(m, n, k, a.value().data.data(), b.value().data.data(), out.data.data());
    auto an = a.node(), bn = b.node();
    VarT<S> y = detail::make_op<S>("matmul", std::move(out), {an, bn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad())
        yn->backward_fn = [yn, an = an.get(), bn = bn.get(), m, k, n] {
            const S* g = yn->grad.data.data();
            if (an->requires_grad)
                gemm_nt(m, k, n, g, bn->value.data.data(), an->ensure_grad().data.data());
            if (bn->requires_grad)
                gemm_tn(k, n, m, an->value.data.data(), g, bn->ensure_grad().data.data());
        };
    return y;
}

/// Batched matmul: a [B,M,K] x b [B,K,N] -> [B,M,N].
template <typename S>
VarT<S> bmm(const VarT<S>& a, const VarT<S>& b) {
    SFIR_CHECK(a.value().rank() == 3 && b.value().rank() == 3 &&
                   a.value().dim(0) == b.value().dim(0) && a.value().dim(2) == b.value().dim(1),
               "bmm: incompatible shapes " + shape_str(a.value().shape) + " x " +
                   shape_str(b.value().shape));
    const int bs = a.value().dim(0), m = a.value().dim(1), k = a.value().dim(2),
              n = b.value().dim(2);
    TensorT<S> out({bs, m, n});
    for (int i = 0; i < bs; ++i)
        gemm_nn(m, n, k, a.value().data.data() + static_cast<size_t>(i) * m * k,
                b.value().data.data() + static_cast<size_t>(i) * k * n,
                out.data.data() + static_cast<size_t>(i) * m * n);
    auto an = a.node(), bn = b.node();
    VarT<S> y = detail::make_op<S>("bmm", std::move(out), {an, bn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad())
        yn->backward_fn = [yn, an = an.get(), bn = bn.get(), bs, m, k, n] {
            for (int i = 0; i < bs; ++i) {
                const S* g = yn->grad.data.data() + static_cast<size_t>(i) * m * n;
                if (an->requires_grad)
                    gemm_nt(m, k, n, g, bn->value.data.data() + static_cast<size_t>(i) * k * n,
                            an->ensure_grad().data.data() + static_cast<size_t>(i) * m * k);
                if (bn->requires_grad)
                    gemm_tn(k, n, m, an->value.data.data() + static_cast<size_t>(i) * m * k, g,
                            bn->ensure_grad().data.data() + static_cast<size_t>(i) * k * n);
            }
        };
    return y;
}

// ---------------------------------------------------------------------------
// Row-structured ops (last axis treated as the feature/class axis)

template <typename S>
VarT<S> softmax_lastdim(const VarT<S>& x) {
    SFIR_CHECK(x.value().rank() >= 1, "softmax: needs at least rank 1");
    const int c = x.value().shape.back();
    const size_t rows = x.value().numel() / static_cast<size_t>(c);
    TensorT<S> out = x.value();
    for (size_t r = 0; r < rows; ++r) {
        S* row = out.data.data() + r * c;
        S mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        S denom = 0;
        for (int j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - mx);
            denom += row[j];
        }
        const S inv = S(1) / denom;
        for (int j = 0; j < c; ++j) row[j] *= inv;
    }
    auto xn = x.node();
    VarT<S> y = detail::make_op<S>("softmax", std::move(out), {xn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad())
        yn->backward_fn = [yn, xn = xn.get(), rows, c] {
            auto& gx = xn->ensure_grad().data;
            const auto& g = yn->grad.data;
            const auto& yv = yn->value.data;
            for (size_t r = 0; r < rows; ++r) {
                const size_t off = r * c;
                S dot = 0;
                for (int j = 0; j < c; ++j) dot += g[off + j] * yv[off + j];
                for (int j = 0; j < c; ++j) gx[off + j] += (g[off + j] - dot) * yv[off + j];
            }
        };
    return y;
}

/// Softmax along an arbitrary axis (permutes it to the back when needed).
template <typename S>
VarT<S> softmax(const VarT<S>& x, int axis) {
    const int r = x.value().rank();
    if (axis < 0) axis += r;
    SFIR_CHECK(axis >= 0 && axis < r, "softmax: axis out of range");
    if (axis == r - 1) return softmax_lastdim(x);
    std::vector<int> to_back, back;
    for (int d = 0; d < r; ++d)
        if (d != axis) to_back.push_back(d);
    to_back.push_back(axis);
    VarT<S> y = softmax_lastdim(permute(x, to_back));
    std::vector<int> inv(static_cast<size_t>(r));
    for (int d = 0; d < r; ++d) inv[to_back[d]] = d;
    return permute(y, inv);
}

template <typename S>
VarT<S> layer_norm(const VarT<S>& x, const VarT<S>& gain, const VarT<S>& bias,
                   S eps = S(1e-5)) {
    const int f = x.value().shape.back();
    SFIR_CHECK(gain.value().rank() == 1 && gain.value().dim(0) == f &&
                   bias.value().rank() == 1 && bias.value().dim(0) == f,
               "layer_norm: gain/bias must be vectors of the feature dim");
    const size_t rows = x.value().numel() / static_cast<size_t>(f);

    TensorT<S> out(x.value().shape);
    TensorT<S> xhat(x.value().shape);      // normalized activations, kept for backward
    std::vector<S> inv_std(rows);
    for (size_t r = 0; r < rows; ++r) {
        const S* row = x.value().data.data() + r * f;
        S mu = 0;
        for (int j = 0; j < f; ++j) mu += row[j];
        mu /= static_cast<S>(f);
        S var = 0;
        for (int j = 0; j < f; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<S>(f);
        const S is = S(1) / std::sqrt(var + eps);
        inv_std[r] = is;
        for (int j = 0; j < f; ++j) {
            const S xh = (row[j] - mu) * is;
            xhat.data[r * f + j] = xh;
            out.data[r * f + j] = xh * gain.value().data[j] + bias.value().data[j];
        }
    }
    auto xn = x.node(), gn = gain.node(), bn = bias.node();
    VarT<S> y = detail::make_op<S>("layer_norm", std::move(out), {xn, gn, bn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad())
        yn->backward_fn = [yn, xn = xn.get(), gn = gn.get(), bn = bn.get(),
                           xhat = std::move(xhat), inv_std = std::move(inv_std), rows, f] {
            const auto& g = yn->grad.data;
            for (size_t r = 0; r < rows; ++r) {
                const size_t off = r * f;
                if (xn->requires_grad) {
                    auto& gx = xn->ensure_grad().data;
                    S mean_u = 0, mean_ux = 0;
                    for (int j = 0; j < f; ++j) {
                        const S u = g[off + j] * gn->value.data[j];
                        mean_u += u;
                        mean_ux += u * xhat.data[off + j];
                    }
                    mean_u /= static_cast<S>(f);
                    mean_ux /= static_cast<S>(f);
                    for (int j = 0; j < f; ++j) {
                        const S u = g[off + j] * gn->value.data[j];
                        gx[off + j] +=
                            (u - mean_u - xhat.data[off + j] * mean_ux) * inv_std[r];
                    }
                }
                if (gn->requires_grad) {
                    auto& gg = gn->ensure_grad().data;
                    for (int j = 0; j < f; ++j) gg[j] += g[off + j] * xhat.data[off + j];
                }
                if (bn->requires_grad) {
                    auto& gb = bn->ensure_grad().data;
                    for (int j = 0; j < f; ++j) gb[j] += g[off + j];
                }
            }
        };
    return y;
}

/// Rows scaled to unit L2 norm. A zero row is a hard error.
template <typename S>
VarT<S> l2_normalize(const VarT<S>& x) {
    const int f = x.value().shape.back();
    const size_t rows = x.value().numel() / static_cast<size_t>(f);
    TensorT<S> out = x.value();
    std::vector<S> inv_norm(rows);
    for (size_t r = 0; r < rows; ++r) {
        S* row = out.data.data() + r * f;
        S nrm2 = 0;
        for (int j = 0; j < f; ++j) nrm2 += row[j] * row[j];
        SFIR_CHECK(nrm2 > S(0), "l2_normalize: zero-norm row");
        const S inv = S(1) / std::sqrt(nrm2);
        inv_norm[r] = inv;
        for (int j = 0; j < f; ++j) row[j] *= inv;
    }
    auto xn = x.node();
    VarT<S> y = detail::make_op<S>("l2_normalize", std::move(out), {xn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad())
        yn->backward_fn = [yn, xn = xn.get(), inv_norm = std::move(inv_norm), rows, f] {
            auto& gx = xn->ensure_grad().data;
            const auto& g = yn->grad.data;
            const auto& yv = yn->value.data;
            for (size_t r = 0; r < rows; ++r) {
                const size_t off = r * f;
                S dot = 0;
                for (int j = 0; j < f; ++j) dot += g[off + j] * yv[off + j];
                for (int j = 0; j < f; ++j)
                    gx[off + j] += (g[off + j] - yv[off + j] * dot) * inv_norm[r];
            }
        };
    return y;
}

/// Per-row log Sum_j mask[i,j] exp(x[i,j]), stabilized by the row max over
/// masked entries. mask is a non-differentiated 0/1 tensor; a row with no
/// masked entry is a hard error. Returns shape {N}.
template <typename S>
VarT<S> masked_lse(const VarT<S>& x, const TensorT<S>& mask) {
    SFIR_CHECK(x.value().rank() == 2, "masked_lse: input must be 2-D");
    SFIR_CHECK(mask.shape == x.value().shape, "masked_lse: mask shape mismatch");
    const int n = x.value().dim(0), c = x.value().dim(1);
    TensorT<S> out({n});
    for (int i = 0; i < n; ++i) {
        const S* row = x.value().data.data() + static_cast<size_t>(i) * c;
        const S* m = mask.data.data() + static_cast<size_t>(i) * c;
        S mx = -std::numeric_limits<S>::infinity();
        for (int j = 0; j < c; ++j)
            if (m[j] > S(0)) mx = std::max(mx, row[j]);
        SFIR_CHECK(std::isfinite(static_cast<double>(mx)), "masked_lse: empty mask row");
        S acc = 0;
        for (int j = 0; j < c; ++j)
            if (m[j] > S(0)) acc += std::exp(row[j] - mx);
        out.data[i] = mx + std::log(acc);
    }
    auto xn = x.node();
    VarT<S> y = detail::make_op<S>("masked_lse", std::move(out), {xn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad())
        yn->backward_fn = [yn, xn = xn.get(), mask, n, c] {
            auto& gx = xn->ensure_grad().data;
            const auto& g = yn->grad.data;
            const auto& lse = yn->value.data;
            const auto& xv = xn->value.data;
            for (int i = 0; i < n; ++i) {
                const size_t off = static_cast<size_t>(i) * c;
                for (int j = 0; j < c; ++j)
                    if (mask.data[off + j] > S(0))
                        gx[off + j] += g[i] * std::exp(xv[off + j] - lse[i]);
            }
        };
    return y;
}

// ---------------------------------------------------------------------------
// conv2d, 3x3 (any odd kernel), stride 1, zero 'same' padding, HWC layout.

namespace detail {

template <typename S>
void im2col(const TensorT<S>& x, int kh, int kw, std::vector<S>& cols) {
    const int h = x.dim(0), w = x.dim(1), cin = x.dim(2);
    const int ph = kh / 2, pw = kw / 2;
    cols.assign(static_cast<size_t>(h) * w * kh * kw * cin, S(0));
    size_t o = 0;
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    const int sy = y + ky - ph, sx = xx + kx - pw;
                    if (sy >= 0 && sy < h && sx >= 0 && sx < w)
                        std::copy_n(
                            x.data.begin() + (static_cast<size_t>(sy) * w + sx) * cin, cin,
                            cols.begin() + o);
                    o += static_cast<size_t>(cin);
                }
}

}  // namespace detail

template <typename S>
VarT<S> conv2d(const VarT<S>& x, const VarT<S>& kernel, const VarT<S>& bias) {
    SFIR_CHECK(x.value().rank() == 3 && kernel.value().rank() == 4,
               "conv2d: expects x [H,W,Cin], kernel [kh,kw,Cin,Cout]");
    const int h = x.value().dim(0), w = x.value().dim(1), cin = x.value().dim(2);
    const int kh = kernel.value().dim(0), kw = kernel.value().dim(1);
    const int kcin = kernel.value().dim(2), cout = kernel.value().dim(3);
    SFIR_CHECK(kcin == cin, "conv2d: channel mismatch " + shape_str(x.value().shape) +
                                " vs " + shape_str(kernel.value().shape));
    SFIR_CHECK(kh % 2 == 1 && kw % 2 == 1, "conv2d: kernel must be odd-sized");
    SFIR_CHECK(bias.value().rank() == 1 && bias.value().dim(0) == cout,
               "conv2d: bias must be [Cout]");

    auto cols = std::make_shared<std::vector<S>>();
    detail::im2col(x.value(), kh, kw, *cols);
    const int rows = h * w, k = kh * kw * cin;
    TensorT<S> out({h, w, cout});
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cout; ++c)
            out.data[static_cast<size_t>(r) * cout + c] = bias.value().data[c];
    gemm_nn(rows, cout, k, cols->data(), kernel.value().data.data(), out.data.data());

    auto xn = x.node(), kn = kernel.node(), bn = bias.node();
    VarT<S> y = detail::make_op<S>("conv2d", std::move(out), {xn, kn, bn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad())
        yn->backward_fn = [yn, xn = xn.get(), kn = kn.get(), bn = bn.get(), cols, h, w, cin,
                           kh, kw, cout] {
            const int rows = h * w, k = kh * kw * cin;
            const S* g = yn->grad.data.data();
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad().data;
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cout; ++c) gb[c] += g[static_cast<size_t>(r) * cout + c];
            }
            if (kn->requires_grad)
                gemm_tn(k, cout, rows, cols->data(), g, kn->ensure_grad().data.data());
            if (xn->requires_grad) {
                std::vector<S> dcols(static_cast<size_t>(rows) * k, S(0));
                gemm_nt(rows, k, cout, g, kn->value.data.data(), dcols.data());
                auto& gx = xn->ensure_grad().data;
                const int ph = kh / 2, pw = kw / 2;
                size_t o = 0;
                for (int y2 = 0; y2 < h; ++y2)
                    for (int x2 = 0; x2 < w; ++x2)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                const int sy = y2 + ky - ph, sx = x2 + kx - pw;
                                if (sy >= 0 && sy < h && sx >= 0 && sx < w) {
                                    S* dst = gx.data() + (static_cast<size_t>(sy) * w + sx) * cin;
                                    for (int c = 0; c < cin; ++c) dst[c] += dcols[o + c];
                                }
                                o += static_cast<size_t>(cin);
                            }
            }
        };
    return y;
}

// ---------------------------------------------------------------------------
// Convex upsampling: each fine pixel is a convex combination of the 3x3
// coarse neighborhood of its cell (edges replicated), with its own 9 weights.

namespace detail {

// Calls emit(weight_index, fine_base, coarse_base) for every (fine pixel,
// neighbor) pair; bases index the channel-0 element.
template <typename F>
void upsample_walk(int h, int w, int p, int c, F&& emit) {
    const int fw = w * p;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int di = 0; di < p; ++di)
                for (int dj = 0; dj < p; ++dj) {
                    const size_t wbase = ((static_cast<size_t>(i) * w + j) * p * p +
                                          static_cast<size_t>(di) * p + dj) * 9;
                    const size_t obase = (static_cast<size_t>(i * p + di) * fw +
                                          (j * p + dj)) * static_cast<size_t>(c);
                    for (int t = 0; t < 9; ++t) {
                        const int ni = std::clamp(i + t / 3 - 1, 0, h - 1);
                        const int nj = std::clamp(j + t % 3 - 1, 0, w - 1);
                        const size_t cbase =
                            (static_cast<size_t>(ni) * w + nj) * static_cast<size_t>(c);
                        emit(wbase + t, obase, cbase);
                    }
                }
}

}  // namespace detail

template <typename S>
VarT<S> convex_upsample(const VarT<S>& coarse, const VarT<S>& weights, int p) {
    SFIR_CHECK(coarse.value().rank() == 3 && weights.value().rank() == 3,
               "convex_upsample: expects coarse [h,w,C], weights [h,w,P*P*9]");
    const int h = coarse.value().dim(0), w = coarse.value().dim(1), c = coarse.value().dim(2);
    SFIR_CHECK(weights.value().dim(0) == h && weights.value().dim(1) == w &&
                   weights.value().dim(2) == p * p * 9,
               "convex_upsample: weights shape " + shape_str(weights.value().shape) +
                   " does not match coarse " + shape_str(coarse.value().shape) +
                   " with P=" + std::to_string(p));
    // Every 9-group must already be a convex combination.
    {
        const auto& wd = weights.value().data;
        const size_t groups = wd.size() / 9;
        for (size_t gidx = 0; gidx < groups; ++gidx) {
            S s = 0;
            for (int t = 0; t < 9; ++t) s += wd[gidx * 9 + t];
            SFIR_CHECK(std::abs(static_cast<double>(s) - 1.0) <= 1e-5,
                       "convex_upsample: weight group " + std::to_string(gidx) +
                           " sums to " + std::to_string(static_cast<double>(s)));
        }
    }

    const int fh = h * p, fw = w * p;
    TensorT<S> out({fh, fw, c});
    {
        const auto& cv = coarse.value().data;
        const auto& wv = weights.value().data;
        detail::upsample_walk(h, w, p, c, [&](size_t wi, size_t oi, size_t ci) {
            for (int ch = 0; ch < c; ++ch) out.data[oi + ch] += wv[wi] * cv[ci + ch];
        });
    }

    auto cn = coarse.node(), wn = weights.node();
    VarT<S> y = detail::make_op<S>("convex_upsample", std::move(out), {cn, wn}, nullptr);
    auto yn = y.node().get();
    if (y.requires_grad())
        yn->backward_fn = [yn, cn = cn.get(), wn = wn.get(), h, w, p, c] {
            const auto& g = yn->grad.data;
            const bool need_c = cn->requires_grad, need_w = wn->requires_grad;
            auto* gc = need_c ? &cn->ensure_grad().data : nullptr;
            auto* gw = need_w ? &wn->ensure_grad().data : nullptr;
            const auto& cv = cn->value.data;
            const auto& wv = wn->value.data;
            detail::upsample_walk(h, w, p, c, [&](size_t wi, size_t oi, size_t ci) {
                for (int ch = 0; ch < c; ++ch) {
                    if (need_c) (*gc)[ci + ch] += wv[wi] * g[oi + ch];
                    if (need_w) (*gw)[wi] += cv[ci + ch] * g[oi + ch];
                }
            });
        };
    return y;
}

using Tensor = TensorT<float>;
using Var = VarT<float>;

}  // namespace sfir::ad
