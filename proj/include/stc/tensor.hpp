#pragma once

// Reverse-mode autodiff on dense row-major tensors, templated on the scalar
// type: float for training, double for the high-precision mirror used by
// gradient checks. Graphs are shared_ptr DAGs; backward runs a deterministic
// DFS topological order so gradient accumulation order never varies.

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <unordered_set>
#include <utility>

#include "stc/common.hpp"

namespace stc {

template <class S>
struct NodeT {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<NodeT>> parents;
    std::function<void(NodeT&)> backward_fn;  // null for leaves
    const char* op = "leaf";

    int64_t size() const { return static_cast<int64_t>(value.size()); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), S(0));
    }
};

template <class S>
class TensorT {
public:
    TensorT() = default;
    explicit TensorT(std::shared_ptr<NodeT<S>> n) : n_(std::move(n)) {}

    static TensorT from(Shape shape, std::vector<S> data, bool requires_grad = false) {
        check(numel(shape) == static_cast<int64_t>(data.size()),
              "tensor: data size does not match shape " + shape_str(shape));
        auto n = std::make_shared<NodeT<S>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return TensorT(n);
    }

    static TensorT zeros(Shape shape, bool requires_grad = false) {
        std::vector<S> d(static_cast<size_t>(numel(shape)), S(0));
        return from(std::move(shape), std::move(d), requires_grad);
    }

    static TensorT full(Shape shape, S v, bool requires_grad = false) {
        std::vector<S> d(static_cast<size_t>(numel(shape)), v);
        return from(std::move(shape), std::move(d), requires_grad);
    }

    static TensorT scalar(S v) { return from({1}, {v}); }

    static TensorT uniform(Shape shape, Rng& rng, double lo, double hi,
                           bool requires_grad = false) {
        std::vector<S> d(static_cast<size_t>(numel(shape)));
        for (auto& x : d) x = static_cast<S>(rng.uniform(lo, hi));
        return from(std::move(shape), std::move(d), requires_grad);
    }

    static TensorT normal(Shape shape, Rng& rng, double mean, double stddev,
                          bool requires_grad = false) {
        std::vector<S> d(static_cast<size_t>(numel(shape)));
        for (auto& x : d) x = static_cast<S>(rng.normal(mean, stddev));
        return from(std::move(shape), std::move(d), requires_grad);
    }

    bool defined() const { return static_cast<bool>(n_); }
    const Shape& shape() const { return node()->shape; }
    int rank() const { return static_cast<int>(shape().size()); }
    int dim(int i) const { return shape()[static_cast<size_t>(i)]; }
    int64_t size() const { return node()->size(); }

    std::vector<S>& data() { return node()->value; }
    const std::vector<S>& data() const { return node()->value; }
    bool has_grad() const { return !node()->grad.empty(); }
    const std::vector<S>& grad() const {
        check(has_grad(), "tensor: gradient not populated");
        return node()->grad;
    }
    bool requires_grad() const { return node()->requires_grad; }
    void set_requires_grad(bool rg) { node()->requires_grad = rg; }
    void zero_grad() { node()->grad.clear(); }

    S item() const {
        check(size() == 1, "tensor: item() on non-scalar " + shape_str(shape()));
        return node()->value[0];
    }

    // constant copy, cut off from the graph
    TensorT detach() const { return from(shape(), data(), false); }

    NodeT<S>* node() const {
        check(static_cast<bool>(n_), "tensor: undefined");
        return n_.get();
    }
    const std::shared_ptr<NodeT<S>>& ptr() const { return n_; }

private:
    std::shared_ptr<NodeT<S>> n_;
};

using Tensor = TensorT<float>;

namespace detail {

template <class S>
void check_finite(const char* op, const TensorT<S>& t) {
    for (S v : t.data())
        if (!std::isfinite(static_cast<double>(v)))
            fail(std::string(op) + ": non-finite input value");
}

template <class S>
S* grad_of(const std::shared_ptr<NodeT<S>>& p) {
    p->ensure_grad();
    return p->grad.data();
}

template <class S>
TensorT<S> make_op(const char* op, Shape shape, std::vector<S>&& value,
                   std::vector<TensorT<S>> inputs,
                   std::function<void(NodeT<S>&)> bw) {
    auto n = std::make_shared<NodeT<S>>();
    n->op = op;
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool rg = false;
    for (auto& t : inputs) rg = rg || t.node()->requires_grad;
    n->requires_grad = rg;
    n->parents.reserve(inputs.size());
    for (auto& t : inputs) n->parents.push_back(t.ptr());
    if (rg) n->backward_fn = std::move(bw);
    return TensorT<S>(n);
}

// C(M,N) = opA(A) * opB(B), accumulating when acc is set.
// ta means A is stored (K,M); tb means B is stored (N,K).
template <class S>
void gemm(bool ta, bool tb, int M, int N, int K, const S* a, const S* b, S* c,
          bool acc) {
    if (!acc) std::fill(c, c + static_cast<size_t>(M) * N, S(0));
    if (!ta && !tb) {
        for (int i = 0; i < M; ++i) {
            const S* ai = a + static_cast<size_t>(i) * K;
            S* ci = c + static_cast<size_t>(i) * N;
            for (int k = 0; k < K; ++k) {
                S s = ai[k];
                const S* bk = b + static_cast<size_t>(k) * N;
                for (int j = 0; j < N; ++j) ci[j] += s * bk[j];
            }
        }
    } else if (!ta && tb) {
        for (int i = 0; i < M; ++i) {
            const S* ai = a + static_cast<size_t>(i) * K;
            S* ci = c + static_cast<size_t>(i) * N;
            for (int j = 0; j < N; ++j) {
                const S* bj = b + static_cast<size_t>(j) * K;
                S s = 0;
                for (int k = 0; k < K; ++k) s += ai[k] * bj[k];
                ci[j] += s;
            }
        }
    } else if (ta && !tb) {
        for (int k = 0; k < K; ++k) {
            const S* ak = a + static_cast<size_t>(k) * M;
            const S* bk = b + static_cast<size_t>(k) * N;
            for (int i = 0; i < M; ++i) {
                S s = ak[i];
                S* ci = c + static_cast<size_t>(i) * N;
                for (int j = 0; j < N; ++j) ci[j] += s * bk[j];
            }
        }
    } else {
        for (int i = 0; i < M; ++i) {
            S* ci = c + static_cast<size_t>(i) * N;
            for (int j = 0; j < N; ++j) {
                const S* bj = b + static_cast<size_t>(j) * K;
                S s = 0;
                for (int k = 0; k < K; ++k) s += a[static_cast<size_t>(k) * M + i] * bj[k];
                ci[j] += s;
            }
        }
    }
}

struct AxisSplit {
    int64_t outer = 1, axis = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& s, int axis) {
    check(axis >= 0 && axis < static_cast<int>(s.size()),
          "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    AxisSplit r;
    for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<size_t>(i)];
    r.axis = s[static_cast<size_t>(axis)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

}  // namespace detail

// ---- ops -------------------------------------------------------------------

// matmul with optional transposes and batch broadcasting:
// a is (M,K) or (B,M,K), b is (K,N) or (B,K,N); trans flags swap the stored
// last two dims. A 2D operand is broadcast over the other operand's batch.
template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b, bool trans_a = false,
                  bool trans_b = false) {
    detail::check_finite("matmul", a);
    detail::check_finite("matmul", b);
    int ra = a.rank(), rb = b.rank();
    check((ra == 2 || ra == 3) && (rb == 2 || rb == 3),
          "matmul: operands must be rank 2 or 3, got " + shape_str(a.shape()) +
              " and " + shape_str(b.shape()));
    int aB = ra == 3 ? a.dim(0) : 0;
    int bB = rb == 3 ? b.dim(0) : 0;
    if (aB && bB)
        check(aB == bB, "matmul: batch mismatch " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
    int M = trans_a ? a.dim(ra - 1) : a.dim(ra - 2);
    int Ka = trans_a ? a.dim(ra - 2) : a.dim(ra - 1);
    int Kb = trans_b ? b.dim(rb - 1) : b.dim(rb - 2);
    int N = trans_b ? b.dim(rb - 2) : b.dim(rb - 1);
    check(Ka == Kb, "matmul: inner dims disagree, " + shape_str(a.shape()) +
                        (trans_a ? "^T" : "") + " vs " + shape_str(b.shape()) +
                        (trans_b ? "^T" : ""));
    int B = std::max({aB, bB, 1});
    bool batched = aB || bB;
    Shape out_shape = batched ? Shape{B, M, N} : Shape{M, N};
    std::vector<S> out(static_cast<size_t>(numel(out_shape)));
    size_t sa = static_cast<size_t>(M) * Ka, sb = static_cast<size_t>(Ka) * N,
           sc = static_cast<size_t>(M) * N;
    const S* ap = a.data().data();
    const S* bp = b.data().data();
    for (int i = 0; i < B; ++i)
        detail::gemm(trans_a, trans_b, M, N, Ka, ap + (aB ? i * sa : 0),
                     bp + (bB ? i * sb : 0), out.data() + i * sc, false);
    int K = Ka;
    return detail::make_op<S>(
        "matmul", std::move(out_shape), std::move(out), {a, b},
        [trans_a, trans_b, aB, bB, B, M, N, K, sa, sb, sc](NodeT<S>& self) {
            auto& pa = self.parents[0];
            auto& pb = self.parents[1];
            const S* g = self.grad.data();
            const S* av = pa->value.data();
            const S* bv = pb->value.data();
            if (pa->requires_grad) {
                S* da = detail::grad_of(pa);
                for (int i = 0; i < B; ++i) {
                    const S* gi = g + i * sc;
                    const S* bi = bv + (bB ? i * sb : 0);
                    S* dai = da + (aB ? i * sa : 0);
                    if (!trans_a)
                        detail::gemm(false, !trans_b, M, K, N, gi, bi, dai, true);
                    else
                        detail::gemm(trans_b, true, K, M, N, bi, gi, dai, true);
                }
            }
            if (pb->requires_grad) {
                S* db = detail::grad_of(pb);
                for (int i = 0; i < B; ++i) {
                    const S* gi = g + i * sc;
                    const S* ai = av + (aB ? i * sa : 0);
                    S* dbi = db + (bB ? i * sb : 0);
                    if (!trans_b)
                        detail::gemm(!trans_a, false, K, N, M, ai, gi, dbi, true);
                    else
                        detail::gemm(true, trans_a, N, K, M, gi, ai, dbi, true);
                }
            }
        });
}

// add with right-aligned broadcast: b's shape must equal the trailing dims of
// a's (or be a single scalar).
template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_finite("add", a);
    detail::check_finite("add", b);
    int64_t bn = b.size();
    bool bc_ok = bn == 1;
    if (!bc_ok && b.rank() <= a.rank()) {
        bc_ok = true;
        for (int i = 0; i < b.rank(); ++i)
            bc_ok = bc_ok && b.dim(b.rank() - 1 - i) == a.dim(a.rank() - 1 - i);
    }
    check(bc_ok, "add: cannot broadcast " + shape_str(b.shape()) + " onto " +
                     shape_str(a.shape()));
    std::vector<S> out(a.data());
    const S* bp = b.data().data();
    int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] += bp[i % bn];
    return detail::make_op<S>(
        "add", a.shape(), std::move(out), {a, b}, [bn, n](NodeT<S>& self) {
            auto& pa = self.parents[0];
            auto& pb = self.parents[1];
            const S* g = self.grad.data();
            if (pa->requires_grad) {
                S* da = detail::grad_of(pa);
                for (int64_t i = 0; i < n; ++i) da[i] += g[i];
            }
            if (pb->requires_grad) {
                S* db = detail::grad_of(pb);
                for (int64_t i = 0; i < n; ++i) db[i % bn] += g[i];
            }
        });
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_finite("mul", a);
    detail::check_finite("mul", b);
    check(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
    int64_t n = a.size();
    std::vector<S> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        out[static_cast<size_t>(i)] = a.data()[static_cast<size_t>(i)] *
                                      b.data()[static_cast<size_t>(i)];
    return detail::make_op<S>(
        "mul", a.shape(), std::move(out), {a, b}, [n](NodeT<S>& self) {
            auto& pa = self.parents[0];
            auto& pb = self.parents[1];
            const S* g = self.grad.data();
            if (pa->requires_grad) {
                S* da = detail::grad_of(pa);
                const S* bv = pb->value.data();
                for (int64_t i = 0; i < n; ++i) da[i] += g[i] * bv[i];
            }
            if (pb->requires_grad) {
                S* db = detail::grad_of(pb);
                const S* av = pa->value.data();
                for (int64_t i = 0; i < n; ++i) db[i] += g[i] * av[i];
            }
        });
}

template <class S>
TensorT<S> scale(const TensorT<S>& a, double c) {
    detail::check_finite("scale", a);
    check(std::isfinite(c), "scale: non-finite factor");
    int64_t n = a.size();
    std::vector<S> out(static_cast<size_t>(n));
    S cs = static_cast<S>(c);
    for (int64_t i = 0; i < n; ++i)
        out[static_cast<size_t>(i)] = a.data()[static_cast<size_t>(i)] * cs;
    return detail::make_op<S>(
        "scale", a.shape(), std::move(out), {a}, [n, cs](NodeT<S>& self) {
            auto& pa = self.parents[0];
            if (!pa->requires_grad) return;
            S* da = detail::grad_of(pa);
            const S* g = self.grad.data();
            for (int64_t i = 0; i < n; ++i) da[i] += g[i] * cs;
        });
}

template <class S>
TensorT<S> neg(const TensorT<S>& a) {
    return scale(a, -1.0);
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    return add(a, neg(b));
}

template <class S>
TensorT<S> relu(const TensorT<S>& a) {
    detail::check_finite("relu", a);
    int64_t n = a.size();
    std::vector<S> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        out[static_cast<size_t>(i)] = std::max(S(0), a.data()[static_cast<size_t>(i)]);
    return detail::make_op<S>(
        "relu", a.shape(), std::move(out), {a}, [n](NodeT<S>& self) {
            auto& pa = self.parents[0];
            if (!pa->requires_grad) return;
            S* da = detail::grad_of(pa);
            const S* g = self.grad.data();
            const S* v = pa->value.data();
            for (int64_t i = 0; i < n; ++i)
                if (v[i] > S(0)) da[i] += g[i];
        });
}

template <class S>
TensorT<S> log(const TensorT<S>& a) {
    detail::check_finite("log", a);
    int64_t n = a.size();
    std::vector<S> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        S v = a.data()[static_cast<size_t>(i)];
        check(v > S(0), "log: non-positive input");
        out[static_cast<size_t>(i)] = std::log(v);
    }
    return detail::make_op<S>(
        "log", a.shape(), std::move(out), {a}, [n](NodeT<S>& self) {
            auto& pa = self.parents[0];
            if (!pa->requires_grad) return;
            S* da = detail::grad_of(pa);
            const S* g = self.grad.data();
            const S* v = pa->value.data();
            for (int64_t i = 0; i < n; ++i) da[i] += g[i] / v[i];
        });
}

template <class S>
TensorT<S> exp(const TensorT<S>& a) {
    detail::check_finite("exp", a);
    int64_t n = a.size();
    std::vector<S> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        out[static_cast<size_t>(i)] = std::exp(a.data()[static_cast<size_t>(i)]);
    return detail::make_op<S>(
        "exp", a.shape(), std::move(out), {a}, [n](NodeT<S>& self) {
            auto& pa = self.parents[0];
            if (!pa->requires_grad) return;
            S* da = detail::grad_of(pa);
            const S* g = self.grad.data();
            const S* y = self.value.data();
            for (int64_t i = 0; i < n; ++i) da[i] += g[i] * y[i];
        });
}

// softmax over the last axis with temperature: softmax(x / tau)
template <class S>
TensorT<S> softmax_t(const TensorT<S>& a, double tau) {
    detail::check_finite("softmax", a);
    check(tau > 0.0, "softmax: temperature must be positive");
    auto sp = detail::split_axis(a.shape(), a.rank() - 1);
    int64_t rows = sp.outer, d = sp.axis;
    std::vector<S> out(a.data().size());
    const S* x = a.data().data();
    for (int64_t r = 0; r < rows; ++r) {
        const S* xr = x + r * d;
        S* yr = out.data() + r * d;
        S mx = xr[0];
        for (int64_t i = 1; i < d; ++i) mx = std::max(mx, xr[i]);
        S sum = 0;
        for (int64_t i = 0; i < d; ++i) {
            yr[i] = std::exp(static_cast<S>((xr[i] - mx) / static_cast<S>(tau)));
            sum += yr[i];
        }
        for (int64_t i = 0; i < d; ++i) yr[i] /= sum;
    }
    return detail::make_op<S>(
        "softmax", a.shape(), std::move(out), {a}, [rows, d, tau](NodeT<S>& self) {
            auto& pa = self.parents[0];
            if (!pa->requires_grad) return;
            S* da = detail::grad_of(pa);
            const S* g = self.grad.data();
            const S* y = self.value.data();
            S inv_tau = static_cast<S>(1.0 / tau);
            for (int64_t r = 0; r < rows; ++r) {
                const S* gr = g + r * d;
                const S* yr = y + r * d;
                S dot = 0;
                for (int64_t i = 0; i < d; ++i) dot += gr[i] * yr[i];
                S* dr = da + r * d;
                for (int64_t i = 0; i < d; ++i)
                    dr[i] += (gr[i] - dot) * yr[i] * inv_tau;
            }
        });
}

// log(softmax(x / tau)), computed stably in one op
template <class S>
TensorT<S> log_softmax_t(const TensorT<S>& a, double tau) {
    detail::check_finite("log_softmax", a);
    check(tau > 0.0, "log_softmax: temperature must be positive");
    auto sp = detail::split_axis(a.shape(), a.rank() - 1);
    int64_t rows = sp.outer, d = sp.axis;
    std::vector<S> out(a.data().size());
    const S* x = a.data().data();
    for (int64_t r = 0; r < rows; ++r) {
        const S* xr = x + r * d;
        S* yr = out.data() + r * d;
        S mx = xr[0];
        for (int64_t i = 1; i < d; ++i) mx = std::max(mx, xr[i]);
        S sum = 0;
        for (int64_t i = 0; i < d; ++i) {
            yr[i] = static_cast<S>((xr[i] - mx) / static_cast<S>(tau));
            sum += std::exp(yr[i]);
        }
        S lse = std::log(sum);
        for (int64_t i = 0; i < d; ++i) yr[i] -= lse;
    }
    return detail::make_op<S>(
        "log_softmax", a.shape(), std::move(out), {a},
        [rows, d, tau](NodeT<S>& self) {
            auto& pa = self.parents[0];
            if (!pa->requires_grad) return;
            S* da = detail::grad_of(pa);
            const S* g = self.grad.data();
            const S* y = self.value.data();
            S inv_tau = static_cast<S>(1.0 / tau);
            for (int64_t r = 0; r < rows; ++r) {
                const S* gr = g + r * d;
                const S* yr = y + r * d;
                S gsum = 0;
                for (int64_t i = 0; i < d; ++i) gsum += gr[i];
                S* dr = da + r * d;
                for (int64_t i = 0; i < d; ++i)
                    dr[i] += (gr[i] - std::exp(yr[i]) * gsum) * inv_tau;
            }
        });
}

// layer norm over the last axis with learned gamma/beta
template <class S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gamma,
                      const TensorT<S>& beta, double eps = 1e-5) {
    detail::check_finite("layer_norm", x);
    detail::check_finite("layer_norm", gamma);
    detail::check_finite("layer_norm", beta);
    auto sp = detail::split_axis(x.shape(), x.rank() - 1);
    int64_t rows = sp.outer, d = sp.axis;
    check(gamma.rank() == 1 && gamma.dim(0) == d,
          "layer_norm: gamma shape " + shape_str(gamma.shape()) +
              " does not match feature dim " + std::to_string(d));
    check(beta.rank() == 1 && beta.dim(0) == d,
          "layer_norm: beta shape " + shape_str(beta.shape()) +
              " does not match feature dim " + std::to_string(d));
    std::vector<S> out(x.data().size());
    const S* xv = x.data().data();
    const S* gm = gamma.data().data();
    const S* bt = beta.data().data();
    for (int64_t r = 0; r < rows; ++r) {
        const S* xr = xv + r * d;
        S* yr = out.data() + r * d;
        S mu = 0;
        for (int64_t i = 0; i < d; ++i) mu += xr[i];
        mu /= static_cast<S>(d);
        S var = 0;
        for (int64_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
        var /= static_cast<S>(d);
        S inv = S(1) / std::sqrt(var + static_cast<S>(eps));
        for (int64_t i = 0; i < d; ++i) yr[i] = (xr[i] - mu) * inv * gm[i] + bt[i];
    }
    return detail::make_op<S>(
        "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
        [rows, d, eps](NodeT<S>& self) {
            auto& px = self.parents[0];
            auto& pg = self.parents[1];
            auto& pb = self.parents[2];
            const S* g = self.grad.data();
            const S* xv = px->value.data();
            const S* gm = pg->value.data();
            S* dx = px->requires_grad ? detail::grad_of(px) : nullptr;
            S* dg = pg->requires_grad ? detail::grad_of(pg) : nullptr;
            S* db = pb->requires_grad ? detail::grad_of(pb) : nullptr;
            std::vector<S> xh(static_cast<size_t>(d));
            for (int64_t r = 0; r < rows; ++r) {
                const S* xr = xv + r * d;
                const S* gr = g + r * d;
                S mu = 0;
                for (int64_t i = 0; i < d; ++i) mu += xr[i];
                mu /= static_cast<S>(d);
                S var = 0;
                for (int64_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
                var /= static_cast<S>(d);
                S inv = S(1) / std::sqrt(var + static_cast<S>(eps));
                for (int64_t i = 0; i < d; ++i) xh[static_cast<size_t>(i)] = (xr[i] - mu) * inv;
                if (dg)
                    for (int64_t i = 0; i < d; ++i) dg[i] += gr[i] * xh[static_cast<size_t>(i)];
                if (db)
                    for (int64_t i = 0; i < d; ++i) db[i] += gr[i];
                if (dx) {
                    S m1 = 0, m2 = 0;
                    for (int64_t i = 0; i < d; ++i) {
                        S dxh = gr[i] * gm[i];
                        m1 += dxh;
                        m2 += dxh * xh[static_cast<size_t>(i)];
                    }
                    m1 /= static_cast<S>(d);
                    m2 /= static_cast<S>(d);
                    S* dxr = dx + r * d;
                    for (int64_t i = 0; i < d; ++i) {
                        S dxh = gr[i] * gm[i];
                        dxr[i] += inv * (dxh - m1 - xh[static_cast<size_t>(i)] * m2);
                    }
                }
            }
        });
}

// batch statistics over all leading axes, one mean/variance per channel (last
// axis). Biased variance normalizes the activations; the caller receives the
// batch stats to fold into its running buffers.
template <class S>
TensorT<S> batch_norm_train(const TensorT<S>& x, const TensorT<S>& gamma,
                            const TensorT<S>& beta, double eps,
                            std::vector<S>* batch_mean = nullptr,
                            std::vector<S>* batch_var = nullptr) {
    detail::check_finite("batch_norm", x);
    detail::check_finite("batch_norm", gamma);
    detail::check_finite("batch_norm", beta);
    auto sp = detail::split_axis(x.shape(), x.rank() - 1);
    int64_t rows = sp.outer, d = sp.axis;
    check(rows >= 2, "batch_norm: need at least 2 rows for batch statistics");
    check(gamma.rank() == 1 && gamma.dim(0) == d,
          "batch_norm: gamma shape " + shape_str(gamma.shape()) +
              " does not match channel dim " + std::to_string(d));
    check(beta.rank() == 1 && beta.dim(0) == d,
          "batch_norm: beta shape " + shape_str(beta.shape()) +
              " does not match channel dim " + std::to_string(d));
    const S* xv = x.data().data();
    const S* gm = gamma.data().data();
    const S* bt = beta.data().data();
    std::vector<S> mu(static_cast<size_t>(d), S(0)), var(static_cast<size_t>(d), S(0));
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < d; ++c) mu[static_cast<size_t>(c)] += xv[r * d + c];
    for (auto& v : mu) v /= static_cast<S>(rows);
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < d; ++c) {
            S dv = xv[r * d + c] - mu[static_cast<size_t>(c)];
            var[static_cast<size_t>(c)] += dv * dv;
        }
    for (auto& v : var) v /= static_cast<S>(rows);
    std::vector<S> inv(static_cast<size_t>(d));
    for (int64_t c = 0; c < d; ++c)
        inv[static_cast<size_t>(c)] =
            S(1) / std::sqrt(var[static_cast<size_t>(c)] + static_cast<S>(eps));
    std::vector<S> out(x.data().size());
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < d; ++c) {
            size_t cc = static_cast<size_t>(c);
            out[static_cast<size_t>(r * d + c)] =
                (xv[r * d + c] - mu[cc]) * inv[cc] * gm[c] + bt[c];
        }
    if (batch_mean) *batch_mean = mu;
    if (batch_var) *batch_var = var;
    return detail::make_op<S>(
        "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
        [rows, d, mu, inv](NodeT<S>& self) {
            auto& px = self.parents[0];
            auto& pg = self.parents[1];
            auto& pb = self.parents[2];
            const S* g = self.grad.data();
            const S* xv = px->value.data();
            const S* gm = pg->value.data();
            S* dx = px->requires_grad ? detail::grad_of(px) : nullptr;
            S* dg = pg->requires_grad ? detail::grad_of(pg) : nullptr;
            S* db = pb->requires_grad ? detail::grad_of(pb) : nullptr;
            // per-channel reductions of dxh = g*gamma against the normalized input
            std::vector<S> m1(static_cast<size_t>(d), S(0)), m2(static_cast<size_t>(d), S(0));
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < d; ++c) {
                    size_t cc = static_cast<size_t>(c);
                    S xh = (xv[r * d + c] - mu[cc]) * inv[cc];
                    S gr = g[r * d + c];
                    if (dg) dg[c] += gr * xh;
                    if (db) db[c] += gr;
                    m1[cc] += gr * gm[c];
                    m2[cc] += gr * gm[c] * xh;
                }
            if (!dx) return;
            for (auto& v : m1) v /= static_cast<S>(rows);
            for (auto& v : m2) v /= static_cast<S>(rows);
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < d; ++c) {
                    size_t cc = static_cast<size_t>(c);
                    S xh = (xv[r * d + c] - mu[cc]) * inv[cc];
                    dx[r * d + c] += inv[cc] * (g[r * d + c] * gm[c] - m1[cc] - xh * m2[cc]);
                }
        });
}

// inference-time normalization against fixed running statistics
template <class S>
TensorT<S> batch_norm_eval(const TensorT<S>& x, const TensorT<S>& gamma,
                           const TensorT<S>& beta, const std::vector<S>& mean,
                           const std::vector<S>& var, double eps) {
    detail::check_finite("batch_norm", x);
    detail::check_finite("batch_norm", gamma);
    detail::check_finite("batch_norm", beta);
    auto sp = detail::split_axis(x.shape(), x.rank() - 1);
    int64_t rows = sp.outer, d = sp.axis;
    check(gamma.rank() == 1 && gamma.dim(0) == d && beta.rank() == 1 && beta.dim(0) == d,
          "batch_norm: gamma/beta do not match channel dim " + std::to_string(d));
    check(mean.size() == static_cast<size_t>(d) && var.size() == static_cast<size_t>(d),
          "batch_norm: running stats do not match channel dim " + std::to_string(d));
    std::vector<S> inv(static_cast<size_t>(d));
    for (int64_t c = 0; c < d; ++c) {
        S v = var[static_cast<size_t>(c)];
        check(std::isfinite(v) && v >= S(0), "batch_norm: invalid running variance");
        inv[static_cast<size_t>(c)] = S(1) / std::sqrt(v + static_cast<S>(eps));
    }
    const S* xv = x.data().data();
    const S* gm = gamma.data().data();
    const S* bt = beta.data().data();
    std::vector<S> out(x.data().size());
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < d; ++c) {
            size_t cc = static_cast<size_t>(c);
            out[static_cast<size_t>(r * d + c)] =
                (xv[r * d + c] - mean[cc]) * inv[cc] * gm[c] + bt[c];
        }
    auto mu = mean;
    return detail::make_op<S>(
        "batch_norm_eval", x.shape(), std::move(out), {x, gamma, beta},
        [rows, d, mu, inv](NodeT<S>& self) {
            auto& px = self.parents[0];
            auto& pg = self.parents[1];
            auto& pb = self.parents[2];
            const S* g = self.grad.data();
            const S* xv = px->value.data();
            const S* gm = pg->value.data();
            S* dx = px->requires_grad ? detail::grad_of(px) : nullptr;
            S* dg = pg->requires_grad ? detail::grad_of(pg) : nullptr;
            S* db = pb->requires_grad ? detail::grad_of(pb) : nullptr;
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < d; ++c) {
                    size_t cc = static_cast<size_t>(c);
                    S gr = g[r * d + c];
                    if (dx) dx[r * d + c] += gr * gm[c] * inv[cc];
                    if (dg) dg[c] += gr * (xv[r * d + c] - mu[cc]) * inv[cc];
                    if (db) db[c] += gr;
                }
        });
}

template <class S>
TensorT<S> sum_all(const TensorT<S>& a) {
    detail::check_finite("sum", a);
    S s = 0;
    for (S v : a.data()) s += v;
    int64_t n = a.size();
    return detail::make_op<S>(
        "sum", {1}, {s}, {a}, [n](NodeT<S>& self) {
            auto& pa = self.parents[0];
            if (!pa->requires_grad) return;
            S* da = detail::grad_of(pa);
            S g = self.grad[0];
            for (int64_t i = 0; i < n; ++i) da[i] += g;
        });
}

template <class S>
TensorT<S> mean_all(const TensorT<S>& a) {
    check(a.size() > 0, "mean: empty tensor");
    return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

template <class S>
TensorT<S> sum_axis(const TensorT<S>& a, int axis) {
    detail::check_finite("sum_axis", a);
    auto sp = detail::split_axis(a.shape(), axis);
    Shape out_shape;
    for (int i = 0; i < a.rank(); ++i)
        if (i != axis) out_shape.push_back(a.dim(i));
    if (out_shape.empty()) out_shape = {1};
    std::vector<S> out(static_cast<size_t>(sp.outer * sp.inner), S(0));
    const S* x = a.data().data();
    for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t k = 0; k < sp.axis; ++k) {
            const S* src = x + (o * sp.axis + k) * sp.inner;
            S* dst = out.data() + o * sp.inner;
            for (int64_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
        }
    return detail::make_op<S>(
        "sum_axis", std::move(out_shape), std::move(out), {a}, [sp](NodeT<S>& self) {
            auto& pa = self.parents[0];
            if (!pa->requires_grad) return;
            S* da = detail::grad_of(pa);
            const S* g = self.grad.data();
            for (int64_t o = 0; o < sp.outer; ++o)
                for (int64_t k = 0; k < sp.axis; ++k) {
                    S* dst = da + (o * sp.axis + k) * sp.inner;
                    const S* src = g + o * sp.inner;
                    for (int64_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
                }
        });
}

template <class S>
TensorT<S> mean_axis(const TensorT<S>& a, int axis) {
    auto sp = detail::split_axis(a.shape(), axis);
    check(sp.axis > 0, "mean_axis: empty axis");
    return scale(sum_axis(a, axis), 1.0 / static_cast<double>(sp.axis));
}

template <class S>
TensorT<S> concat(const std::vector<TensorT<S>>& parts, int axis) {
    check(!parts.empty(), "concat: no inputs");
    const Shape& s0 = parts[0].shape();
    int rank = static_cast<int>(s0.size());
    check(axis >= 0 && axis < rank, "concat: axis out of range");
    Shape out_shape = s0;
    int64_t total_axis = 0;
    for (auto& p : parts) {
        detail::check_finite("concat", p);
        check(p.rank() == rank, "concat: rank mismatch");
        for (int i = 0; i < rank; ++i)
            if (i != axis)
                check(p.dim(i) == s0[static_cast<size_t>(i)],
                      "concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                          shape_str(s0));
        total_axis += p.dim(axis);
    }
    out_shape[static_cast<size_t>(axis)] = static_cast<int>(total_axis);
    auto osp = detail::split_axis(out_shape, axis);
    std::vector<S> out(static_cast<size_t>(numel(out_shape)));
    std::vector<int64_t> offsets;  // per-part start along axis
    int64_t off = 0;
    for (auto& p : parts) {
        offsets.push_back(off);
        auto psp = detail::split_axis(p.shape(), axis);
        const S* x = p.data().data();
        for (int64_t o = 0; o < psp.outer; ++o)
            std::copy(x + o * psp.axis * psp.inner, x + (o + 1) * psp.axis * psp.inner,
                      out.data() + (o * osp.axis + off) * osp.inner);
        off += psp.axis;
    }
    return detail::make_op<S>(
        "concat", std::move(out_shape), std::move(out), parts,
        [axis, osp, offsets](NodeT<S>& self) {
            const S* g = self.grad.data();
            for (size_t pi = 0; pi < self.parents.size(); ++pi) {
                auto& p = self.parents[pi];
                if (!p->requires_grad) continue;
                S* dp = detail::grad_of(p);
                auto psp = detail::split_axis(p->shape, axis);
                int64_t off = offsets[pi];
                for (int64_t o = 0; o < psp.outer; ++o) {
                    const S* src = g + (o * osp.axis + off) * osp.inner;
                    S* dst = dp + o * psp.axis * psp.inner;
                    for (int64_t i = 0; i < psp.axis * psp.inner; ++i) dst[i] += src[i];
                }
            }
        });
}

template <class S>
TensorT<S> slice(const TensorT<S>& a, int axis, int start, int len) {
    detail::check_finite("slice", a);
    auto sp = detail::split_axis(a.shape(), axis);
    check(start >= 0 && len > 0 && start + len <= sp.axis,
          "slice: range [" + std::to_string(start) + "," +
              std::to_string(start + len) + ") out of bounds for axis size " +
              std::to_string(sp.axis));
    Shape out_shape = a.shape();
    out_shape[static_cast<size_t>(axis)] = len;
    std::vector<S> out(static_cast<size_t>(numel(out_shape)));
    const S* x = a.data().data();
    for (int64_t o = 0; o < sp.outer; ++o)
        std::copy(x + (o * sp.axis + start) * sp.inner,
                  x + (o * sp.axis + start + len) * sp.inner,
                  out.data() + o * len * sp.inner);
    return detail::make_op<S>(
        "slice", std::move(out_shape), std::move(out), {a},
        [sp, start, len](NodeT<S>& self) {
            auto& pa = self.parents[0];
            if (!pa->requires_grad) return;
            S* da = detail::grad_of(pa);
            const S* g = self.grad.data();
            for (int64_t o = 0; o < sp.outer; ++o) {
                const S* src = g + o * len * sp.inner;
                S* dst = da + (o * sp.axis + start) * sp.inner;
                for (int64_t i = 0; i < len * sp.inner; ++i) dst[i] += src[i];
            }
        });
}

template <class S>
TensorT<S> reshape(const TensorT<S>& a, Shape shape) {
    check(numel(shape) == a.size(), "reshape: cannot view " + shape_str(a.shape()) +
                                        " as " + shape_str(shape));
    std::vector<S> out(a.data());
    return detail::make_op<S>(
        "reshape", std::move(shape), std::move(out), {a}, [](NodeT<S>& self) {
            auto& pa = self.parents[0];
            if (!pa->requires_grad) return;
            S* da = detail::grad_of(pa);
            const S* g = self.grad.data();
            for (size_t i = 0; i < self.grad.size(); ++i) da[i] += g[i];
        });
}

// rows of the last axis scaled to unit L2 norm; all-zero rows stay zero
template <class S>
TensorT<S> l2_normalize(const TensorT<S>& a, double eps = 1e-12) {
    detail::check_finite("l2_normalize", a);
    auto sp = detail::split_axis(a.shape(), a.rank() - 1);
    int64_t rows = sp.outer, d = sp.axis;
    std::vector<S> out(a.data().size());
    std::vector<S> norms(static_cast<size_t>(rows));
    const S* x = a.data().data();
    for (int64_t r = 0; r < rows; ++r) {
        const S* xr = x + r * d;
        S s = 0;
        for (int64_t i = 0; i < d; ++i) s += xr[i] * xr[i];
        S n = std::sqrt(s);
        norms[static_cast<size_t>(r)] = n;
        S* yr = out.data() + r * d;
        if (n <= static_cast<S>(eps))
            std::fill(yr, yr + d, S(0));
        else
            for (int64_t i = 0; i < d; ++i) yr[i] = xr[i] / n;
    }
    return detail::make_op<S>(
        "l2_normalize", a.shape(), std::move(out), {a},
        [rows, d, eps, norms](NodeT<S>& self) {
            auto& pa = self.parents[0];
            if (!pa->requires_grad) return;
            S* da = detail::grad_of(pa);
            const S* g = self.grad.data();
            const S* y = self.value.data();
            for (int64_t r = 0; r < rows; ++r) {
                S n = norms[static_cast<size_t>(r)];
                if (n <= static_cast<S>(eps)) continue;  // flat at the guard
                const S* gr = g + r * d;
                const S* yr = y + r * d;
                S dot = 0;
                for (int64_t i = 0; i < d; ++i) dot += gr[i] * yr[i];
                S* dr = da + r * d;
                for (int64_t i = 0; i < d; ++i) dr[i] += (gr[i] - yr[i] * dot) / n;
            }
        });
}

// out[b] = x[b, idx[b]] for x of shape (B, C)
template <class S>
TensorT<S> gather(const TensorT<S>& a, const std::vector<int>& idx) {
    detail::check_finite("gather", a);
    check(a.rank() == 2, "gather: expected rank-2 input, got " + shape_str(a.shape()));
    int B = a.dim(0), C = a.dim(1);
    check(static_cast<int>(idx.size()) == B,
          "gather: index count " + std::to_string(idx.size()) +
              " does not match batch " + std::to_string(B));
    std::vector<S> out(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) {
        check(idx[static_cast<size_t>(b)] >= 0 && idx[static_cast<size_t>(b)] < C,
              "gather: index " + std::to_string(idx[static_cast<size_t>(b)]) +
                  " out of range [0," + std::to_string(C) + ")");
        out[static_cast<size_t>(b)] =
            a.data()[static_cast<size_t>(b) * C + idx[static_cast<size_t>(b)]];
    }
    return detail::make_op<S>(
        "gather", {B}, std::move(out), {a}, [B, C, idx](NodeT<S>& self) {
            auto& pa = self.parents[0];
            if (!pa->requires_grad) return;
            S* da = detail::grad_of(pa);
            const S* g = self.grad.data();
            for (int b = 0; b < B; ++b)
                da[static_cast<size_t>(b) * C + idx[static_cast<size_t>(b)]] += g[b];
        });
}

// ---- backward ----------------------------------------------------------------

template <class S>
void backward(const TensorT<S>& root) {
    NodeT<S>* r = root.node();
    check(r->size() == 1, "backward: root must be scalar, got " + shape_str(r->shape));
    check(r->requires_grad, "backward: root does not require grad");
    std::vector<NodeT<S>*> order;
    std::unordered_set<NodeT<S>*> visited;
    std::vector<std::pair<NodeT<S>*, size_t>> stack;
    stack.emplace_back(r, 0);
    visited.insert(r);
    while (!stack.empty()) {
        auto& top = stack.back();
        if (top.second < top.first->parents.size()) {
            NodeT<S>* p = top.first->parents[top.second++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(top.first);
            stack.pop_back();
        }
    }
    r->ensure_grad();
    r->grad[0] = S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// ---- optimizer -----------------------------------------------------------------

template <class S>
class SgdT {
public:
    SgdT(std::vector<TensorT<S>> params, double lr, double momentum)
        : params_(std::move(params)), lr_(lr), momentum_(momentum) {
        check(lr > 0.0, "sgd: learning rate must be positive");
        check(momentum >= 0.0 && momentum < 1.0, "sgd: momentum must lie in [0,1)");
        check(!params_.empty(), "sgd: no parameters");
        for (auto& p : params_) {
            check(p.defined() && p.requires_grad(),
                  "sgd: registered parameter does not track gradients");
            velocity_.emplace_back(static_cast<size_t>(p.size()), S(0));
        }
    }

    double lr() const { return lr_; }
    void set_lr(double lr) {
        check(lr > 0.0, "sgd: learning rate must be positive");
        lr_ = lr;
    }

    void step() {
        S m = static_cast<S>(momentum_);
        S lr = static_cast<S>(lr_);
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i];
            check(p.has_grad(), "sgd: parameter has no gradient; run backward first");
            const auto& g = p.node()->grad;
            auto& v = velocity_[i];
            auto& w = p.data();
            for (size_t j = 0; j < w.size(); ++j) {
                v[j] = m * v[j] + g[j];
                w[j] -= lr * v[j];
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

private:
    std::vector<TensorT<S>> params_;
    std::vector<std::vector<S>> velocity_;
    double lr_, momentum_;
};

// stepwise decay: base_lr * factor^(epoch / decay_every), integer division
inline double lr_schedule(int epoch, double base_lr, int decay_every, double factor) {
    check(epoch >= 0, "lr_schedule: negative epoch");
    check(base_lr > 0.0, "lr_schedule: base learning rate must be positive");
    check(decay_every > 0, "lr_schedule: decay interval must be positive");
    check(factor > 0.0, "lr_schedule: factor must be positive");
    return base_lr * std::pow(factor, static_cast<double>(epoch / decay_every));
}

// ---- checkpoint format ----------------------------------------------------------
//
// Binary layout, little-endian:
//   magic "STCK1" | u32 param count | repeated:
//   u32 name length | name bytes | u32 rank | u32 dims[rank] | f32 payload

namespace detail {

inline void put_u32(std::string& buf, uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_f32(std::string& buf, float v) {
    put_u32(buf, std::bit_cast<uint32_t>(v));
}

class ByteReader {
public:
    ByteReader(std::string data, std::string path)
        : data_(std::move(data)), path_(std::move(path)) {}

    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<unsigned char>(data_[pos_ + static_cast<size_t>(i)])) << (8 * i);
        pos_ += 4;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    std::string bytes(size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == data_.size(); }
    size_t pos() const { return pos_; }
    const std::string& path() const { return path_; }

    void need(size_t n) {
        check(pos_ + n <= data_.size(),
              path_ + ": truncated at byte " + std::to_string(pos_));
    }

private:
    std::string data_;
    std::string path_;
    size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), path + ": cannot open for reading");
    std::string data((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    return data;
}

inline void write_file(const std::string& path, const std::string& data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    check(f.good(), path + ": cannot open for writing");
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
    check(f.good(), path + ": write failed");
}

}  // namespace detail

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

inline void save_checkpoint(const std::string& path, const NamedParams& params) {
    std::string buf;
    buf += "STCK1";
    detail::put_u32(buf, static_cast<uint32_t>(params.size()));
    for (auto& [name, t] : params) {
        check(t.defined(), "checkpoint: undefined tensor for " + name);
        detail::put_u32(buf, static_cast<uint32_t>(name.size()));
        buf += name;
        detail::put_u32(buf, static_cast<uint32_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i)
            detail::put_u32(buf, static_cast<uint32_t>(t.dim(i)));
        for (float v : t.data()) detail::put_f32(buf, v);
    }
    detail::write_file(path, buf);
}

struct CheckpointEntry {
    Shape shape;
    std::vector<float> data;
};

inline std::vector<std::pair<std::string, CheckpointEntry>> load_checkpoint(
    const std::string& path) {
    detail::ByteReader r(detail::read_file(path), path);
    check(r.bytes(5) == "STCK1", path + ": bad magic, not a checkpoint file");
    uint32_t count = r.u32();
    std::vector<std::pair<std::string, CheckpointEntry>> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = r.u32();
        check(name_len > 0 && name_len < 4096,
              path + ": implausible name length at byte " + std::to_string(r.pos()));
        std::string name = r.bytes(name_len);
        uint32_t rank = r.u32();
        check(rank <= 8, path + ": implausible rank for " + name);
        CheckpointEntry e;
        int64_t n = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            uint32_t dim = r.u32();
            check(dim > 0 && dim < (1u << 28), path + ": implausible dim for " + name);
            e.shape.push_back(static_cast<int>(dim));
            n *= dim;
        }
        e.data.resize(static_cast<size_t>(n));
        for (int64_t j = 0; j < n; ++j) e.data[static_cast<size_t>(j)] = r.f32();
        out.emplace_back(std::move(name), std::move(e));
    }
    check(r.done(), path + ": trailing bytes after last parameter");
    return out;
}

inline std::map<std::string, CheckpointEntry> checkpoint_map(
    const std::vector<std::pair<std::string, CheckpointEntry>>& entries) {
    std::map<std::string, CheckpointEntry> m;
    for (auto& [name, e] : entries) {
        check(!m.count(name), "checkpoint: duplicate parameter name " + name);
        m[name] = e;
    }
    return m;
}

// copies matching entries into params; every param must be present
inline void load_into(const std::map<std::string, CheckpointEntry>& ckpt,
                      NamedParams& params, const std::string& path) {
    for (auto& [name, t] : params) {
        auto it = ckpt.find(name);
        check(it != ckpt.end(), path + ": missing parameter " + name);
        check(it->second.shape == t.shape(),
              path + ": shape mismatch for " + name + ", file has " +
                  shape_str(it->second.shape) + ", model expects " +
                  shape_str(t.shape()));
        t.data() = it->second.data;
    }
}

}  // namespace stc
