#pragma once

#include <cmath>

#include "gradroute/core/tape.hpp"
#include "gradroute/core/tensor.hpp"

namespace gradroute {

namespace detail {

template <class T>
Tensor<T> make_result(Tape<T>* tp, Shape shape, std::shared_ptr<std::vector<T>> data,
                      std::function<void(Tape<T>&, const std::vector<T>&)> bw) {
    Tensor<T> y(std::move(shape), std::move(data));
    if (tp) {
        y.tape = tp;
        y.node = tp->add_node(y.shape, std::move(bw));
    }
    return y;
}

// Elementwise unary op. dydx(x, y) is evaluated per element.
template <class T, class F, class D>
Tensor<T> unary_op(const Tensor<T>& x, F fwd, D dydx) {
    auto out = std::make_shared<std::vector<T>>(x.size());
    const auto& xv = *x.data;
    for (size_t i = 0; i < xv.size(); ++i) (*out)[i] = fwd(xv[i]);
    Tape<T>* tp = x.attached() ? x.tape : nullptr;
    int px = x.node;
    auto xd = x.data;
    auto yd = out;
    return make_result<T>(tp, x.shape, out, [px, xd, yd, dydx](Tape<T>& t, const std::vector<T>& g) {
        auto& gx = t.grad(px);
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dydx((*xd)[i], (*yd)[i]);
    });
}

// Elementwise binary op with trailing-dimension broadcasting.
// da(g, a, b, y) / db(g, a, b, y) give the per-element gradient contributions.
template <class T, class F, class DA, class DB>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, F fwd, DA da, DB db) {
    Broadcast bc = Broadcast::make(a.shape, b.shape);
    auto out = std::make_shared<std::vector<T>>(bc.out_size);
    const auto& av = *a.data;
    const auto& bv = *b.data;
    bc.for_each([&](size_t o, size_t ai, size_t bi) { (*out)[o] = fwd(av[ai], bv[bi]); });
    Tape<T>* tp = detail::common_tape<T>({&a, &b});
    if (!tp) return Tensor<T>(bc.out_shape, out);
    int pa = a.attached() ? a.node : -1;
    int pb = b.attached() ? b.node : -1;
    auto ad = a.data;
    auto bd = b.data;
    auto yd = out;
    return make_result<T>(tp, bc.out_shape, out,
                          [pa, pb, ad, bd, yd, bc, da, db](Tape<T>& t, const std::vector<T>& g) {
                              std::vector<T>* ga = pa >= 0 ? &t.grad(pa) : nullptr;
                              std::vector<T>* gb = pb >= 0 ? &t.grad(pb) : nullptr;
                              bc.for_each([&](size_t o, size_t ai, size_t bi) {
                                  if (ga) (*ga)[ai] += da(g[o], (*ad)[ai], (*bd)[bi], (*yd)[o]);
                                  if (gb) (*gb)[bi] += db(g[o], (*ad)[ai], (*bd)[bi], (*yd)[o]);
                              });
                          });
}

} // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return x + y; }, [](T g, T, T, T) { return g; },
        [](T g, T, T, T) { return g; });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return x - y; }, [](T g, T, T, T) { return g; },
        [](T g, T, T, T) { return -g; });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return x * y; }, [](T g, T, T bv, T) { return g * bv; },
        [](T g, T av, T, T) { return g * av; });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return x / y; }, [](T g, T, T bv, T) { return g / bv; },
        [](T g, T, T bv, T yv) { return -g * yv / bv; });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T c) {
    return detail::unary_op(
        x, [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
    return detail::unary_op(
        x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> neg(const Tensor<T>& x) {
    return scale(x, T(-1));
}

template <class T>
Tensor<T> abs(const Tensor<T>& x) {
    return detail::unary_op(
        x, [](T v) { return std::abs(v); },
        [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

// Gradient passes only strictly inside [lo, hi].
template <class T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
    if (!(lo <= hi)) throw usage_error("clamp: lo > hi");
    return detail::unary_op(
        x, [lo, hi](T v) { return v < lo ? lo : (v > hi ? hi : v); },
        [lo, hi](T v, T) { return v > lo && v < hi ? T(1) : T(0); });
}

// Elementwise max/min; ties propagate to the first argument.
template <class T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return x >= y ? x : y; },
        [](T g, T x, T y, T) { return x >= y ? g : T(0); },
        [](T g, T x, T y, T) { return x >= y ? T(0) : g; });
}

template <class T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return x <= y ? x : y; },
        [](T g, T x, T y, T) { return x <= y ? g : T(0); },
        [](T g, T x, T y, T) { return x <= y ? T(0) : g; });
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
    return detail::unary_op(
        x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& x) {
    return detail::unary_op(
        x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Tensor<T> sqrt(const Tensor<T>& x) {
    return detail::unary_op(
        x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(1) / (T(2) * y); });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    return detail::unary_op(
        x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

// Exact (erf-based) GELU.
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return detail::unary_op(
        x,
        [](T v) {
            return static_cast<T>(0.5 * static_cast<double>(v) *
                                  (1.0 + std::erf(static_cast<double>(v) * inv_sqrt2)));
        },
        [](T v, T) {
            double d = static_cast<double>(v);
            double cdf = 0.5 * (1.0 + std::erf(d * inv_sqrt2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * d * d);
            return static_cast<T>(cdf + d * pdf);
        });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return detail::unary_op(
        x,
        [](T v) {
            return v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                             : static_cast<T>(std::exp(v) / (1.0 + std::exp(v)));
        },
        [](T, T y) { return y * (T(1) - y); });
}

} // namespace gradroute
