#pragma once

#include <algorithm>
#include <type_traits>

#include "gradroute/core/ops_basic.hpp"

namespace gradroute {

// x [N,C,H,W], w [O,C,KH,KW], optional bias [O]; stride 1, zero padding `pad`.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w,
                 const std::type_identity_t<Tensor<T>>* bias = nullptr, size_t pad = 0) {
    if (x.shape.size() != 4 || w.shape.size() != 4 || x.shape[1] != w.shape[1])
        throw usage_error("conv2d: incompatible shapes " + shape_str(x.shape) + " and " +
                          shape_str(w.shape));
    size_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    size_t O = w.shape[0], KH = w.shape[2], KW = w.shape[3];
    if (H + 2 * pad < KH || W + 2 * pad < KW)
        throw usage_error("conv2d: kernel " + shape_str(w.shape) + " larger than padded input " +
                          shape_str(x.shape));
    size_t OH = H + 2 * pad - KH + 1, OW = W + 2 * pad - KW + 1;
    if (bias && bias->shape != Shape{O})
        throw usage_error("conv2d: bias shape " + shape_str(bias->shape) + " does not match " +
                          std::to_string(O) + " output channels");
    auto out = std::make_shared<std::vector<T>>(N * O * OH * OW, T(0));
    const auto& xv = *x.data;
    const auto& wv = *w.data;
    for (size_t n = 0; n < N; ++n)
        for (size_t o = 0; o < O; ++o) {
            T b = bias ? (*bias->data)[o] : T(0);
            for (size_t oh = 0; oh < OH; ++oh)
                for (size_t ow = 0; ow < OW; ++ow) {
                    T s = b;
                    for (size_t c = 0; c < C; ++c)
                        for (size_t kh = 0; kh < KH; ++kh) {
                            long ih = static_cast<long>(oh + kh) - static_cast<long>(pad);
                            if (ih < 0 || ih >= static_cast<long>(H)) continue;
                            for (size_t kw = 0; kw < KW; ++kw) {
                                long iw = static_cast<long>(ow + kw) - static_cast<long>(pad);
                                if (iw < 0 || iw >= static_cast<long>(W)) continue;
                                s += xv[((n * C + c) * H + ih) * W + iw] *
                                     wv[((o * C + c) * KH + kh) * KW + kw];
                            }
                        }
                    (*out)[((n * O + o) * OH + oh) * OW + ow] = s;
                }
        }
    Tape<T>* tp = detail::common_tape<T>({&x, &w, bias ? bias : &x});
    Shape oshape{N, O, OH, OW};
    if (!tp) return Tensor<T>(oshape, out);
    int px = x.attached() ? x.node : -1;
    int pw = w.attached() ? w.node : -1;
    int pb = (bias && bias->attached()) ? bias->node : -1;
    auto xd = x.data;
    auto wd = w.data;
    return detail::make_result<T>(
        tp, oshape, out,
        [px, pw, pb, xd, wd, N, C, H, W, O, KH, KW, OH, OW, pad](Tape<T>& t,
                                                                 const std::vector<T>& g) {
            std::vector<T>* gx = px >= 0 ? &t.grad(px) : nullptr;
            std::vector<T>* gw = pw >= 0 ? &t.grad(pw) : nullptr;
            std::vector<T>* gb = pb >= 0 ? &t.grad(pb) : nullptr;
            for (size_t n = 0; n < N; ++n)
                for (size_t o = 0; o < O; ++o)
                    for (size_t oh = 0; oh < OH; ++oh)
                        for (size_t ow = 0; ow < OW; ++ow) {
                            T go = g[((n * O + o) * OH + oh) * OW + ow];
                            if (go == T(0)) continue;
                            if (gb) (*gb)[o] += go;
                            for (size_t c = 0; c < C; ++c)
                                for (size_t kh = 0; kh < KH; ++kh) {
                                    long ih = static_cast<long>(oh + kh) - static_cast<long>(pad);
                                    if (ih < 0 || ih >= static_cast<long>(H)) continue;
                                    for (size_t kw = 0; kw < KW; ++kw) {
                                        long iw =
                                            static_cast<long>(ow + kw) - static_cast<long>(pad);
                                        if (iw < 0 || iw >= static_cast<long>(W)) continue;
                                        size_t xi = ((n * C + c) * H + ih) * W + iw;
                                        size_t wi = ((o * C + c) * KH + kh) * KW + kw;
                                        if (gx) (*gx)[xi] += go * (*wd)[wi];
                                        if (gw) (*gw)[wi] += go * (*xd)[xi];
                                    }
                                }
                        }
        });
}

// 2x2 max pooling with stride 2; trailing odd row/column is dropped.
template <class T>
Tensor<T> maxpool2d(const Tensor<T>& x) {
    if (x.shape.size() != 4) throw usage_error("maxpool2d: expected NCHW, got " + shape_str(x.shape));
    size_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    size_t OH = H / 2, OW = W / 2;
    if (OH == 0 || OW == 0) throw usage_error("maxpool2d: input too small " + shape_str(x.shape));
    auto out = std::make_shared<std::vector<T>>(N * C * OH * OW);
    auto arg = std::make_shared<std::vector<size_t>>(N * C * OH * OW);
    const auto& xv = *x.data;
    for (size_t nc = 0; nc < N * C; ++nc)
        for (size_t oh = 0; oh < OH; ++oh)
            for (size_t ow = 0; ow < OW; ++ow) {
                size_t best = (nc * H + 2 * oh) * W + 2 * ow;
                for (size_t dh = 0; dh < 2; ++dh)
                    for (size_t dw = 0; dw < 2; ++dw) {
                        size_t i = (nc * H + 2 * oh + dh) * W + 2 * ow + dw;
                        if (xv[i] > xv[best]) best = i;
                    }
                size_t oi = (nc * OH + oh) * OW + ow;
                (*out)[oi] = xv[best];
                (*arg)[oi] = best;
            }
    Tape<T>* tp = x.attached() ? x.tape : nullptr;
    int px = x.node;
    return detail::make_result<T>(tp, {N, C, OH, OW}, out,
                                  [px, arg](Tape<T>& t, const std::vector<T>& g) {
                                      auto& gx = t.grad(px);
                                      for (size_t i = 0; i < g.size(); ++i) gx[(*arg)[i]] += g[i];
                                  });
}

// Softmax over the last axis.
template <class T>
Tensor<T> softmax(const Tensor<T>& x) {
    if (x.shape.empty()) throw usage_error("softmax: scalar input");
    size_t V = x.shape.back(), rows = x.size() / V;
    auto out = std::make_shared<std::vector<T>>(x.size());
    const auto& xv = *x.data;
    for (size_t r = 0; r < rows; ++r) {
        const T* xr = xv.data() + r * V;
        T* yr = out->data() + r * V;
        T mx = *std::max_element(xr, xr + V);
        T s = 0;
        for (size_t j = 0; j < V; ++j) s += (yr[j] = std::exp(xr[j] - mx));
        for (size_t j = 0; j < V; ++j) yr[j] /= s;
    }
    Tape<T>* tp = x.attached() ? x.tape : nullptr;
    int px = x.node;
    auto yd = out;
    return detail::make_result<T>(tp, x.shape, out,
                                  [px, yd, rows, V](Tape<T>& t, const std::vector<T>& g) {
                                      auto& gx = t.grad(px);
                                      for (size_t r = 0; r < rows; ++r) {
                                          const T* yr = yd->data() + r * V;
                                          const T* gr = g.data() + r * V;
                                          T dot = 0;
                                          for (size_t j = 0; j < V; ++j) dot += gr[j] * yr[j];
                                          for (size_t j = 0; j < V; ++j)
                                              gx[r * V + j] += yr[j] * (gr[j] - dot);
                                      }
                                  });
}

// Log-softmax over the last axis.
template <class T>
Tensor<T> log_softmax(const Tensor<T>& x) {
    if (x.shape.empty()) throw usage_error("log_softmax: scalar input");
    size_t V = x.shape.back(), rows = x.size() / V;
    auto out = std::make_shared<std::vector<T>>(x.size());
    const auto& xv = *x.data;
    for (size_t r = 0; r < rows; ++r) {
        const T* xr = xv.data() + r * V;
        T* yr = out->data() + r * V;
        T mx = *std::max_element(xr, xr + V);
        T s = 0;
        for (size_t j = 0; j < V; ++j) s += std::exp(xr[j] - mx);
        T lse = mx + std::log(s);
        for (size_t j = 0; j < V; ++j) yr[j] = xr[j] - lse;
    }
    Tape<T>* tp = x.attached() ? x.tape : nullptr;
    int px = x.node;
    auto yd = out;
    return detail::make_result<T>(tp, x.shape, out,
                                  [px, yd, rows, V](Tape<T>& t, const std::vector<T>& g) {
                                      auto& gx = t.grad(px);
                                      for (size_t r = 0; r < rows; ++r) {
                                          const T* yr = yd->data() + r * V;
                                          const T* gr = g.data() + r * V;
                                          T gs = 0;
                                          for (size_t j = 0; j < V; ++j) gs += gr[j];
                                          for (size_t j = 0; j < V; ++j)
                                              gx[r * V + j] += gr[j] - std::exp(yr[j]) * gs;
                                      }
                                  });
}

// Layer normalization over the last axis, with per-feature gain and bias.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5)) {
    if (x.shape.empty()) throw usage_error("layer_norm: scalar input");
    size_t D = x.shape.back(), rows = x.size() / D;
    if (gain.shape != Shape{D} || bias.shape != Shape{D})
        throw usage_error("layer_norm: gain/bias shape " + shape_str(gain.shape) +
                          " does not match feature dim " + std::to_string(D));
    auto out = std::make_shared<std::vector<T>>(x.size());
    auto xhat = std::make_shared<std::vector<T>>(x.size());
    auto invstd = std::make_shared<std::vector<T>>(rows);
    const auto& xv = *x.data;
    const auto& gv = *gain.data;
    const auto& bv = *bias.data;
    for (size_t r = 0; r < rows; ++r) {
        const T* xr = xv.data() + r * D;
        T mu = 0;
        for (size_t j = 0; j < D; ++j) mu += xr[j];
        mu /= static_cast<T>(D);
        T var = 0;
        for (size_t j = 0; j < D; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<T>(D);
        T is = T(1) / std::sqrt(var + eps);
        (*invstd)[r] = is;
        for (size_t j = 0; j < D; ++j) {
            T xh = (xr[j] - mu) * is;
            (*xhat)[r * D + j] = xh;
            (*out)[r * D + j] = xh * gv[j] + bv[j];
        }
    }
    Tape<T>* tp = detail::common_tape<T>({&x, &gain, &bias});
    if (!tp) return Tensor<T>(x.shape, out);
    int px = x.attached() ? x.node : -1;
    int pg = gain.attached() ? gain.node : -1;
    int pb = bias.attached() ? bias.node : -1;
    auto gd = gain.data;
    return detail::make_result<T>(
        tp, x.shape, out,
        [px, pg, pb, xhat, invstd, gd, rows, D](Tape<T>& t, const std::vector<T>& g) {
            std::vector<T>* gx = px >= 0 ? &t.grad(px) : nullptr;
            std::vector<T>* gg = pg >= 0 ? &t.grad(pg) : nullptr;
            std::vector<T>* gb = pb >= 0 ? &t.grad(pb) : nullptr;
            for (size_t r = 0; r < rows; ++r) {
                const T* gr = g.data() + r * D;
                const T* xh = xhat->data() + r * D;
                if (gg || gb)
                    for (size_t j = 0; j < D; ++j) {
                        if (gg) (*gg)[j] += gr[j] * xh[j];
                        if (gb) (*gb)[j] += gr[j];
                    }
                if (gx) {
                    T m1 = 0, m2 = 0;
                    for (size_t j = 0; j < D; ++j) {
                        T dxh = gr[j] * (*gd)[j];
                        m1 += dxh;
                        m2 += dxh * xh[j];
                    }
                    m1 /= static_cast<T>(D);
                    m2 /= static_cast<T>(D);
                    T is = (*invstd)[r];
                    for (size_t j = 0; j < D; ++j) {
                        T dxh = gr[j] * (*gd)[j];
                        (*gx)[r * D + j] += is * (dxh - m1 - xh[j] * m2);
                    }
                }
            }
        });
}

// table [V,D], ids (row-major, any logical shape) -> [ids_shape..., D]
template <class T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<int>& ids, Shape ids_shape) {
    if (table.shape.size() != 2)
        throw usage_error("embedding: table must be 2-D, got " + shape_str(table.shape));
    if (shape_size(ids_shape) != ids.size())
        throw usage_error("embedding: ids length does not match shape " + shape_str(ids_shape));
    size_t V = table.shape[0], D = table.shape[1];
    auto out = std::make_shared<std::vector<T>>(ids.size() * D);
    const auto& tv = *table.data;
    for (size_t i = 0; i < ids.size(); ++i) {
        int id = ids[i];
        if (id < 0 || static_cast<size_t>(id) >= V)
            throw usage_error("embedding: id " + std::to_string(id) + " out of range for vocab " +
                              std::to_string(V));
        std::copy(tv.begin() + id * D, tv.begin() + (id + 1) * D, out->begin() + i * D);
    }
    Shape oshape = ids_shape;
    oshape.push_back(D);
    Tape<T>* tp = table.attached() ? table.tape : nullptr;
    int pt = table.node;
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    return detail::make_result<T>(tp, oshape, out,
                                  [pt, ids_copy, D](Tape<T>& t, const std::vector<T>& g) {
                                      auto& gt = t.grad(pt);
                                      for (size_t i = 0; i < ids_copy->size(); ++i) {
                                          size_t id = static_cast<size_t>((*ids_copy)[i]);
                                          for (size_t j = 0; j < D; ++j)
                                              gt[id * D + j] += g[i * D + j];
                                      }
                                  });
}

// x [..., V], ids of length prod(...) -> [...]: picks x[r, ids[r]].
template <class T>
Tensor<T> gather_last(const Tensor<T>& x, const std::vector<int>& ids) {
    if (x.shape.empty()) throw usage_error("gather_last: scalar input");
    size_t V = x.shape.back(), rows = x.size() / V;
    if (ids.size() != rows)
        throw usage_error("gather_last: ids length " + std::to_string(ids.size()) +
                          " does not match rows of " + shape_str(x.shape));
    Shape oshape(x.shape.begin(), x.shape.end() - 1);
    if (oshape.empty()) oshape = {1};
    auto out = std::make_shared<std::vector<T>>(rows);
    const auto& xv = *x.data;
    for (size_t r = 0; r < rows; ++r) {
        int id = ids[r];
        if (id < 0 || static_cast<size_t>(id) >= V)
            throw usage_error("gather_last: id " + std::to_string(id) + " out of range " +
                              std::to_string(V));
        (*out)[r] = xv[r * V + id];
    }
    Tape<T>* tp = x.attached() ? x.tape : nullptr;
    int px = x.node;
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    return detail::make_result<T>(tp, oshape, out,
                                  [px, ids_copy, V](Tape<T>& t, const std::vector<T>& g) {
                                      auto& gx = t.grad(px);
                                      for (size_t r = 0; r < g.size(); ++r)
                                          gx[r * V + static_cast<size_t>((*ids_copy)[r])] += g[r];
                                  });
}

} // namespace gradroute
