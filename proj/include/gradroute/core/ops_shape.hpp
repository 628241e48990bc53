#pragma once

#include "gradroute/core/ops_basic.hpp"

namespace gradroute {

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
    if (shape_size(new_shape) != x.size())
        throw usage_error("reshape: cannot view shape " + shape_str(x.shape) + " as " +
                          shape_str(new_shape));
    Tape<T>* tp = x.attached() ? x.tape : nullptr;
    int px = x.node;
    return detail::make_result<T>(tp, std::move(new_shape), x.data,
                                  [px](Tape<T>& t, const std::vector<T>& g) {
                                      detail::axpy(t.grad(px), g);
                                  });
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, size_t axis, size_t start, size_t len) {
    if (axis >= x.shape.size() || start + len > x.shape[axis])
        throw usage_error("slice: range [" + std::to_string(start) + "," +
                          std::to_string(start + len) + ") on axis " + std::to_string(axis) +
                          " invalid for shape " + shape_str(x.shape));
    size_t outer = 1, inner = 1, n = x.shape[axis];
    for (size_t i = 0; i < axis; ++i) outer *= x.shape[i];
    for (size_t i = axis + 1; i < x.shape.size(); ++i) inner *= x.shape[i];
    Shape oshape = x.shape;
    oshape[axis] = len;
    auto out = std::make_shared<std::vector<T>>(outer * len * inner);
    const auto& xv = *x.data;
    for (size_t o = 0; o < outer; ++o)
        for (size_t k = 0; k < len; ++k)
            for (size_t i = 0; i < inner; ++i)
                (*out)[(o * len + k) * inner + i] = xv[(o * n + start + k) * inner + i];
    Tape<T>* tp = x.attached() ? x.tape : nullptr;
    int px = x.node;
    return detail::make_result<T>(
        tp, oshape, out, [px, outer, inner, n, start, len](Tape<T>& t, const std::vector<T>& g) {
            auto& gx = t.grad(px);
            for (size_t o = 0; o < outer; ++o)
                for (size_t k = 0; k < len; ++k)
                    for (size_t i = 0; i < inner; ++i)
                        gx[(o * n + start + k) * inner + i] += g[(o * len + k) * inner + i];
        });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, size_t axis) {
    if (parts.empty()) throw usage_error("concat: no tensors");
    Shape oshape = parts[0].shape;
    if (axis >= oshape.size()) throw usage_error("concat: axis out of range");
    size_t total = 0;
    for (const auto& p : parts) {
        if (p.shape.size() != oshape.size())
            throw usage_error("concat: rank mismatch between " + shape_str(oshape) + " and " +
                              shape_str(p.shape));
        for (size_t i = 0; i < oshape.size(); ++i)
            if (i != axis && p.shape[i] != oshape[i])
                throw usage_error("concat: shape mismatch between " + shape_str(parts[0].shape) +
                                  " and " + shape_str(p.shape));
        total += p.shape[axis];
    }
    oshape[axis] = total;
    size_t outer = 1, inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= oshape[i];
    for (size_t i = axis + 1; i < oshape.size(); ++i) inner *= oshape[i];
    auto out = std::make_shared<std::vector<T>>(outer * total * inner);
    size_t off = 0;
    for (const auto& p : parts) {
        size_t n = p.shape[axis];
        const auto& pv = *p.data;
        for (size_t o = 0; o < outer; ++o)
            for (size_t k = 0; k < n; ++k)
                for (size_t i = 0; i < inner; ++i)
                    (*out)[(o * total + off + k) * inner + i] = pv[(o * n + k) * inner + i];
        off += n;
    }
    Tape<T>* tp = nullptr;
    for (const auto& p : parts)
        if (p.attached()) {
            if (tp && tp != p.tape) throw usage_error("concat: operands on different tapes");
            tp = p.tape;
        }
    if (!tp) return Tensor<T>(oshape, out);
    struct Piece {
        int node;
        size_t n, off;
    };
    std::vector<Piece> pieces;
    for (const auto& p : parts)
        pieces.push_back({p.attached() ? p.node : -1, p.shape[axis], 0});
    size_t acc = 0;
    for (auto& pc : pieces) {
        pc.off = acc;
        acc += pc.n;
    }
    return detail::make_result<T>(tp, oshape, out,
                                  [pieces, outer, inner, total](Tape<T>& t, const std::vector<T>& g) {
                                      for (const auto& pc : pieces) {
                                          if (pc.node < 0) continue;
                                          auto& gx = t.grad(pc.node);
                                          for (size_t o = 0; o < outer; ++o)
                                              for (size_t k = 0; k < pc.n; ++k)
                                                  for (size_t i = 0; i < inner; ++i)
                                                      gx[(o * pc.n + k) * inner + i] +=
                                                          g[(o * total + pc.off + k) * inner + i];
                                      }
                                  });
}

// Swap two axes.
template <class T>
Tensor<T> transpose(const Tensor<T>& x, size_t ax1, size_t ax2) {
    size_t r = x.shape.size();
    if (ax1 >= r || ax2 >= r) throw usage_error("transpose: axis out of range");
    Shape oshape = x.shape;
    std::swap(oshape[ax1], oshape[ax2]);
    std::vector<size_t> xstride(r, 1), perm(r);
    for (size_t i = r - 1; i-- > 0;) xstride[i] = xstride[i + 1] * x.shape[i + 1];
    for (size_t i = 0; i < r; ++i) perm[i] = i;
    std::swap(perm[ax1], perm[ax2]);
    auto out = std::make_shared<std::vector<T>>(x.size());
    const auto& xv = *x.data;
    std::vector<size_t> idx(r, 0);
    for (size_t o = 0; o < out->size(); ++o) {
        size_t xi = 0;
        for (size_t i = 0; i < r; ++i) xi += idx[i] * xstride[perm[i]];
        (*out)[o] = xv[xi];
        for (size_t i = r; i-- > 0;) {
            if (++idx[i] < oshape[i]) break;
            idx[i] = 0;
        }
    }
    Tape<T>* tp = x.attached() ? x.tape : nullptr;
    int px = x.node;
    return detail::make_result<T>(
        tp, oshape, out, [px, oshape, xstride, perm, r](Tape<T>& t, const std::vector<T>& g) {
            auto& gx = t.grad(px);
            std::vector<size_t> idx(r, 0);
            for (size_t o = 0; o < g.size(); ++o) {
                size_t xi = 0;
                for (size_t i = 0; i < r; ++i) xi += idx[i] * xstride[perm[i]];
                gx[xi] += g[o];
                for (size_t i = r; i-- > 0;) {
                    if (++idx[i] < oshape[i]) break;
                    idx[i] = 0;
                }
            }
        });
}

} // namespace gradroute
