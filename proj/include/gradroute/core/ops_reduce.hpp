#pragma once

#include "gradroute/core/ops_basic.hpp"

namespace gradroute {

template <class T>
Tensor<T> sum_all(const Tensor<T>& x) {
    T s = 0;
    for (T v : *x.data) s += v;
    auto out = std::make_shared<std::vector<T>>(1, s);
    Tape<T>* tp = x.attached() ? x.tape : nullptr;
    int px = x.node;
    size_t n = x.size();
    return detail::make_result<T>(tp, {1}, out, [px, n](Tape<T>& t, const std::vector<T>& g) {
        auto& gx = t.grad(px);
        for (size_t i = 0; i < n; ++i) gx[i] += g[0];
    });
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& x) {
    return scale(sum_all(x), T(1) / static_cast<T>(x.size()));
}

// Sum over one axis, keeping it as size 1 (broadcast-friendly).
template <class T>
Tensor<T> sum_axis(const Tensor<T>& x, size_t axis) {
    if (axis >= x.shape.size())
        throw usage_error("sum_axis: axis " + std::to_string(axis) + " out of range for shape " +
                          shape_str(x.shape));
    size_t outer = 1, inner = 1, n = x.shape[axis];
    for (size_t i = 0; i < axis; ++i) outer *= x.shape[i];
    for (size_t i = axis + 1; i < x.shape.size(); ++i) inner *= x.shape[i];
    Shape oshape = x.shape;
    oshape[axis] = 1;
    auto out = std::make_shared<std::vector<T>>(outer * inner, T(0));
    const auto& xv = *x.data;
    for (size_t o = 0; o < outer; ++o)
        for (size_t k = 0; k < n; ++k)
            for (size_t i = 0; i < inner; ++i) (*out)[o * inner + i] += xv[(o * n + k) * inner + i];
    Tape<T>* tp = x.attached() ? x.tape : nullptr;
    int px = x.node;
    return detail::make_result<T>(tp, oshape, out,
                                  [px, outer, inner, n](Tape<T>& t, const std::vector<T>& g) {
                                      auto& gx = t.grad(px);
                                      for (size_t o = 0; o < outer; ++o)
                                          for (size_t k = 0; k < n; ++k)
                                              for (size_t i = 0; i < inner; ++i)
                                                  gx[(o * n + k) * inner + i] += g[o * inner + i];
                                  });
}

template <class T>
Tensor<T> mean_axis(const Tensor<T>& x, size_t axis) {
    return scale(sum_axis(x, axis), T(1) / static_cast<T>(x.shape[axis]));
}

} // namespace gradroute
