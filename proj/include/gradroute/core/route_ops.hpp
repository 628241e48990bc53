#pragma once

#include "gradroute/core/ops_basic.hpp"

namespace gradroute {

// A named location where backward gradients are elementwise-scaled. The
// forward value is never changed (the result shares the input buffer).
template <class T>
struct MaskSite {
    std::string site_id;
    Tensor<T> weight; // broadcastable to the masked activation

    static MaskSite scalar(std::string id, T w) {
        return MaskSite{std::move(id), Tensor<T>::scalar_value(w)};
    }
};

// Forward value equals x bit-identically; incoming gradient is multiplied
// elementwise by the site weight before propagating to x. Weights may be
// negative; sign propagates unclamped.
template <class T>
Tensor<T> route_mask(const Tensor<T>& x, const MaskSite<T>& site) {
    Broadcast bc;
    try {
        bc = Broadcast::make(x.shape, site.weight.shape);
    } catch (const usage_error& e) {
        throw config_error("mask site '" + site.site_id + "': " + e.what());
    }
    if (bc.out_shape != x.shape)
        throw config_error("mask site '" + site.site_id + "': weight shape " +
                           shape_str(site.weight.shape) + " does not broadcast to activation " +
                           shape_str(x.shape));
    Tape<T>* tp = x.attached() ? x.tape : nullptr;
    if (!tp) return x.detached();
    int px = x.node;
    auto wd = site.weight.data;
    return detail::make_result<T>(tp, x.shape, x.data,
                                  [px, wd, bc](Tape<T>& t, const std::vector<T>& g) {
                                      auto& gx = t.grad(px);
                                      bc.for_each([&](size_t o, size_t, size_t wi) {
                                          gx[o] += g[o] * (*wd)[wi];
                                      });
                                  });
}

// Forward value equals x; no gradient flows to x.
template <class T>
Tensor<T> stop_gradient(const Tensor<T>& x) {
    return x.detached();
}

} // namespace gradroute
