#pragma once

#include "gradroute/core/ops.hpp"
#include "gradroute/core/route_ops.hpp"

namespace gradroute {

// Per-sample routing decision for the MoE layer. None = cursory label, full
// backpropagation through both experts.
enum class MoeRoute { None, Diamond, Ghost };

// MoE(s) = E_D(s)·Γ_D(s) + E_G(s)·Γ_G(s), with a per-sample stop-gradient on
// the expert not matching the routed label. Forward values are unchanged.
// e_diamond/e_ghost: [N,C,H,W]; gate: [N,2] with components in [0,1].
template <class T>
Tensor<T> moe_routed_combine(const Tensor<T>& e_diamond, const Tensor<T>& e_ghost,
                             const Tensor<T>& gate, const std::vector<MoeRoute>& routes) {
    if (e_diamond.shape != e_ghost.shape)
        throw usage_error("moe_routed_combine: expert shapes differ " + shape_str(e_diamond.shape) +
                          " vs " + shape_str(e_ghost.shape));
    size_t n = e_diamond.shape[0];
    if (gate.shape != Shape{n, 2})
        throw usage_error("moe_routed_combine: gate shape " + shape_str(gate.shape) +
                          " does not match batch " + std::to_string(n));
    if (routes.size() != n)
        throw usage_error("moe_routed_combine: routes length does not match batch");

    auto wd = std::make_shared<std::vector<T>>(n), wg = std::make_shared<std::vector<T>>(n);
    for (size_t i = 0; i < n; ++i) {
        (*wd)[i] = routes[i] == MoeRoute::Ghost ? T(0) : T(1);
        (*wg)[i] = routes[i] == MoeRoute::Diamond ? T(0) : T(1);
    }
    Shape per_sample(e_diamond.shape.size(), 1);
    per_sample[0] = n;
    MaskSite<T> site_d{"moe.expert_diamond", Tensor<T>{per_sample, wd}};
    MaskSite<T> site_g{"moe.expert_ghost", Tensor<T>{per_sample, wg}};

    Tensor<T> gd = reshape(slice(gate, 1, 0, 1), per_sample);
    Tensor<T> gg = reshape(slice(gate, 1, 1, 1), per_sample);
    return add(mul(route_mask(e_diamond, site_d), gd), mul(route_mask(e_ghost, site_g), gg));
}

} // namespace gradroute
