#pragma once

#include "gradroute/nn/transformer.hpp"

namespace gradroute {

// Route one token's prediction gradients into a single residual-stream
// dimension over a layer range.
struct ResidualRouteConfig {
    int routed_token = -1;
    size_t target_dim = 0;
    size_t layer_lo = 0;
    size_t layer_hi = 0; // inclusive

    void validate(const TransformerSpec& spec) const {
        if (target_dim >= spec.d_model)
            throw config_error("ResidualRouteConfig: target_dim " + std::to_string(target_dim) +
                               " >= d_model " + std::to_string(spec.d_model));
        if (layer_lo > layer_hi || layer_hi >= spec.n_layers)
            throw config_error("ResidualRouteConfig: layer range [" + std::to_string(layer_lo) +
                               "," + std::to_string(layer_hi) + "] outside model depth " +
                               std::to_string(spec.n_layers));
    }
};

// targets: the token each position predicts (B*S, row-major). At positions
// predicting the routed token, the residual mask is 0 everywhere except 1 at
// target_dim, applied after every block in [layer_lo, layer_hi]; all other
// positions get all-ones masks.
template <class T>
void build_residual_route(const ResidualRouteConfig& cfg, const TransformerSpec& spec,
                          const std::vector<int>& targets, size_t B, size_t S, LmHooks<T>& hooks) {
    cfg.validate(spec);
    if (targets.size() != B * S) throw usage_error("build_residual_route: target count mismatch");
    size_t D = spec.d_model;
    auto wv = std::make_shared<std::vector<T>>(B * S * D, T(1));
    for (size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] != cfg.routed_token) continue;
        for (size_t d = 0; d < D; ++d) (*wv)[i * D + d] = d == cfg.target_dim ? T(1) : T(0);
    }
    Tensor<T> w{{B, S, D}, wv};
    for (size_t l = cfg.layer_lo; l <= cfg.layer_hi; ++l)
        hooks.residual_masks[l] = MaskSite<T>{"l" + std::to_string(l) + ".residual", w};
}

} // namespace gradroute
