#pragma once

#include <set>

#include "gradroute/nn/transformer.hpp"
#include "gradroute/routing/token_mask.hpp"

namespace gradroute {

struct EraConfig {
    std::set<size_t> target_layers = {0, 1, 2, 3, 4};
    size_t expansion_width = 64;
    double original_dim_weight = -0.75;
    double activation_l1_weight = 1e-4;

    void validate(size_t n_layers) const {
        if (expansion_width == 0) throw config_error("EraConfig: expansion_width must be > 0");
        if (target_layers.empty()) throw config_error("EraConfig: no target layers");
        for (size_t l : target_layers)
            if (l >= n_layers)
                throw config_error("EraConfig: target layer " + std::to_string(l) +
                                   " outside model depth " + std::to_string(n_layers));
    }
};

// Which layers are expanded and their pre-expansion MLP hidden widths.
struct EraBookkeeping {
    bool expanded = false;
    std::map<size_t, size_t> orig_width;
};

// Expand: grow each target layer's MLP hidden width by expansion_width. New
// input weights are randomly initialized; new output weights likewise, unless
// zero_output_weights (which makes expansion a forward no-op).
template <class T>
void era_expand(ParamStore<T>& ps, const TransformerSpec& spec, const EraConfig& cfg, Rng& rng,
                EraBookkeeping& bk, bool zero_output_weights = false) {
    if (bk.expanded) throw usage_error("era_expand: model already expanded");
    cfg.validate(spec.n_layers);
    size_t D = spec.d_model, E = cfg.expansion_width;
    for (size_t l : cfg.target_layers) {
        std::string p = "l" + std::to_string(l) + ".mlp.";
        size_t H = ps.shape(p + "w1")[1];

        const auto& w1 = ps.raw(p + "w1"); // [D,H]
        std::vector<T> nw1(D * (H + E));
        double lim_in = std::sqrt(1.0 / double(D));
        for (size_t d = 0; d < D; ++d) {
            std::copy(w1.begin() + d * H, w1.begin() + (d + 1) * H, nw1.begin() + d * (H + E));
            for (size_t e = 0; e < E; ++e)
                nw1[d * (H + E) + H + e] = T(rng.uniform(-lim_in, lim_in));
        }
        ps.replace(p + "w1", {D, H + E}, std::move(nw1));

        std::vector<T> nb1 = ps.raw(p + "b1");
        nb1.resize(H + E, T(0));
        ps.replace(p + "b1", {H + E}, std::move(nb1));

        std::vector<T> nw2 = ps.raw(p + "w2"); // [H,D] -> append E rows
        nw2.resize((H + E) * D, T(0));
        if (!zero_output_weights) {
            double lim_out = std::sqrt(1.0 / double(H + E));
            for (size_t i = H * D; i < (H + E) * D; ++i) nw2[i] = T(rng.uniform(-lim_out, lim_out));
        }
        ps.replace(p + "w2", {H + E, D}, std::move(nw2));

        bk.orig_width[l] = H;
    }
    bk.expanded = true;
}

// Ablate: drop the expanded hidden dimensions, restoring the original shapes.
// Equivalent to forcing the expanded units' outputs to zero.
template <class T>
void era_ablate(ParamStore<T>& ps, EraBookkeeping& bk) {
    if (!bk.expanded) throw usage_error("era_ablate: model carries no expansion bookkeeping");
    for (const auto& [l, H] : bk.orig_width) {
        std::string p = "l" + std::to_string(l) + ".mlp.";
        size_t D = ps.shape(p + "w1")[0];
        size_t HE = ps.shape(p + "w1")[1];

        const auto& w1 = ps.raw(p + "w1");
        std::vector<T> nw1(D * H);
        for (size_t d = 0; d < D; ++d)
            std::copy(w1.begin() + d * HE, w1.begin() + d * HE + H, nw1.begin() + d * H);
        ps.replace(p + "w1", {D, H}, std::move(nw1));

        std::vector<T> nb1 = ps.raw(p + "b1");
        nb1.resize(H);
        ps.replace(p + "b1", {H}, std::move(nb1));

        std::vector<T> nw2 = ps.raw(p + "w2");
        nw2.resize(H * D);
        ps.replace(p + "w2", {H, D}, std::move(nw2));
    }
    bk.expanded = false;
    bk.orig_width.clear();
}

// Route: per-position MLP masks for the target layers. `tokens` carries one
// token id per position (B*S, row-major) — the token whose table weight keys
// the mask at that position. Original dims get w·1 + (1−w)·original_dim_weight,
// expanded dims and unlisted tokens get 1.
template <class T>
void build_era_route(const std::map<int, double>& table, const EraConfig& cfg,
                     const EraBookkeeping& bk, const std::vector<int>& tokens, size_t B, size_t S,
                     LmHooks<T>& hooks) {
    if (!bk.expanded) throw usage_error("build_era_route: model not expanded");
    if (tokens.size() != B * S) throw usage_error("build_era_route: token count mismatch");
    auto wv = std::make_shared<std::vector<T>>(B * S);
    for (size_t i = 0; i < tokens.size(); ++i) {
        auto it = table.find(tokens[i]);
        double w = it == table.end() ? 1.0 : it->second;
        (*wv)[i] = T(w * 1.0 + (1.0 - w) * cfg.original_dim_weight);
    }
    Tensor<T> orig_w{{B, S, 1}, wv};
    for (size_t l : cfg.target_layers) {
        typename LmHooks<T>::MlpMask mk;
        mk.orig_width = bk.orig_width.at(l);
        mk.orig = MaskSite<T>{"l" + std::to_string(l) + ".mlp.orig", orig_w};
        mk.has_expanded = true;
        mk.expanded = MaskSite<T>::scalar("l" + std::to_string(l) + ".mlp.expanded", T(1));
        hooks.mlp_masks[l] = mk;
    }
    hooks.l1_layers.insert(cfg.target_layers.begin(), cfg.target_layers.end());
}

} // namespace gradroute
