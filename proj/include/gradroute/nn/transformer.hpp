#pragma once

#include <map>
#include <set>

#include "gradroute/core/ops.hpp"
#include "gradroute/core/route_ops.hpp"
#include "gradroute/nn/params.hpp"

namespace gradroute {

// Decoder-only causal transformer: learned positional embeddings, pre-LN
// blocks, GELU MLPs, untied unembedding.
struct TransformerSpec {
    size_t n_layers = 4;
    size_t d_model = 128;
    size_t n_heads = 4;
    size_t vocab_size = 0;
    size_t max_seq_len = 64;
    size_t mlp_hidden = 512;

    void validate() const {
        if (!n_layers || !d_model || !n_heads || !vocab_size || !max_seq_len || !mlp_hidden)
            throw config_error("TransformerSpec: all sizes must be positive");
        if (d_model % n_heads != 0)
            throw config_error("TransformerSpec: d_model " + std::to_string(d_model) +
                               " not divisible by n_heads " + std::to_string(n_heads));
    }
};

// Optional per-forward routing hooks. Mask weights never change forward
// values; they only reweight gradients at the named sites.
template <class T>
struct LmHooks {
    // MLP hidden-activation masks (ERA). When the layer has expanded neurons,
    // the hidden activation is split at orig_width and the two slices get
    // separate mask sites; otherwise only `orig` applies to the whole hidden.
    struct MlpMask {
        size_t orig_width = 0;
        MaskSite<T> orig;
        bool has_expanded = false;
        MaskSite<T> expanded;
    };
    std::map<size_t, MlpMask> mlp_masks;

    // Residual-stream masks applied after each listed block.
    std::map<size_t, MaskSite<T>> residual_masks;

    // Layers whose MLP hidden activations should be collected (for L1
    // penalties). Collected pre-mask so the penalty backpropagates unrouted.
    std::set<size_t> l1_layers;
    std::vector<Tensor<T>> l1_activations;

    // Steering: add steer_value to residual dimension steer_dim after block
    // steer_after_layer.
    bool steer = false;
    size_t steer_after_layer = 0;
    size_t steer_dim = 0;
    T steer_value = T(0);
};

template <class T>
void init_transformer_params(ParamStore<T>& ps, const TransformerSpec& spec, Rng& rng) {
    spec.validate();
    size_t D = spec.d_model;
    ps.add_normal("tok_emb", {spec.vocab_size, D}, T(0.02), rng);
    ps.add_normal("pos_emb", {spec.max_seq_len, D}, T(0.02), rng);
    for (size_t l = 0; l < spec.n_layers; ++l) {
        std::string p = "l" + std::to_string(l) + ".";
        for (const char* ln : {"ln1.", "ln2."}) {
            ps.add(p + ln + "g", {D}, std::vector<T>(D, T(1)));
            ps.add_zeros(p + ln + "b", {D});
        }
        for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
            ps.add_fan_in_uniform(p + w, {D, D}, D, rng);
        for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
            ps.add_zeros(p + b, {D});
        ps.add_fan_in_uniform(p + "mlp.w1", {D, spec.mlp_hidden}, D, rng);
        ps.add_zeros(p + "mlp.b1", {spec.mlp_hidden});
        ps.add_fan_in_uniform(p + "mlp.w2", {spec.mlp_hidden, D}, spec.mlp_hidden, rng);
        ps.add_zeros(p + "mlp.b2", {D});
    }
    ps.add(std::string("lnf.g"), {D}, std::vector<T>(D, T(1)));
    ps.add_zeros("lnf.b", {D});
    ps.add_fan_in_uniform("unembed", {D, spec.vocab_size}, D, rng);
}

namespace detail {

template <class T>
Tensor<T> causal_mask_bias(size_t S) {
    auto data = std::make_shared<std::vector<T>>(S * S, T(0));
    for (size_t i = 0; i < S; ++i)
        for (size_t j = i + 1; j < S; ++j) (*data)[i * S + j] = T(-1e9);
    return Tensor<T>{{S, S}, data};
}

template <class T>
Tensor<T> attention(Tape<T>& tape, const ParamStore<T>& ps, const std::string& p, Tensor<T> x,
                    size_t B, size_t S, size_t D, size_t H) {
    size_t dh = D / H;
    auto proj = [&](const char* w, const char* b) {
        Tensor<T> y = add(matmul(x, ps.use(tape, p + w)), ps.use(tape, p + b));
        // [B,S,D] -> [B*H,S,dh]
        return reshape(transpose(reshape(y, {B, S, H, dh}), 1, 2), {B * H, S, dh});
    };
    Tensor<T> q = proj("attn.wq", "attn.bq");
    Tensor<T> k = proj("attn.wk", "attn.bk");
    Tensor<T> v = proj("attn.wv", "attn.bv");
    Tensor<T> scores = scale(bmm(q, transpose(k, 1, 2)), T(1) / std::sqrt(T(dh)));
    Tensor<T> att = softmax(add(scores, causal_mask_bias<T>(S)));
    Tensor<T> o = reshape(transpose(reshape(bmm(att, v), {B, H, S, dh}), 1, 2), {B, S, D});
    return add(matmul(o, ps.use(tape, p + "attn.wo")), ps.use(tape, p + "attn.bo"));
}

} // namespace detail

// tokens: B*S ids, row-major. Returns logits [B, S, vocab].
template <class T>
Tensor<T> transformer_forward(Tape<T>& tape, const ParamStore<T>& ps, const TransformerSpec& spec,
                              const std::vector<int>& tokens, size_t B, size_t S,
                              LmHooks<T>* hooks = nullptr) {
    spec.validate();
    if (tokens.size() != B * S) throw usage_error("transformer_forward: token count mismatch");
    if (S > spec.max_seq_len)
        throw usage_error("transformer_forward: sequence length " + std::to_string(S) +
                          " exceeds max_seq_len " + std::to_string(spec.max_seq_len));
    size_t D = spec.d_model;

    Tensor<T> x = embedding(ps.use(tape, "tok_emb"), tokens, {B, S});
    Tensor<T> pos = slice(ps.use(tape, "pos_emb"), 0, 0, S); // [S,D] broadcasts over batch
    x = add(x, pos);

    for (size_t l = 0; l < spec.n_layers; ++l) {
        std::string p = "l" + std::to_string(l) + ".";
        const MaskSite<T>* res_mask = nullptr;
        if (hooks) {
            auto rit = hooks->residual_masks.find(l);
            if (rit != hooks->residual_masks.end()) res_mask = &rit->second;
        }
        Tensor<T> a = layer_norm(x, ps.use(tape, p + "ln1.g"), ps.use(tape, p + "ln1.b"));
        x = add(x, detail::attention(tape, ps, p, a, B, S, D, spec.n_heads));
        // masked after each residual write so writes into non-target dims are
        // cut before any cross-dimension mixing above
        if (res_mask) x = route_mask(x, *res_mask);

        Tensor<T> m = layer_norm(x, ps.use(tape, p + "ln2.g"), ps.use(tape, p + "ln2.b"));
        Tensor<T> h = gelu(add(matmul(m, ps.use(tape, p + "mlp.w1")), ps.use(tape, p + "mlp.b1")));
        if (hooks && hooks->l1_layers.count(l)) hooks->l1_activations.push_back(h);
        if (hooks) {
            auto it = hooks->mlp_masks.find(l);
            if (it != hooks->mlp_masks.end()) {
                const auto& mk = it->second;
                if (mk.has_expanded) {
                    size_t hw = h.shape.back();
                    if (mk.orig_width >= hw)
                        throw config_error("LmHooks: orig_width " + std::to_string(mk.orig_width) +
                                           " not inside hidden width " + std::to_string(hw));
                    std::vector<Tensor<T>> parts = {
                        route_mask(slice(h, 2, 0, mk.orig_width), mk.orig),
                        route_mask(slice(h, 2, mk.orig_width, hw - mk.orig_width), mk.expanded)};
                    h = concat(parts, 2);
                } else {
                    h = route_mask(h, mk.orig);
                }
            }
        }
        x = add(x, add(matmul(h, ps.use(tape, p + "mlp.w2")), ps.use(tape, p + "mlp.b2")));

        if (res_mask) x = route_mask(x, *res_mask);
        if (hooks) {
            if (hooks->steer && hooks->steer_after_layer == l) {
                auto sv = std::make_shared<std::vector<T>>(D, T(0));
                (*sv)[hooks->steer_dim] = hooks->steer_value;
                x = add(x, Tensor<T>{{D}, sv});
            }
        }
    }
    x = layer_norm(x, ps.use(tape, "lnf.g"), ps.use(tape, "lnf.b"));
    return matmul(x, ps.use(tape, "unembed"));
}

} // namespace gradroute
