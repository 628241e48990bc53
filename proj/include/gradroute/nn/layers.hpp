#pragma once

#include "gradroute/core/ops.hpp"
#include "gradroute/nn/params.hpp"

namespace gradroute {

enum class Activation { Relu, Gelu };

// Plain fully-connected stack. Hidden layers are affine + activation; the
// final layer is linear (no bias) or affine.
struct MlpSpec {
    std::vector<size_t> widths;           // at least two entries, all positive
    Activation activation = Activation::Relu;
    bool final_affine = true;             // false: final layer is bias-free

    void validate() const {
        if (widths.size() < 2) throw config_error("MlpSpec: need at least two widths");
        for (size_t w : widths)
            if (w == 0) throw config_error("MlpSpec: widths must be positive");
    }
};

template <class T>
void init_mlp_params(ParamStore<T>& ps, const std::string& prefix, const MlpSpec& spec, Rng& rng) {
    spec.validate();
    for (size_t i = 0; i + 1 < spec.widths.size(); ++i) {
        size_t in = spec.widths[i], out = spec.widths[i + 1];
        ps.add_fan_in_uniform(prefix + ".w" + std::to_string(i), {in, out}, in, rng);
        bool last = (i + 2 == spec.widths.size());
        if (!last || spec.final_affine)
            ps.add_zeros(prefix + ".b" + std::to_string(i), {out});
    }
}

template <class T>
Tensor<T> apply_activation(const Tensor<T>& x, Activation a) {
    return a == Activation::Relu ? relu(x) : gelu(x);
}

// x: [batch, widths.front()] -> [batch, widths.back()]
template <class T>
Tensor<T> mlp_forward(Tape<T>& tape, const ParamStore<T>& ps, const std::string& prefix,
                      const MlpSpec& spec, Tensor<T> x) {
    for (size_t i = 0; i + 1 < spec.widths.size(); ++i) {
        x = matmul(x, ps.use(tape, prefix + ".w" + std::to_string(i)));
        bool last = (i + 2 == spec.widths.size());
        if (!last || spec.final_affine)
            x = add(x, ps.use(tape, prefix + ".b" + std::to_string(i)));
        if (!last) x = apply_activation(x, spec.activation);
    }
    return x;
}

// Affine layer helper used by the policy/critic networks.
template <class T>
Tensor<T> linear(Tape<T>& tape, const ParamStore<T>& ps, const std::string& prefix, Tensor<T> x) {
    return add(matmul(x, ps.use(tape, prefix + ".w")), ps.use(tape, prefix + ".b"));
}

template <class T>
void init_linear(ParamStore<T>& ps, const std::string& prefix, size_t in, size_t out, Rng& rng) {
    ps.add_fan_in_uniform(prefix + ".w", {in, out}, in, rng);
    ps.add_zeros(prefix + ".b", {out});
}

template <class T>
void init_conv(ParamStore<T>& ps, const std::string& prefix, size_t out_ch, size_t in_ch, size_t k,
               Rng& rng) {
    ps.add_fan_in_uniform(prefix + ".w", {out_ch, in_ch, k, k}, in_ch * k * k, rng);
    ps.add_zeros(prefix + ".b", {out_ch});
}

template <class T>
Tensor<T> conv_layer(Tape<T>& tape, const ParamStore<T>& ps, const std::string& prefix, Tensor<T> x,
                     size_t pad) {
    Tensor<T> b = ps.use(tape, prefix + ".b");
    return conv2d(x, ps.use(tape, prefix + ".w"), &b, pad);
}

} // namespace gradroute
