#pragma once

#include "gradroute/nn/layers.hpp"
#include "gradroute/routing/moe.hpp"

namespace gradroute {

// Gridworld policy: obs ▷ MoE ▷ Conv ▷ Conv ▷ Linear ▷ Linear (softmax at the
// use site), ReLU before every conv/linear after the MoE. Each expert is one
// 3×3 conv (pad 1) + 2×2 max-pool; the gate is flatten ▷ linear ▷ relu ▷
// linear ▷ sigmoid with two outputs.
struct MoePolicySpec {
    size_t in_channels = 4;
    size_t grid = 5;
    size_t expert_channels = 16;
    size_t trunk_channels = 16;
    size_t gate_hidden = 32;
    size_t n_actions = 4;

    size_t pooled() const { return grid / 2; }
    size_t trunk_flat() const { return trunk_channels * pooled() * pooled(); }

    void validate() const {
        if (!in_channels || grid < 5 || !expert_channels || !trunk_channels || !gate_hidden ||
            !n_actions)
            throw config_error("MoePolicySpec: invalid sizes");
    }
};

template <class T>
void init_moe_policy_params(ParamStore<T>& ps, const MoePolicySpec& spec, Rng& rng) {
    spec.validate();
    init_conv(ps, "policy.expert_d", spec.expert_channels, spec.in_channels, 3, rng);
    init_conv(ps, "policy.expert_g", spec.expert_channels, spec.in_channels, 3, rng);
    size_t flat_in = spec.in_channels * spec.grid * spec.grid;
    init_linear(ps, "policy.gate.l0", flat_in, spec.gate_hidden, rng);
    init_linear(ps, "policy.gate.l1", spec.gate_hidden, 2, rng);
    init_conv(ps, "policy.trunk.c0", spec.trunk_channels, spec.expert_channels, 3, rng);
    init_conv(ps, "policy.trunk.c1", spec.trunk_channels, spec.trunk_channels, 3, rng);
    init_linear(ps, "policy.trunk.l0", spec.trunk_flat(), spec.trunk_flat(), rng);
    init_linear(ps, "policy.trunk.l1", spec.trunk_flat(), spec.n_actions, rng);
}

// Critic: same trunk family applied to the raw observation, scalar output.
// No MoE and no routing.
template <class T>
void init_critic_params(ParamStore<T>& ps, const MoePolicySpec& spec, Rng& rng) {
    spec.validate();
    init_conv(ps, "critic.c0", spec.trunk_channels, spec.in_channels, 3, rng);
    init_conv(ps, "critic.c1", spec.trunk_channels, spec.trunk_channels, 3, rng);
    size_t flat = spec.trunk_channels * spec.pooled() * spec.pooled();
    init_linear(ps, "critic.l0", flat, flat, rng);
    init_linear(ps, "critic.l1", flat, 1, rng);
}

template <class T>
struct MoePolicyOut {
    Tensor<T> logits; // [N, n_actions], pre-softmax
    Tensor<T> gate;   // [N, 2], post-sigmoid (pre-override)
};

// obs: [N, in_channels, grid, grid]. routes: per-sample stop-gradient choice
// (all None for unrouted forward). gate_override, if given, replaces the gate
// outputs after the gating network runs: [N, 2] detached values.
template <class T>
MoePolicyOut<T> moe_policy_forward(Tape<T>& tape, const ParamStore<T>& ps,
                                   const MoePolicySpec& spec, const Tensor<T>& obs,
                                   const std::vector<MoeRoute>& routes,
                                   const Tensor<T>* gate_override = nullptr) {
    size_t n = obs.shape[0];
    Tensor<T> e_d = maxpool2d(conv_layer(tape, ps, "policy.expert_d", obs, 1));
    Tensor<T> e_g = maxpool2d(conv_layer(tape, ps, "policy.expert_g", obs, 1));

    Tensor<T> flat = reshape(obs, {n, spec.in_channels * spec.grid * spec.grid});
    Tensor<T> gate = sigmoid(
        linear(tape, ps, "policy.gate.l1", relu(linear(tape, ps, "policy.gate.l0", flat))));
    Tensor<T> gate_used = gate;
    if (gate_override) {
        if (gate_override->shape != Shape{n, 2})
            throw usage_error("moe_policy_forward: gate_override shape " +
                              shape_str(gate_override->shape));
        gate_used = gate_override->detached();
    }

    Tensor<T> x = moe_routed_combine(e_d, e_g, gate_used, routes);
    x = conv_layer(tape, ps, "policy.trunk.c0", relu(x), 1);
    x = conv_layer(tape, ps, "policy.trunk.c1", relu(x), 1);
    x = reshape(relu(x), {n, spec.trunk_flat()});
    x = linear(tape, ps, "policy.trunk.l0", x);
    Tensor<T> logits = linear(tape, ps, "policy.trunk.l1", relu(x));
    return {logits, gate};
}

// obs: [N, in_channels, grid, grid] -> values [N].
template <class T>
Tensor<T> critic_forward(Tape<T>& tape, const ParamStore<T>& ps, const MoePolicySpec& spec,
                         const Tensor<T>& obs) {
    size_t n = obs.shape[0];
    Tensor<T> x = maxpool2d(conv_layer(tape, ps, "critic.c0", obs, 1));
    x = conv_layer(tape, ps, "critic.c1", relu(x), 1);
    size_t flat = spec.trunk_channels * spec.pooled() * spec.pooled();
    x = reshape(relu(x), {n, flat});
    x = linear(tape, ps, "critic.l0", x);
    x = linear(tape, ps, "critic.l1", relu(x));
    return reshape(x, {n});
}

} // namespace gradroute
