#pragma once

#include <cmath>
#include <sstream>

#include "gradroute/core/tape.hpp"
#include "gradroute/nn/params.hpp"

namespace gradroute {

struct LrSchedule {
    enum class Kind { Constant, LinearDecay, CosineWarmup, PpoAnneal };
    Kind kind = Kind::Constant;
    double lr_start = 1e-3;
    double lr_end = 0.0;       // linear-decay endpoint
    size_t total_steps = 1;
    size_t warmup_steps = 0;   // cosine-with-warmup only

    // Learning rate applied at `step` (0-based). Endpoints are exact: step 0
    // gives lr_start (after warmup ramp for cosine), the final step gives the
    // declared end value.
    double lr(size_t step) const {
        size_t last = total_steps > 1 ? total_steps - 1 : 1;
        double frac = std::min<double>(1.0, double(step) / double(last));
        switch (kind) {
            case Kind::Constant: return lr_start;
            case Kind::LinearDecay: return lr_start + (lr_end - lr_start) * frac;
            case Kind::PpoAnneal: return lr_start * (1.0 - frac);
            case Kind::CosineWarmup: {
                if (warmup_steps > 0 && step < warmup_steps)
                    return lr_start * double(step + 1) / double(warmup_steps);
                size_t span = last > warmup_steps ? last - warmup_steps : 1;
                double t = std::min<double>(1.0, double(step - std::min(step, warmup_steps)) /
                                                     double(span));
                return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(t * M_PI));
            }
        }
        return lr_start;
    }
};

template <class T>
struct AdamState {
    T lr = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    T weight_decay = T(0);
    bool decoupled = true; // false: classic L2 (decay added to the gradient)

    size_t step = 0;
    std::map<std::string, std::vector<T>> m, v;
};

// Standard Adam with bias correction. Decoupled weight decay multiplies the
// parameter by (1 - lr·wd) before the Adam delta. `grads` must cover exactly
// the parameters in `ps`. `lr_override` < 0 means use state.lr.
template <class T>
void adam_step(AdamState<T>& st, ParamStore<T>& ps, const GradientMap<T>& grads,
               T lr_override = T(-1)) {
    if (grads.size() != ps.size()) {
        std::ostringstream os;
        os << "adam_step: gradient keys do not match parameters; missing:";
        for (const auto& [name, t] : ps)
            if (!grads.count(name)) os << ' ' << name;
        os << "; extra:";
        for (const auto& [name, g] : grads)
            if (!ps.has(name)) os << ' ' << name;
        throw usage_error(os.str());
    }
    for (const auto& [name, g] : grads)
        if (!ps.has(name)) throw usage_error("adam_step: extra gradient key " + name);

    T lr = lr_override >= T(0) ? lr_override : st.lr;
    ++st.step;
    T bc1 = T(1) - std::pow(st.beta1, T(st.step));
    T bc2 = T(1) - std::pow(st.beta2, T(st.step));
    for (auto& [name, param] : ps) {
        const auto& g = grads.at(name);
        if (g.shape != param.shape)
            throw usage_error("adam_step: gradient shape mismatch for " + name);
        auto& pv = *param.data;
        const auto& gv = *g.data;
        auto& mv = st.m[name];
        auto& vv = st.v[name];
        if (mv.empty()) { mv.assign(pv.size(), T(0)); vv.assign(pv.size(), T(0)); }
        for (size_t i = 0; i < pv.size(); ++i) {
            T gi = gv[i];
            if (!st.decoupled && st.weight_decay != T(0)) gi += st.weight_decay * pv[i];
            if (st.decoupled && st.weight_decay != T(0)) pv[i] *= (T(1) - lr * st.weight_decay);
            mv[i] = st.beta1 * mv[i] + (T(1) - st.beta1) * gi;
            vv[i] = st.beta2 * vv[i] + (T(1) - st.beta2) * gi * gi;
            T mhat = mv[i] / bc1, vhat = vv[i] / bc2;
            pv[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

// Scales every gradient by max_norm/norm when the global L2 norm exceeds
// max_norm. Scaled tensors get fresh buffers; an un-clipped map is returned
// as-is (shared buffers).
template <class T>
GradientMap<T> clip_global_norm(GradientMap<T> grads, T max_norm) {
    if (!(max_norm > T(0))) throw usage_error("clip_global_norm: max_norm must be positive");
    T sq = T(0);
    for (const auto& [name, g] : grads)
        for (T x : *g.data) sq += x * x;
    T norm = std::sqrt(sq);
    if (norm <= max_norm) return grads;
    T s = max_norm / norm;
    for (auto& [name, g] : grads) {
        auto scaled = std::make_shared<std::vector<T>>(*g.data);
        for (T& x : *scaled) x *= s;
        g = Tensor<T>{g.shape, scaled};
    }
    return grads;
}

} // namespace gradroute
