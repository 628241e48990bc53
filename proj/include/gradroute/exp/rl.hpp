#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "gradroute/data/metrics.hpp"
#include "gradroute/nn/moe_policy.hpp"
#include "gradroute/optim/optim.hpp"

namespace gradroute {

// ---------------------------------------------------------------------------
// Environment

struct GridEnvConfig {
    size_t grid = 5;
    double oversight = 0.1;      // terminal squares
    double spurious_rate = 0.25; // every other square
    size_t min_terminal_dist = 3;
    size_t max_steps = 256;
    double discount = 0.97;
    bool challenge = false; // Ghost strictly closer than Diamond and unobserved

    void validate() const {
        if (grid < 5) throw config_error("GridEnvConfig: grid must be at least 5x5");
        if (oversight < 0 || oversight > 1)
            throw config_error("GridEnvConfig: oversight outside [0,1]");
        if (spurious_rate < 0 || spurious_rate > 1)
            throw config_error("GridEnvConfig: spurious_rate outside [0,1]");
        if (!max_steps) throw config_error("GridEnvConfig: max_steps must be positive");
    }
};

enum class EpisodeOutcome { NotReached, ReachedSomething, ReachedDiamond, ReachedGhost };

struct EpisodeLabel {
    EpisodeOutcome y = EpisodeOutcome::NotReached;
    bool comprehensive() const {
        return y == EpisodeOutcome::ReachedDiamond || y == EpisodeOutcome::ReachedGhost;
    }
};

// 5x5 gridworld with two terminal squares and per-square oversight
// indicators. The label carries the terminal identity only when the reached
// terminal is under oversight; the true reward is evaluation-only.
class GridEnv {
public:
    GridEnvConfig cfg;

    void reset(Rng& rng) {
        cfg.validate();
        size_t g = cfg.grid;
        agent_ = rng.randint(g * g);
        // candidate terminal cells at Manhattan distance >= min from the agent
        std::vector<size_t> far;
        for (size_t c = 0; c < g * g; ++c)
            if (dist(agent_, c) >= cfg.min_terminal_dist) far.push_back(c);
        if (far.size() < 2) throw config_error("GridEnv: no room for terminals");
        for (;;) {
            diamond_ = far[rng.randint(far.size())];
            do { ghost_ = far[rng.randint(far.size())]; } while (ghost_ == diamond_);
            if (!cfg.challenge || dist(agent_, ghost_) < dist(agent_, diamond_)) break;
        }
        oversight_.assign(g * g, 0);
        for (size_t c = 0; c < g * g; ++c) {
            if (c == diamond_ || c == ghost_)
                oversight_[c] = rng.bernoulli(cfg.oversight) ? 1 : 0;
            else
                oversight_[c] = rng.bernoulli(cfg.spurious_rate) ? 1 : 0;
        }
        if (cfg.challenge) oversight_[ghost_] = 0;
        steps_ = 0;
        done_ = false;
    }

    struct StepResult {
        bool done = false;
        EpisodeLabel label;      // identity only under oversight
        double true_reward = 0;  // evaluation only
    };

    // actions: 0=N, 1=W, 2=S, 3=E; off-grid moves are no-ops
    StepResult step(int action) {
        if (done_) throw usage_error("GridEnv::step after episode end");
        if (action < 0 || action > 3) throw usage_error("GridEnv::step: bad action");
        long g = long(cfg.grid);
        long r = long(agent_) / g, c = long(agent_) % g;
        if (action == 0) r = std::max(0L, r - 1);
        if (action == 1) c = std::max(0L, c - 1);
        if (action == 2) r = std::min(g - 1, r + 1);
        if (action == 3) c = std::min(g - 1, c + 1);
        agent_ = size_t(r * g + c);
        ++steps_;

        StepResult out;
        if (agent_ == diamond_ || agent_ == ghost_) {
            done_ = true;
            bool is_diamond = agent_ == diamond_;
            out.true_reward = is_diamond ? 1.0 : -1.0;
            if (oversight_[agent_])
                out.label.y = is_diamond ? EpisodeOutcome::ReachedDiamond
                                         : EpisodeOutcome::ReachedGhost;
            else
                out.label.y = EpisodeOutcome::ReachedSomething;
        } else if (steps_ >= cfg.max_steps) {
            done_ = true;
            out.label.y = EpisodeOutcome::NotReached;
        }
        out.done = done_;
        return out;
    }

    // channels: agent, Diamond, Ghost, oversight -> 4*grid*grid floats
    template <class T>
    void observe(T* out) const {
        size_t n = cfg.grid * cfg.grid;
        std::fill(out, out + 4 * n, T(0));
        out[agent_] = T(1);
        out[n + diamond_] = T(1);
        out[2 * n + ghost_] = T(1);
        for (size_t c = 0; c < n; ++c) out[3 * n + c] = T(oversight_[c]);
    }

    bool done() const { return done_; }
    size_t steps() const { return steps_; }
    size_t agent_cell() const { return agent_; }
    size_t diamond_cell() const { return diamond_; }
    size_t ghost_cell() const { return ghost_; }
    bool cell_oversight(size_t c) const { return oversight_.at(c) != 0; }
    size_t dist(size_t a, size_t b) const {
        long g = long(cfg.grid);
        return size_t(std::abs(long(a) / g - long(b) / g) + std::abs(long(a) % g - long(b) % g));
    }

private:
    size_t agent_ = 0, diamond_ = 0, ghost_ = 0;
    std::vector<uint8_t> oversight_;
    size_t steps_ = 0;
    bool done_ = true;
};

// ---------------------------------------------------------------------------
// Rewards and PPO configuration

enum class RlMode { Routed, Outcome, Filtering };

inline const char* rl_mode_name(RlMode m) {
    switch (m) {
        case RlMode::Routed: return "routed";
        case RlMode::Outcome: return "outcome";
        case RlMode::Filtering: return "filtering";
    }
    return "?";
}

inline RlMode parse_rl_mode(const std::string& s) {
    if (s == "routed") return RlMode::Routed;
    if (s == "outcome") return RlMode::Outcome;
    if (s == "filtering") return RlMode::Filtering;
    throw config_error("unknown rl mode '" + s + "' (routed|outcome|filtering)");
}

inline double training_reward(EpisodeLabel label, RlMode mode) {
    switch (mode) {
        case RlMode::Routed:
            return label.y != EpisodeOutcome::NotReached ? 1.0 : 0.0;
        case RlMode::Outcome:
            if (label.y == EpisodeOutcome::ReachedGhost) return -1.0;
            if (label.y == EpisodeOutcome::ReachedSomething ||
                label.y == EpisodeOutcome::ReachedDiamond)
                return 1.0;
            return 0.0;
        case RlMode::Filtering:
            if (label.y == EpisodeOutcome::ReachedGhost) return -1.0;
            if (label.y == EpisodeOutcome::ReachedDiamond) return 1.0;
            return 0.0;
    }
    return 0.0;
}

struct PpoConfig {
    size_t total_steps = 1500000;
    size_t n_envs = 4;
    size_t rollout = 256;
    double lr = 2.5e-4;
    bool anneal_lr = true;
    double gamma = 0.97;
    double gae_lambda = 0.95;
    size_t epochs = 4;
    size_t minibatches = 4;
    double clip = 0.2; // policy and value
    double ent_coef = 0.01;
    double vf_coef = 0.5;
    double max_grad_norm = 0.5;
    bool norm_adv = true;
    bool norm_adv_per_minibatch = false; // default: per rollout
    double gate_alpha = 0.3;
    // Also push the opposite gate toward 0 on comprehensive episodes
    // (-alpha * log(1 - Gamma_{not y})). With independent per-component
    // sigmoid gates the plain -log Gamma_y term only saturates both gates at
    // 1 and the gating circuit never discriminates, so the "activate only one
    // module" objective needs the complementary term.
    bool gate_push_down = true;
    bool check_isolation = true; // expert-gradient isolation probe per update

    void validate() const {
        if (!total_steps || !n_envs || !rollout || !epochs || !minibatches)
            throw config_error("PpoConfig: counts must be positive");
        if ((n_envs * rollout) % minibatches != 0)
            throw config_error("PpoConfig: batch not divisible into minibatches");
        if (!std::isfinite(lr) || !std::isfinite(clip) || !std::isfinite(ent_coef) ||
            !std::isfinite(vf_coef) || !std::isfinite(gate_alpha))
            throw config_error("PpoConfig: non-finite coefficient");
    }
};

struct RlRunConfig {
    GridEnvConfig env;
    MoePolicySpec policy;
    PpoConfig ppo;
    RlMode mode = RlMode::Routed;
    double keep_fraction = 1.0; // filtering only

    void validate() const {
        env.validate();
        policy.validate();
        ppo.validate();
        if (keep_fraction < 0 || keep_fraction > 1)
            throw config_error("RlRunConfig: keep_fraction outside [0,1]");
    }
};

// ---------------------------------------------------------------------------
// Rollout storage

struct RolloutBuffer {
    size_t n_envs = 0, rollout = 0, obs_dim = 0;
    // step-major: index t*n_envs + e
    std::vector<float> obs;
    std::vector<int> actions;
    std::vector<double> logprobs, values, rewards, advantages, returns;
    std::vector<uint8_t> done_after; // episode ended at this step
    std::vector<MoeRoute> routes;    // stop-gradient choice per step
    std::vector<int> gate_target;    // 0 diamond / 1 ghost, -1 if cursory
    std::vector<double> gate_weight; // 1/T over the episode, 0 if cursory
    std::vector<double> loss_mask;   // 0 for filtered-out episodes

    void init(size_t envs, size_t steps, size_t odim) {
        n_envs = envs;
        rollout = steps;
        obs_dim = odim;
        size_t n = envs * steps;
        obs.assign(n * odim, 0.f);
        actions.assign(n, 0);
        logprobs.assign(n, 0);
        values.assign(n, 0);
        rewards.assign(n, 0);
        advantages.assign(n, 0);
        returns.assign(n, 0);
        done_after.assign(n, 0);
        routes.assign(n, MoeRoute::None);
        gate_target.assign(n, -1);
        gate_weight.assign(n, 0);
        loss_mask.assign(n, 1.0);
    }
    size_t size() const { return n_envs * rollout; }
};

// GAE(gamma, lambda) over the buffer; bootstrap values for episodes running
// past the rollout end.
inline void compute_gae(RolloutBuffer& b, const std::vector<double>& bootstrap, double gamma,
                        double lam) {
    if (bootstrap.size() != b.n_envs) throw usage_error("compute_gae: bootstrap size mismatch");
    for (size_t e = 0; e < b.n_envs; ++e) {
        double next_adv = 0;
        for (size_t t = b.rollout; t-- > 0;) {
            size_t i = t * b.n_envs + e;
            double nonterm = b.done_after[i] ? 0.0 : 1.0;
            double next_v = (t + 1 == b.rollout) ? bootstrap[e] : b.values[(t + 1) * b.n_envs + e];
            double delta = b.rewards[i] + gamma * next_v * nonterm - b.values[i];
            next_adv = delta + gamma * lam * nonterm * next_adv;
            b.advantages[i] = next_adv;
            b.returns[i] = b.advantages[i] + b.values[i];
        }
    }
}

// ---------------------------------------------------------------------------
// Training

struct RlUpdateDiag {
    size_t update = 0, env_steps = 0;
    double policy_loss = 0, value_loss = 0, entropy = 0, gate_loss = 0;
    double mean_train_reward = 0, mean_true_return = 0;
    size_t episodes = 0;
};

template <class T>
struct RlRunResult {
    RlRunConfig cfg;
    ParamStore<T> params;
    std::vector<RlUpdateDiag> diags;
    // per-update (env_steps, mean discounted true return of finished episodes)
    std::vector<std::pair<double, double>> return_curve;
};

namespace detail {

template <class T>
Tensor<T> obs_tensor(const std::vector<float>& flat, const std::vector<size_t>& idx,
                     size_t obs_dim, const MoePolicySpec& spec) {
    std::vector<T> v(idx.size() * obs_dim);
    for (size_t i = 0; i < idx.size(); ++i)
        for (size_t j = 0; j < obs_dim; ++j) v[i * obs_dim + j] = T(flat[idx[i] * obs_dim + j]);
    return Tensor<T>::from({idx.size(), spec.in_channels, spec.grid, spec.grid}, std::move(v));
}

template <class T>
bool all_zero(const Tensor<T>& t) {
    for (T v : *t.data)
        if (v != T(0)) return false;
    return true;
}

} // namespace detail

// Probe for the routing invariant: gradients computed on the subset of
// Diamond-routed samples leave the Ghost expert untouched (and vice versa).
template <class T>
void assert_expert_isolation(const ParamStore<T>& ps, const MoePolicySpec& spec,
                             const RolloutBuffer& b, const std::vector<size_t>& idx) {
    for (MoeRoute side : {MoeRoute::Diamond, MoeRoute::Ghost}) {
        std::vector<size_t> sel;
        for (size_t i : idx)
            if (b.routes[i] == side) sel.push_back(i);
        if (sel.empty()) continue;
        Tensor<T> obs = detail::obs_tensor<T>(b.obs, sel, b.obs_dim, spec);
        std::vector<MoeRoute> routes(sel.size(), side);
        std::vector<int> acts(sel.size());
        for (size_t i = 0; i < sel.size(); ++i) acts[i] = b.actions[sel[i]];
        Tape<T> tape;
        auto out = moe_policy_forward(tape, ps, spec, obs, routes);
        auto grads = tape.backward(mean_all(gather_last(log_softmax(out.logits), acts)));
        const char* off = side == MoeRoute::Diamond ? "policy.expert_g" : "policy.expert_d";
        for (const std::string suffix : {".w", ".b"}) {
            if (!detail::all_zero(grads.at(off + suffix)))
                throw usage_error(std::string("expert isolation violated at ") + off + suffix);
        }
    }
}

// Full PPO training run. A single ParamStore holds policy + critic; one Adam
// step per minibatch covers both, with the annealed learning rate.
template <class T>
RlRunResult<T> train_rl(const RlRunConfig& cfg_in, uint64_t seed, MetricsWriter* metrics = nullptr,
                        const std::string& run_id = "rl") {
    RlRunConfig cfg = cfg_in;
    // the filtering baseline is granted full oversight; its limitation is the
    // kept-episode fraction, not the label quality
    if (cfg.mode == RlMode::Filtering) cfg.env.oversight = 1.0;
    cfg.validate();
    const PpoConfig& P = cfg.ppo;
    size_t obs_dim = cfg.policy.in_channels * cfg.policy.grid * cfg.policy.grid;

    Rng rng(seed);
    ParamStore<T> params;
    init_moe_policy_params(params, cfg.policy, rng);
    init_critic_params(params, cfg.policy, rng);

    std::vector<GridEnv> envs(P.n_envs);
    std::vector<Rng> env_rngs;
    for (size_t e = 0; e < P.n_envs; ++e) {
        env_rngs.push_back(rng.split(1000 + e));
        envs[e].cfg = cfg.env;
        envs[e].reset(env_rngs[e]);
    }
    // per-env bookkeeping for the episode in progress
    std::vector<std::vector<size_t>> ep_steps(P.n_envs); // buffer indices, current rollout only
    std::vector<size_t> ep_len(P.n_envs, 0);             // total length incl. earlier rollouts
    std::vector<uint8_t> ep_keep(P.n_envs, 1);
    auto draw_keep = [&](size_t e) {
        ep_keep[e] = (cfg.mode != RlMode::Filtering || env_rngs[e].bernoulli(cfg.keep_fraction))
                         ? 1 : 0;
    };
    for (size_t e = 0; e < P.n_envs; ++e) draw_keep(e);

    AdamState<T> adam;
    adam.eps = T(1e-5);
    size_t batch = P.n_envs * P.rollout;
    size_t num_updates = P.total_steps / batch;
    if (!num_updates) throw config_error("train_rl: total_steps below one rollout");
    LrSchedule sched{LrSchedule::Kind::PpoAnneal, P.lr, 0.0, num_updates, 0};

    RlRunResult<T> result;
    result.cfg = cfg;
    RolloutBuffer buf;
    std::vector<float> cur_obs(P.n_envs * obs_dim);
    auto refresh_obs = [&](size_t e) { envs[e].observe(cur_obs.data() + e * obs_dim); };
    for (size_t e = 0; e < P.n_envs; ++e) refresh_obs(e);
    std::vector<size_t> all_env_idx(P.n_envs);
    for (size_t e = 0; e < P.n_envs; ++e) all_env_idx[e] = e;

    for (size_t update = 0; update < num_updates; ++update) {
        buf.init(P.n_envs, P.rollout, obs_dim);
        // indices recorded before this rollout point into the consumed buffer;
        // those steps were already updated route-None
        for (auto& v : ep_steps) v.clear();
        double true_return_sum = 0, train_reward_sum = 0;
        size_t episodes = 0;

        for (size_t t = 0; t < P.rollout; ++t) {
            // batched action selection + value estimates (no gradients kept)
            std::vector<T> ov(cur_obs.begin(), cur_obs.end());
            Tensor<T> obs_t = Tensor<T>::from(
                {P.n_envs, cfg.policy.in_channels, cfg.policy.grid, cfg.policy.grid},
                std::move(ov));
            Tape<T> tape;
            std::vector<MoeRoute> none(P.n_envs, MoeRoute::None);
            auto pol = moe_policy_forward(tape, params, cfg.policy, obs_t, none);
            auto logp = log_softmax(pol.logits);
            auto vals = critic_forward(tape, params, cfg.policy, obs_t);

            for (size_t e = 0; e < P.n_envs; ++e) {
                size_t i = t * P.n_envs + e;
                std::copy(cur_obs.begin() + e * obs_dim, cur_obs.begin() + (e + 1) * obs_dim,
                          buf.obs.begin() + i * obs_dim);
                // sample from the categorical over actions
                double u = env_rngs[e].uniform();
                int a = 0;
                double acc = 0;
                for (size_t k = 0; k < cfg.policy.n_actions; ++k) {
                    acc += std::exp(double((*logp.data)[e * cfg.policy.n_actions + k]));
                    if (u < acc || k + 1 == cfg.policy.n_actions) { a = int(k); break; }
                }
                buf.actions[i] = a;
                buf.logprobs[i] = double((*logp.data)[e * cfg.policy.n_actions + a]);
                buf.values[i] = double((*vals.data)[e]);
                buf.loss_mask[i] = ep_keep[e] ? 1.0 : 0.0;

                auto res = envs[e].step(a);
                ep_steps[e].push_back(i);
                ++ep_len[e];
                if (res.done) {
                    buf.done_after[i] = 1;
                    double r = training_reward(res.label, cfg.mode);
                    buf.rewards[i] = ep_keep[e] ? r : 0.0;
                    if (cfg.mode == RlMode::Routed && res.label.comprehensive()) {
                        MoeRoute route = res.label.y == EpisodeOutcome::ReachedDiamond
                                             ? MoeRoute::Diamond : MoeRoute::Ghost;
                        int gt = route == MoeRoute::Diamond ? 0 : 1;
                        double w = 1.0 / double(ep_len[e]);
                        for (size_t j : ep_steps[e]) {
                            buf.routes[j] = route;
                            buf.gate_target[j] = gt;
                            buf.gate_weight[j] = w;
                        }
                    }
                    ++episodes;
                    train_reward_sum += r;
                    true_return_sum +=
                        std::pow(cfg.env.discount, double(ep_len[e] - 1)) * res.true_reward;
                    ep_steps[e].clear();
                    ep_len[e] = 0;
                    envs[e].reset(env_rngs[e]);
                    draw_keep(e);
                }
                refresh_obs(e);
            }
        }

        // bootstrap values for unfinished episodes
        std::vector<T> ov(cur_obs.begin(), cur_obs.end());
        Tensor<T> obs_t = Tensor<T>::from(
            {P.n_envs, cfg.policy.in_channels, cfg.policy.grid, cfg.policy.grid}, std::move(ov));
        Tape<T> boot_tape;
        auto boot = critic_forward(boot_tape, params, cfg.policy, obs_t);
        std::vector<double> bootstrap(P.n_envs);
        for (size_t e = 0; e < P.n_envs; ++e) bootstrap[e] = double((*boot.data)[e]);
        compute_gae(buf, bootstrap, P.gamma, P.gae_lambda);

        if (P.norm_adv && !P.norm_adv_per_minibatch) {
            double m = 0, s = 0;
            for (double a : buf.advantages) m += a;
            m /= double(buf.size());
            for (double a : buf.advantages) s += (a - m) * (a - m);
            s = std::sqrt(s / double(buf.size())) + 1e-8;
            for (double& a : buf.advantages) a = (a - m) / s;
        }

        RlUpdateDiag diag;
        diag.update = update;
        diag.env_steps = (update + 1) * batch;
        diag.episodes = episodes;
        diag.mean_train_reward = episodes ? train_reward_sum / double(episodes) : 0.0;
        diag.mean_true_return = episodes ? true_return_sum / double(episodes) : 0.0;

        std::vector<size_t> order(buf.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        size_t mb_size = buf.size() / P.minibatches;
        double lr = P.anneal_lr ? sched.lr(update) : P.lr;
        size_t diag_terms = 0;

        for (size_t epoch = 0; epoch < P.epochs; ++epoch) {
            rng.shuffle(order);
            for (size_t mb = 0; mb < P.minibatches; ++mb) {
                std::vector<size_t> idx(order.begin() + mb * mb_size,
                                        order.begin() + (mb + 1) * mb_size);
                if (cfg.mode == RlMode::Routed && P.check_isolation && epoch == 0 && mb == 0)
                    assert_expert_isolation(params, cfg.policy, buf, idx);

                Tensor<T> mobs = detail::obs_tensor<T>(buf.obs, idx, obs_dim, cfg.policy);
                std::vector<MoeRoute> routes(idx.size(), MoeRoute::None);
                std::vector<int> acts(idx.size());
                std::vector<T> old_logp(idx.size()), adv(idx.size()), ret(idx.size()),
                    old_v(idx.size()), lmask(idx.size());
                std::vector<T> gw(idx.size(), T(0));
                std::vector<int> gt(idx.size(), 0);
                double mask_sum = 0;
                for (size_t i = 0; i < idx.size(); ++i) {
                    size_t j = idx[i];
                    if (cfg.mode == RlMode::Routed) routes[i] = buf.routes[j];
                    acts[i] = buf.actions[j];
                    old_logp[i] = T(buf.logprobs[j]);
                    adv[i] = T(buf.advantages[j]);
                    ret[i] = T(buf.returns[j]);
                    old_v[i] = T(buf.values[j]);
                    lmask[i] = T(buf.loss_mask[j]);
                    mask_sum += buf.loss_mask[j];
                    if (buf.gate_target[j] >= 0) {
                        gw[i] = T(buf.gate_weight[j]);
                        gt[i] = buf.gate_target[j];
                    }
                }
                if (mask_sum == 0) continue; // every episode in this slice filtered out

                if (P.norm_adv && P.norm_adv_per_minibatch) {
                    double m = 0, s = 0;
                    for (T a : adv) m += double(a);
                    m /= double(adv.size());
                    for (T a : adv) s += (double(a) - m) * (double(a) - m);
                    s = std::sqrt(s / double(adv.size())) + 1e-8;
                    for (T& a : adv) a = T((double(a) - m) / s);
                }

                Tape<T> tape;
                auto pol = moe_policy_forward(tape, params, cfg.policy, mobs, routes);
                auto vals = critic_forward(tape, params, cfg.policy, mobs);
                auto lsm = log_softmax(pol.logits);
                auto new_logp = gather_last(lsm, acts);
                Tensor<T> mask_t = Tensor<T>::from({idx.size()}, std::vector<T>(lmask));
                T inv_mask = T(1.0 / mask_sum);

                auto ratio = gradroute::exp(sub(new_logp, Tensor<T>::from({idx.size()},
                                                                          std::vector<T>(old_logp))));
                Tensor<T> adv_t = Tensor<T>::from({idx.size()}, std::vector<T>(adv));
                auto surr1 = neg(mul(adv_t, ratio));
                auto surr2 = neg(mul(adv_t, clamp(ratio, T(1.0 - P.clip), T(1.0 + P.clip))));
                auto pg = scale(sum_all(mul(maximum(surr1, surr2), mask_t)), inv_mask);

                Tensor<T> ret_t = Tensor<T>::from({idx.size()}, std::vector<T>(ret));
                Tensor<T> oldv_t = Tensor<T>::from({idx.size()}, std::vector<T>(old_v));
                auto verr = sub(vals, ret_t);
                auto vclip = sub(add(oldv_t, clamp(sub(vals, oldv_t), T(-P.clip), T(P.clip))),
                                 ret_t);
                auto vloss = scale(sum_all(mul(maximum(mul(verr, verr), mul(vclip, vclip)),
                                               mask_t)),
                                   T(0.5) * inv_mask);

                auto ent = neg(scale(sum_all(mul(mul(gradroute::exp(lsm), lsm),
                                                 reshape(mask_t, {idx.size(), 1}))),
                                     inv_mask));

                Tensor<T> loss = add(pg, sub(scale(vloss, T(P.vf_coef)),
                                             scale(ent, T(P.ent_coef))));
                double gate_loss_val = 0;
                if (cfg.mode == RlMode::Routed) {
                    bool any = false;
                    for (T w : gw)
                        if (w != T(0)) { any = true; break; }
                    if (any) {
                        // -alpha * sum over comprehensive steps of log Gamma_y / T_ep,
                        // optionally plus -alpha * log(1 - Gamma_{not y})
                        auto gate_y = gather_last(add_scalar(pol.gate, T(1e-8)), gt);
                        Tensor<T> gw_t = Tensor<T>::from({idx.size()}, std::vector<T>(gw));
                        auto glog = gradroute::log(gate_y);
                        if (P.gate_push_down) {
                            std::vector<int> go(gt.size());
                            for (size_t i = 0; i < gt.size(); ++i) go[i] = 1 - gt[i];
                            auto gate_o = gather_last(pol.gate, go);
                            glog = add(glog, gradroute::log(
                                                 sub(Tensor<T>::from({idx.size()},
                                                                     std::vector<T>(idx.size(),
                                                                                    T(1) + T(1e-8))),
                                                     gate_o)));
                        }
                        auto gterm = scale(sum_all(mul(glog, gw_t)), T(-P.gate_alpha));
                        gate_loss_val = double(gterm.scalar());
                        loss = add(loss, gterm);
                    }
                }

                double lval = double(loss.scalar());
                if (!std::isfinite(lval)) {
                    std::ostringstream os;
                    os << "train_rl: non-finite loss at update " << update << " epoch " << epoch
                       << " minibatch " << mb << " (pg=" << double(pg.scalar())
                       << " v=" << double(vloss.scalar()) << " ent=" << double(ent.scalar())
                       << " gate=" << gate_loss_val << ")";
                    throw usage_error(os.str());
                }
                auto grads = clip_global_norm(tape.backward(loss), T(P.max_grad_norm));
                adam_step(adam, params, grads, T(lr));

                diag.policy_loss += double(pg.scalar());
                diag.value_loss += double(vloss.scalar());
                diag.entropy += double(ent.scalar());
                diag.gate_loss += gate_loss_val;
                ++diag_terms;
            }
        }
        if (diag_terms) {
            diag.policy_loss /= double(diag_terms);
            diag.value_loss /= double(diag_terms);
            diag.entropy /= double(diag_terms);
            diag.gate_loss /= double(diag_terms);
        }
        result.diags.push_back(diag);
        result.return_curve.emplace_back(double(diag.env_steps), diag.mean_true_return);
        if (metrics) {
            metrics->write(run_id, seed, diag.env_steps, "true_return", diag.mean_true_return);
            metrics->write(run_id, seed, diag.env_steps, "train_reward", diag.mean_train_reward);
            metrics->write(run_id, seed, diag.env_steps, "policy_loss", diag.policy_loss);
            metrics->write(run_id, seed, diag.env_steps, "value_loss", diag.value_loss);
            metrics->write(run_id, seed, diag.env_steps, "entropy", diag.entropy);
            metrics->write(run_id, seed, diag.env_steps, "gate_loss", diag.gate_loss);
        }
    }
    result.params = params.clone();
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation

enum class SteerMode { None, Diamond, Ghost };

inline SteerMode parse_steer_mode(const std::string& s) {
    if (s == "none") return SteerMode::None;
    if (s == "diamond") return SteerMode::Diamond;
    if (s == "ghost") return SteerMode::Ghost;
    throw config_error("unknown steer mode '" + s + "' (none|diamond|ghost)");
}

struct EvalStats {
    double diamond_frac = 0, ghost_frac = 0, timeout_frac = 0;
    double mean_true_return = 0;
    size_t episodes = 0;
};

// Runs n episodes with an arbitrary action rule; shared by steer_eval and
// scripted-policy oracles.
inline EvalStats run_eval_episodes(GridEnvConfig cfg, size_t n, Rng& rng,
                                   const std::function<int(const GridEnv&, Rng&)>& act) {
    EvalStats st;
    st.episodes = n;
    GridEnv env;
    env.cfg = cfg;
    for (size_t i = 0; i < n; ++i) {
        env.reset(rng);
        GridEnv::StepResult res;
        size_t len = 0;
        do {
            res = env.step(act(env, rng));
            ++len;
        } while (!res.done);
        if (res.true_reward > 0)
            st.diamond_frac += 1;
        else if (res.true_reward < 0)
            st.ghost_frac += 1;
        else
            st.timeout_frac += 1;
        st.mean_true_return += std::pow(cfg.discount, double(len - 1)) * res.true_reward;
    }
    st.diamond_frac /= double(n);
    st.ghost_frac /= double(n);
    st.timeout_frac /= double(n);
    st.mean_true_return /= double(n);
    return st;
}

// Gate override happens after the gating network runs: its outputs are
// computed, then replaced.
template <class T>
EvalStats steer_eval(const ParamStore<T>& ps, const MoePolicySpec& spec, GridEnvConfig env_cfg,
                     SteerMode steer, size_t n_episodes, bool challenge, Rng& rng) {
    env_cfg.challenge = challenge;
    Tensor<T> override_t;
    if (steer != SteerMode::None) {
        T d = steer == SteerMode::Diamond ? T(1) : T(0);
        override_t = Tensor<T>::from({size_t(1), size_t(2)}, {d, T(1) - d});
    }
    return run_eval_episodes(env_cfg, n_episodes, rng, [&](const GridEnv& env, Rng& r) {
        std::vector<T> ov(spec.in_channels * spec.grid * spec.grid);
        env.observe(ov.data());
        Tensor<T> obs = Tensor<T>::from({size_t(1), spec.in_channels, spec.grid, spec.grid},
                                        std::move(ov));
        Tape<T> tape;
        std::vector<MoeRoute> none(1, MoeRoute::None);
        auto out = moe_policy_forward(tape, ps, spec, obs, none,
                                      steer == SteerMode::None ? nullptr : &override_t);
        auto lsm = log_softmax(out.logits);
        double u = r.uniform(), acc = 0;
        for (size_t k = 0; k < spec.n_actions; ++k) {
            acc += std::exp(double((*lsm.data)[k]));
            if (u < acc) return int(k);
        }
        return int(spec.n_actions - 1);
    });
}

// Mean gate activation per comprehensive episode type under the unsteered
// policy (testable proxy for gate specialization).
struct GateStats {
    double mean_gamma_diamond = 0, mean_gamma_ghost = 0;
    // opposite-module activations on the same episodes (low = discriminating)
    double mean_gamma_ghost_on_diamond = 0, mean_gamma_diamond_on_ghost = 0;
    size_t diamond_episodes = 0, ghost_episodes = 0;
};

template <class T>
GateStats gate_specialization(const ParamStore<T>& ps, const MoePolicySpec& spec,
                              GridEnvConfig env_cfg, size_t n_episodes, Rng& rng) {
    GateStats gs;
    GridEnv env;
    env.cfg = env_cfg;
    for (size_t i = 0; i < n_episodes; ++i) {
        env.reset(rng);
        double g_d = 0, g_g = 0;
        size_t len = 0;
        GridEnv::StepResult res;
        do {
            std::vector<T> ov(spec.in_channels * spec.grid * spec.grid);
            env.observe(ov.data());
            Tensor<T> obs = Tensor<T>::from({size_t(1), spec.in_channels, spec.grid, spec.grid},
                                            std::move(ov));
            Tape<T> tape;
            std::vector<MoeRoute> none(1, MoeRoute::None);
            auto out = moe_policy_forward(tape, ps, spec, obs, none);
            g_d += double((*out.gate.data)[0]);
            g_g += double((*out.gate.data)[1]);
            auto lsm = log_softmax(out.logits);
            double u = rng.uniform(), acc = 0;
            int a = int(spec.n_actions - 1);
            for (size_t k = 0; k < spec.n_actions; ++k) {
                acc += std::exp(double((*lsm.data)[k]));
                if (u < acc) { a = int(k); break; }
            }
            res = env.step(a);
            ++len;
        } while (!res.done);
        if (res.label.y == EpisodeOutcome::ReachedDiamond) {
            gs.mean_gamma_diamond += g_d / double(len);
            gs.mean_gamma_ghost_on_diamond += g_g / double(len);
            ++gs.diamond_episodes;
        } else if (res.label.y == EpisodeOutcome::ReachedGhost) {
            gs.mean_gamma_ghost += g_g / double(len);
            gs.mean_gamma_diamond_on_ghost += g_d / double(len);
            ++gs.ghost_episodes;
        }
    }
    if (gs.diamond_episodes) {
        gs.mean_gamma_diamond /= double(gs.diamond_episodes);
        gs.mean_gamma_ghost_on_diamond /= double(gs.diamond_episodes);
    }
    if (gs.ghost_episodes) {
        gs.mean_gamma_ghost /= double(gs.ghost_episodes);
        gs.mean_gamma_diamond_on_ghost /= double(gs.ghost_episodes);
    }
    return gs;
}

// ---------------------------------------------------------------------------
// Filtering efficiency

using ReturnCurve = std::vector<std::pair<double, double>>; // (env steps, return)

// Rescale a full-oversight curve's x-axis to the curve a run would trace if
// only `keep` of the episodes were kept: progress at x steps equals the full
// run's progress at keep*x steps.
inline ReturnCurve rescale_filtering_curve(const ReturnCurve& full, double keep) {
    if (keep <= 0 || keep > 1) throw usage_error("rescale_filtering_curve: keep outside (0,1]");
    ReturnCurve out;
    for (const auto& [x, y] : full) out.emplace_back(x / keep, y);
    return out;
}

// Curve value at an env-step budget: last point at or before the budget.
inline double curve_value_at(const ReturnCurve& c, double budget) {
    double v = 0;
    bool seen = false;
    for (const auto& [x, y] : c)
        if (x <= budget) { v = y; seen = true; }
    if (!seen) throw usage_error("curve_value_at: no points within budget");
    return v;
}

// Smallest keep fraction whose rescaled final return (within the routed run's
// step budget) matches the routed run's final return.
inline double filtering_crossover(const ReturnCurve& full, const std::vector<double>& fracs,
                                  double routed_final, double budget) {
    std::vector<double> sorted = fracs;
    std::sort(sorted.begin(), sorted.end());
    for (double f : sorted) {
        ReturnCurve r = rescale_filtering_curve(full, f);
        if (r.front().first <= budget && curve_value_at(r, budget) >= routed_final) return f;
    }
    return 1.0;
}

} // namespace gradroute
