#pragma once

#include <algorithm>
#include <cmath>

#include "gradroute/data/metrics.hpp"
#include "gradroute/nn/losses.hpp"
#include "gradroute/data/story_corpus.hpp"
#include "gradroute/optim/optim.hpp"
#include "gradroute/routing/era.hpp"
#include "gradroute/routing/residual.hpp"

namespace gradroute {

enum class LmVariant { Era, Base, Pure, Control };

inline const char* variant_name(LmVariant v) {
    switch (v) {
        case LmVariant::Era: return "era";
        case LmVariant::Base: return "base";
        case LmVariant::Pure: return "pure";
        case LmVariant::Control: return "control";
    }
    return "?";
}

inline LmVariant parse_variant(const std::string& s) {
    if (s == "era") return LmVariant::Era;
    if (s == "base") return LmVariant::Base;
    if (s == "pure") return LmVariant::Pure;
    if (s == "control") return LmVariant::Control;
    throw config_error("unknown lm variant '" + s + "' (era|base|pure|control)");
}

struct EraRunConfig {
    TransformerSpec model{4, 128, 4, 0, 64, 512}; // vocab filled from corpus
    EraConfig era;
    LmVariant variant = LmVariant::Era;
    double label_fraction = 1.0;
    bool mask_on_targets = true; // mask positions predicting the token (vs positions at it)
    size_t finetune_stories = 64;
    size_t finetune_budget = 10;
    size_t attack_steps = 40;
    size_t epochs = 1;
    size_t batch = 16; // stories per step
    double lr_start = 5e-4, lr_end = 5e-5;
    double weight_decay = 0.1;
    double val_fraction = 0.1;

    void validate() const {
        if (label_fraction < 0 || label_fraction > 1)
            throw config_error("EraRunConfig: label_fraction outside [0,1]");
        if (batch == 0 || epochs == 0) throw config_error("EraRunConfig: batch/epochs positive");
        if (val_fraction <= 0 || val_fraction >= 1)
            throw config_error("EraRunConfig: val_fraction outside (0,1)");
    }
};

// Desk-scale preset, tuned for single-core runs on the synthetic corpus
// (1000 stories, forget fraction 0.25). Input-keyed masks and the stronger
// activation penalty give a much larger post-ablation forget/retain
// separation than target-keyed masks at this scale.
inline EraRunConfig era_desk_config() {
    EraRunConfig c;
    c.model = TransformerSpec{3, 64, 4, 0, 48, 256};
    c.era.target_layers = {0, 1, 2};
    c.era.expansion_width = 128;
    c.era.activation_l1_weight = 1e-3;
    c.epochs = 2;
    c.finetune_budget = 5;
    c.mask_on_targets = false;
    return c;
}

namespace detail {

// Fixed-length next-token batch: inputs padded with <eos>, padded target
// positions excluded from the loss.
struct LmBatch {
    std::vector<int> inputs, targets;
    std::vector<uint8_t> ignore;
    std::vector<size_t> story; // corpus index per row
    size_t B = 0, S = 0;
};

inline LmBatch make_lm_batch(const StoryCorpus& corpus, const std::vector<size_t>& stories,
                             size_t S, int pad_id) {
    LmBatch b;
    b.B = stories.size();
    b.S = S;
    b.inputs.assign(b.B * S, pad_id);
    b.targets.assign(b.B * S, pad_id);
    b.ignore.assign(b.B * S, 1);
    b.story = stories;
    for (size_t i = 0; i < b.B; ++i) {
        const auto& toks = corpus.stories[stories[i]];
        size_t len = std::min(toks.size(), S + 1);
        for (size_t t = 0; t + 1 < len; ++t) {
            b.inputs[i * S + t] = toks[t];
            b.targets[i * S + t] = toks[t + 1];
            b.ignore[i * S + t] = 0;
        }
    }
    return b;
}

} // namespace detail

// Stratified train/validation split over story indices.
struct LmSplit {
    std::vector<size_t> train, val;
};

inline LmSplit split_stories(const StoryCorpus& corpus, double val_fraction, Rng& rng) {
    std::vector<size_t> forget, retain;
    for (size_t i = 0; i < corpus.size(); ++i)
        (corpus.is_forget[i] ? forget : retain).push_back(i);
    LmSplit out;
    for (auto* part : {&forget, &retain}) {
        rng.shuffle(*part);
        size_t n_val = size_t(val_fraction * double(part->size()) + 0.5);
        for (size_t i = 0; i < part->size(); ++i)
            (i < n_val ? out.val : out.train).push_back((*part)[i]);
    }
    rng.shuffle(out.train);
    return out;
}

template <class T>
struct LmRunState {
    EraRunConfig cfg;
    StoryCorpus const* corpus = nullptr;
    ParamStore<T> params;
    EraBookkeeping bk;
    std::map<int, double> mask_table;  // token id -> convex-combination weight
    LmSplit split;
    std::vector<uint8_t> labeled; // per story: forget story with an oversight label
    int pad_id = -1;
    double final_lr = 5e-5;
    uint64_t seed = 0;
};

// Mean next-token loss over the given stories, optionally restricted to one
// partition (0 = retain, 1 = forget, -1 = all).
template <class T>
double eval_lm_loss(const ParamStore<T>& ps, const TransformerSpec& spec,
                    const StoryCorpus& corpus, const std::vector<size_t>& stories, int partition,
                    size_t S, int pad_id, size_t batch = 64) {
    double total = 0;
    size_t kept_total = 0;
    std::vector<size_t> sel;
    for (size_t idx : stories)
        if (partition < 0 || corpus.is_forget[idx] == uint8_t(partition)) sel.push_back(idx);
    if (sel.empty()) throw usage_error("eval_lm_loss: no stories in requested partition");
    for (size_t start = 0; start < sel.size(); start += batch) {
        size_t B = std::min(batch, sel.size() - start);
        std::vector<size_t> chunk(sel.begin() + start, sel.begin() + start + B);
        auto b = detail::make_lm_batch(corpus, chunk, S, pad_id);
        size_t kept = size_t(std::count(b.ignore.begin(), b.ignore.end(), uint8_t(0)));
        Tape<T> tape;
        auto logits = transformer_forward(tape, ps, spec, b.inputs, b.B, b.S);
        double loss = double(cross_entropy(logits, b.targets, b.ignore).scalar());
        total += loss * double(kept);
        kept_total += kept;
    }
    return total / double(kept_total);
}

// One training step's loss graph with variant-appropriate routing hooks.
template <class T>
Tensor<T> era_step_loss(Tape<T>& tape, LmRunState<T>& st, const detail::LmBatch& b,
                        LmHooks<T>& hooks) {
    const auto& cfg = st.cfg;
    bool expanded = st.bk.expanded;
    if (cfg.variant == LmVariant::Era && expanded) {
        // key each position's mask by the token it predicts (or carries),
        // only inside labeled forget stories; everything else gets an
        // identity mask via the out-of-table id -1
        const std::vector<int>& keys = cfg.mask_on_targets ? b.targets : b.inputs;
        std::vector<int> route_keys(keys.size(), -1);
        for (size_t i = 0; i < keys.size(); ++i)
            if (!b.ignore[i] && st.labeled[b.story[i / b.S]]) route_keys[i] = keys[i];
        build_era_route(st.mask_table, cfg.era, st.bk, route_keys, b.B, b.S, hooks);
    } else if (cfg.variant == LmVariant::Control && expanded) {
        hooks.l1_layers.insert(cfg.era.target_layers.begin(), cfg.era.target_layers.end());
    }
    auto logits = transformer_forward(tape, st.params, cfg.model, b.inputs, b.B, b.S, &hooks);
    Tensor<T> loss = cross_entropy(logits, b.targets, b.ignore);
    for (const auto& h : hooks.l1_activations)
        loss = add(loss, scale(mean_all(abs(h)), T(cfg.era.activation_l1_weight)));
    return loss;
}

// Pretraining for any variant. Era/control are trained expanded; per-story
// oversight labels drive both routing (era) and filtering (pure).
template <class T>
LmRunState<T> train_era_lm(const EraRunConfig& cfg_in, const StoryCorpus& corpus, uint64_t seed,
                           MetricsWriter* metrics = nullptr, const std::string& run_id = "lm") {
    EraRunConfig cfg = cfg_in;
    cfg.validate();
    cfg.model.vocab_size = corpus.id_to_token.size();
    cfg.model.validate();

    LmRunState<T> st;
    st.cfg = cfg;
    st.corpus = &corpus;
    st.seed = seed;
    st.pad_id = corpus.token_id("<eos>");
    if (st.pad_id < 0) throw config_error("train_era_lm: corpus has no <eos> token");

    Rng rng(seed);
    st.split = split_stories(corpus, cfg.val_fraction, rng);

    // i.i.d. oversight labels on forget stories; unlabeled ones are treated
    // as retain data everywhere downstream
    st.labeled.assign(corpus.size(), 0);
    for (size_t i = 0; i < corpus.size(); ++i)
        if (corpus.is_forget[i] && rng.bernoulli(cfg.label_fraction)) st.labeled[i] = 1;

    bool needs_era = cfg.variant == LmVariant::Era || cfg.variant == LmVariant::Control;
    if (cfg.variant == LmVariant::Era) {
        // token mask table from labeled-partition frequencies of the train split
        StoryCorpus labeled_view;
        labeled_view.vocab = corpus.vocab;
        labeled_view.id_to_token = corpus.id_to_token;
        for (size_t idx : st.split.train) {
            labeled_view.stories.push_back(corpus.stories[idx]);
            labeled_view.is_forget.push_back(st.labeled[idx]);
        }
        auto freqs = token_frequencies(labeled_view);
        TokenMaskTable table;
        std::set<std::string> toks;
        for (const auto& [t, v] : freqs.forget_per10k) toks.insert(t);
        for (const auto& [t, v] : freqs.retain_per10k) toks.insert(t);
        for (const auto& t : toks) {
            auto fit = freqs.forget_per10k.find(t);
            auto rit = freqs.retain_per10k.find(t);
            table.set_from_frequencies(t, fit == freqs.forget_per10k.end() ? 0.0 : fit->second,
                                       rit == freqs.retain_per10k.end() ? 0.0 : rit->second);
        }
        st.mask_table = table.resolve(corpus.vocab);
    }

    init_transformer_params(st.params, cfg.model, rng);
    if (needs_era) era_expand(st.params, cfg.model, cfg.era, rng, st.bk);

    std::vector<size_t> pool;
    for (size_t idx : st.split.train) {
        if (cfg.variant == LmVariant::Pure && st.labeled[idx]) continue;
        pool.push_back(idx);
    }
    if (pool.size() < cfg.batch) throw usage_error("train_era_lm: training pool smaller than batch");

    size_t steps_per_epoch = pool.size() / cfg.batch;
    LrSchedule sched{LrSchedule::Kind::LinearDecay, cfg.lr_start, cfg.lr_end,
                     std::max<size_t>(1, steps_per_epoch * cfg.epochs), 0};
    AdamState<T> adam;
    adam.weight_decay = T(cfg.weight_decay);

    size_t S = cfg.model.max_seq_len;
    size_t step = 0;
    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(pool);
        for (size_t start = 0; start + cfg.batch <= pool.size(); start += cfg.batch) {
            std::vector<size_t> chunk(pool.begin() + start, pool.begin() + start + cfg.batch);
            auto b = detail::make_lm_batch(corpus, chunk, S, st.pad_id);
            Tape<T> tape;
            LmHooks<T> hooks;
            Tensor<T> loss = era_step_loss(tape, st, b, hooks);
            auto grads = tape.backward(loss);
            adam_step(adam, st.params, grads, T(sched.lr(step)));
            if (metrics && step % 16 == 0)
                metrics->write(run_id, seed, step, "train_loss", double(loss.scalar()));
            ++step;
        }
    }
    st.final_lr = cfg.lr_end;
    return st;
}

struct UnlearningReport {
    std::string variant;
    uint64_t seed = 0;
    double forget_end = 0, retain_end = 0;       // end of pretraining
    double forget_ablate = 0, retain_ablate = 0; // post-ablation
    double forget_final = 0, retain_final = 0;   // post fine-tune
    // retrain attack: starting loss + per-step validation forget loss
    std::map<size_t, double> attack_start;
    std::map<size_t, std::vector<double>> attack_curve;
    std::map<size_t, double> attack_min;
};

// Ablate the expansion, then fine-tune on a fixed 64-story retain sample,
// keeping the weights with the lowest retain training loss.
template <class T>
void ablate_and_finetune(LmRunState<T>& st, Rng& rng) {
    const auto& cfg = st.cfg;
    const auto& corpus = *st.corpus;
    era_ablate(st.params, st.bk);

    // "retain" as observable under partial oversight: anything not labeled
    // forget (unlabeled forget stories look like retain data)
    std::vector<size_t> retain_train;
    for (size_t idx : st.split.train)
        if (!st.labeled[idx]) retain_train.push_back(idx);
    rng.shuffle(retain_train);
    size_t n = std::min(cfg.finetune_stories, retain_train.size());
    if (n == 0) throw usage_error("ablate_and_finetune: no retain stories");
    std::vector<size_t> sample(retain_train.begin(), retain_train.begin() + n);

    size_t S = cfg.model.max_seq_len;
    auto b = detail::make_lm_batch(corpus, sample, S, st.pad_id);
    AdamState<T> adam;
    adam.lr = T(st.final_lr);
    adam.weight_decay = T(cfg.weight_decay);

    auto batch_loss = [&]() {
        Tape<T> tape;
        auto logits = transformer_forward(tape, st.params, cfg.model, b.inputs, b.B, b.S);
        return double(cross_entropy(logits, b.targets, b.ignore).scalar());
    };

    double best = batch_loss();
    ParamStore<T> best_params = st.params.clone();
    for (size_t s = 0; s < cfg.finetune_budget; ++s) {
        Tape<T> tape;
        auto logits = transformer_forward(tape, st.params, cfg.model, b.inputs, b.B, b.S);
        auto grads = tape.backward(cross_entropy(logits, b.targets, b.ignore));
        adam_step(adam, st.params, grads);
        double l = batch_loss();
        if (l < best) {
            best = l;
            best_params = st.params.clone();
        }
    }
    st.params = std::move(best_params);
}

// Fine-tune a copy on train-split forget batches and record the validation
// forget loss per step.
template <class T>
std::vector<double> retrain_attack(const LmRunState<T>& st, size_t batch_size, size_t steps,
                                   double* start_loss = nullptr) {
    const auto& cfg = st.cfg;
    const auto& corpus = *st.corpus;
    std::vector<size_t> forget_train;
    for (size_t idx : st.split.train)
        if (corpus.is_forget[idx]) forget_train.push_back(idx);
    if (forget_train.size() < batch_size)
        throw usage_error("retrain_attack: fewer forget stories than batch size");

    ParamStore<T> params = st.params.clone();
    AdamState<T> adam;
    adam.lr = T(st.final_lr);
    adam.weight_decay = T(cfg.weight_decay);
    Rng rng(st.seed ^ 0x9e3779b97f4a7c15ull);
    size_t S = cfg.model.max_seq_len;

    if (start_loss)
        *start_loss =
            eval_lm_loss(params, cfg.model, corpus, st.split.val, 1, S, st.pad_id);
    std::vector<double> curve;
    std::vector<size_t> order = forget_train;
    rng.shuffle(order);
    size_t cursor = 0;
    for (size_t s = 0; s < steps; ++s) {
        if (cursor + batch_size > order.size()) {
            rng.shuffle(order);
            cursor = 0;
        }
        std::vector<size_t> chunk(order.begin() + cursor, order.begin() + cursor + batch_size);
        cursor += batch_size;
        auto b = detail::make_lm_batch(corpus, chunk, S, st.pad_id);
        Tape<T> tape;
        auto logits = transformer_forward(tape, params, cfg.model, b.inputs, b.B, b.S);
        auto grads = tape.backward(cross_entropy(logits, b.targets, b.ignore));
        adam_step(adam, params, grads);
        curve.push_back(eval_lm_loss(params, cfg.model, corpus, st.split.val, 1, S, st.pad_id));
    }
    return curve;
}

// Full protocol for one variant and seed: pretrain, (ablate+finetune where
// applicable), measure losses, run the retrain attack.
template <class T>
UnlearningReport run_unlearning(const EraRunConfig& cfg, const StoryCorpus& corpus, uint64_t seed,
                                const std::vector<size_t>& attack_batches = {16},
                                MetricsWriter* metrics = nullptr, const std::string& run_id = "lm",
                                ParamStore<T>* out_params = nullptr) {
    auto st = train_era_lm<T>(cfg, corpus, seed, metrics, run_id);
    size_t S = st.cfg.model.max_seq_len;

    UnlearningReport r;
    r.variant = variant_name(cfg.variant);
    r.seed = seed;
    r.forget_end = eval_lm_loss(st.params, st.cfg.model, corpus, st.split.val, 1, S, st.pad_id);
    r.retain_end = eval_lm_loss(st.params, st.cfg.model, corpus, st.split.val, 0, S, st.pad_id);

    if (st.bk.expanded) {
        EraBookkeeping bk_copy = st.bk;
        ParamStore<T> pre_ablate = st.params.clone();
        era_ablate(pre_ablate, bk_copy);
        // measure pure ablation effect before fine-tune
        r.forget_ablate = eval_lm_loss(pre_ablate, st.cfg.model, corpus, st.split.val, 1, S,
                                       st.pad_id);
        r.retain_ablate = eval_lm_loss(pre_ablate, st.cfg.model, corpus, st.split.val, 0, S,
                                       st.pad_id);
        Rng ft_rng(seed ^ 0x7f4a7c15ull);
        ablate_and_finetune(st, ft_rng);
        r.forget_final = eval_lm_loss(st.params, st.cfg.model, corpus, st.split.val, 1, S,
                                      st.pad_id);
        r.retain_final = eval_lm_loss(st.params, st.cfg.model, corpus, st.split.val, 0, S,
                                      st.pad_id);
    } else {
        r.forget_ablate = r.forget_final = r.forget_end;
        r.retain_ablate = r.retain_final = r.retain_end;
    }

    for (size_t bs : attack_batches) {
        double start = 0;
        auto curve = retrain_attack(st, bs, cfg.attack_steps, &start);
        double mn = start;
        for (double v : curve) mn = std::min(mn, v);
        r.attack_start[bs] = start;
        r.attack_curve[bs] = curve;
        r.attack_min[bs] = mn;
        if (metrics) {
            metrics->write(run_id, seed, 0, "attack_start_b" + std::to_string(bs), start);
            for (size_t i = 0; i < curve.size(); ++i)
                metrics->write(run_id, seed, i + 1, "attack_loss_b" + std::to_string(bs), curve[i]);
            metrics->write(run_id, seed, curve.size(), "attack_min_b" + std::to_string(bs), mn);
        }
    }
    if (out_params) *out_params = st.params.clone();
    if (metrics) {
        metrics->write(run_id, seed, 0, "forget_end", r.forget_end);
        metrics->write(run_id, seed, 0, "retain_end", r.retain_end);
        metrics->write(run_id, seed, 0, "forget_ablate", r.forget_ablate);
        metrics->write(run_id, seed, 0, "retain_ablate", r.retain_ablate);
        metrics->write(run_id, seed, 0, "forget_final", r.forget_final);
        metrics->write(run_id, seed, 0, "retain_final", r.retain_final);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Steering-scalar demo

struct SteeringConfig {
    TransformerSpec model{3, 64, 4, 0, 48, 256};
    std::string routed_token = "tree";
    size_t target_dim = 0;
    size_t layer_lo = 0, layer_hi = 1;
    std::vector<double> steer_values = {0, 1, 2, 4};
    size_t n_contexts = 100;
    size_t epochs = 1;
    size_t batch = 16;
    double lr_start = 5e-4, lr_end = 5e-5, weight_decay = 0.1;
};

// Desk-scale preset matching era_desk_config's model and corpus; the mask
// range stops one layer short of the top so the final block can read the
// steered dimension.
inline SteeringConfig steering_desk_config() {
    SteeringConfig c;
    c.model = TransformerSpec{3, 64, 4, 0, 48, 256};
    c.layer_lo = 0;
    c.layer_hi = 1;
    return c;
}

struct SteeringReport {
    std::vector<std::pair<std::string, double>> cosine_ranking; // |cos| descending
    size_t routed_rank = 0;                                     // 0-based
    double direction_sign = 1;                                  // sign of learned alignment
    std::map<double, double> mean_logit;  // steer magnitude -> mean routed-token logit
};

template <class T>
struct SteeringState {
    SteeringConfig cfg;
    ParamStore<T> params;
    ResidualRouteConfig route;
    int routed_id = -1;
    int pad_id = -1;
};

template <class T>
SteeringState<T> train_steering_lm(const SteeringConfig& cfg_in, const StoryCorpus& corpus,
                                   uint64_t seed) {
    SteeringState<T> st;
    st.cfg = cfg_in;
    st.cfg.model.vocab_size = corpus.id_to_token.size();
    st.cfg.model.validate();
    st.routed_id = corpus.token_id(st.cfg.routed_token);
    if (st.routed_id < 0)
        throw config_error("steering: routed token '" + st.cfg.routed_token + "' not in corpus");
    st.pad_id = corpus.token_id("<eos>");
    st.route = ResidualRouteConfig{st.routed_id, st.cfg.target_dim, st.cfg.layer_lo,
                                   st.cfg.layer_hi};
    st.route.validate(st.cfg.model);

    Rng rng(seed);
    init_transformer_params(st.params, st.cfg.model, rng);

    std::vector<size_t> pool(corpus.size());
    for (size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    size_t steps_per_epoch = pool.size() / st.cfg.batch;
    LrSchedule sched{LrSchedule::Kind::LinearDecay, st.cfg.lr_start, st.cfg.lr_end,
                     std::max<size_t>(1, steps_per_epoch * st.cfg.epochs), 0};
    AdamState<T> adam;
    adam.weight_decay = T(st.cfg.weight_decay);

    size_t S = st.cfg.model.max_seq_len;
    size_t step = 0;
    for (size_t epoch = 0; epoch < st.cfg.epochs; ++epoch) {
        rng.shuffle(pool);
        for (size_t start = 0; start + st.cfg.batch <= pool.size(); start += st.cfg.batch) {
            std::vector<size_t> chunk(pool.begin() + start, pool.begin() + start + st.cfg.batch);
            auto b = detail::make_lm_batch(corpus, chunk, S, st.pad_id);
            std::vector<int> targets(b.targets);
            for (size_t i = 0; i < targets.size(); ++i)
                if (b.ignore[i]) targets[i] = -1; // padded rows never match the routed token
            Tape<T> tape;
            LmHooks<T> hooks;
            build_residual_route(st.route, st.cfg.model, targets, b.B, b.S, hooks);
            auto logits = transformer_forward(tape, st.params, st.cfg.model, b.inputs, b.B, b.S,
                                              &hooks);
            auto grads = tape.backward(cross_entropy(logits, b.targets, b.ignore));
            adam_step(adam, st.params, grads, T(sched.lr(step)));
            ++step;
        }
    }
    return st;
}

// Cosine ranking of vocabulary unembedding directions against the target
// dimension's one-hot, plus the mean routed-token logit under steering over
// random validation contexts. Steering is applied in the sign of the learned
// direction so positive magnitudes push toward the routed token.
template <class T>
SteeringReport steering_scalar_demo(const SteeringState<T>& st, const StoryCorpus& corpus,
                                    uint64_t seed) {
    const auto& cfg = st.cfg;
    size_t D = cfg.model.d_model, V = cfg.model.vocab_size;
    const auto& U = st.params.raw("unembed"); // [D, V]

    SteeringReport rep;
    for (size_t v = 0; v < V; ++v) {
        double num = double(U[cfg.target_dim * V + v]);
        double nrm = 0;
        for (size_t d = 0; d < D; ++d) nrm += double(U[d * V + v]) * double(U[d * V + v]);
        rep.cosine_ranking.emplace_back(corpus.id_to_token[v], num / std::sqrt(nrm + 1e-30));
    }
    std::sort(rep.cosine_ranking.begin(), rep.cosine_ranking.end(),
              [](const auto& a, const auto& b) { return std::abs(a.second) > std::abs(b.second); });
    for (size_t i = 0; i < rep.cosine_ranking.size(); ++i)
        if (rep.cosine_ranking[i].first == cfg.routed_token) { rep.routed_rank = i; break; }
    rep.direction_sign = U[cfg.target_dim * V + size_t(st.routed_id)] >= 0 ? 1.0 : -1.0;

    // random contexts: prefixes of random stories
    Rng rng(seed ^ 0xc0ffee);
    struct Ctx { std::vector<int> toks; };
    std::vector<Ctx> contexts;
    for (size_t i = 0; i < cfg.n_contexts; ++i) {
        const auto& story = corpus.stories[rng.randint(corpus.size())];
        size_t max_len = std::min(story.size(), cfg.model.max_seq_len);
        size_t len = 1 + rng.randint(max_len);
        contexts.push_back({std::vector<int>(story.begin(), story.begin() + len)});
    }

    size_t steer_layer = (cfg.layer_lo + cfg.layer_hi) / 2;
    for (double val : cfg.steer_values) {
        double total = 0;
        for (const auto& c : contexts) {
            Tape<T> tape;
            LmHooks<T> hooks;
            hooks.steer = val != 0;
            hooks.steer_after_layer = steer_layer;
            hooks.steer_dim = cfg.target_dim;
            hooks.steer_value = T(val * rep.direction_sign);
            auto logits = transformer_forward(tape, st.params, cfg.model, c.toks, 1, c.toks.size(),
                                              &hooks);
            size_t last = c.toks.size() - 1;
            total += double((*logits.data)[last * cfg.model.vocab_size + size_t(st.routed_id)]);
        }
        rep.mean_logit[val] = total / double(contexts.size());
    }
    return rep;
}

} // namespace gradroute
