#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradroute/core/error.hpp"
#include "gradroute/exp/lm.hpp"
#include "gradroute/exp/mnist.hpp"
#include "gradroute/exp/rl.hpp"

namespace gradroute {

// ---------------------------------------------------------------------------
// Flat typed key-value configuration. Keys are sectioned with dots
// (e.g. "rl.oversight"); values are plain strings parsed on access. Every
// access marks the key as recognized so leftover keys can be rejected by name.

class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw config_error("cannot open config file " + path);
        KeyValueConfig cfg;
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string s = strip_comment(line);
            if (trim(s).empty()) continue;
            size_t eq = s.find('=');
            if (eq == std::string::npos)
                throw config_error(path + ":" + std::to_string(lineno) +
                                   ": expected 'key = value', got '" + trim(s) + "'");
            std::string key = trim(s.substr(0, eq));
            std::string val = trim(s.substr(eq + 1));
            if (key.empty())
                throw config_error(path + ":" + std::to_string(lineno) + ": empty key");
            cfg.set(key, val);
        }
        return cfg;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_str(const std::string& key, const std::string& def) const {
        used_.insert(key);
        auto it = values_.find(key);
        return it == values_.end() ? def : it->second;
    }

    long long get_int(const std::string& key, long long def) const {
        used_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        try {
            size_t pos = 0;
            long long v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw config_error("key " + key + ": expected integer, got '" + it->second + "'");
        }
    }

    double get_double(const std::string& key, double def) const {
        used_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        try {
            size_t pos = 0;
            double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw config_error("key " + key + ": expected number, got '" + it->second + "'");
        }
    }

    bool get_bool(const std::string& key, bool def) const {
        used_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw config_error("key " + key + ": expected true/false, got '" + it->second + "'");
    }

    // Comma-separated unsigned integers ("0,1,2").
    std::vector<uint64_t> get_uint_list(const std::string& key,
                                        const std::vector<uint64_t>& def) const {
        used_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        std::vector<uint64_t> out;
        std::stringstream ss(it->second);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = trim(tok);
            try {
                size_t pos = 0;
                out.push_back(std::stoull(tok, &pos));
                if (pos != tok.size()) throw std::invalid_argument("");
            } catch (...) {
                throw config_error("key " + key + ": expected integer list, got '" + it->second +
                                   "'");
            }
        }
        if (out.empty())
            throw config_error("key " + key + ": expected nonempty integer list");
        return out;
    }

    // Comma-separated numbers ("0,1,2.5").
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& def) const {
        used_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        std::vector<double> out;
        std::stringstream ss(it->second);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = trim(tok);
            try {
                size_t pos = 0;
                out.push_back(std::stod(tok, &pos));
                if (pos != tok.size()) throw std::invalid_argument("");
            } catch (...) {
                throw config_error("key " + key + ": expected number list, got '" + it->second +
                                   "'");
            }
        }
        if (out.empty()) throw config_error("key " + key + ": expected nonempty number list");
        return out;
    }

    std::vector<std::string> unknown_keys() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_)
            if (!used_.count(k)) out.push_back(k);
        return out;
    }

    void require_all_used() const {
        auto unk = unknown_keys();
        if (unk.empty()) return;
        std::string msg = "unknown config key" + std::string(unk.size() > 1 ? "s:" : ":");
        for (const auto& k : unk) msg += " " + k;
        throw config_error(msg);
    }

    // Sorted "key = value" lines; parses back to an identical config.
    std::string serialize() const {
        std::ostringstream os;
        for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
        return os.str();
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        size_t b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }
    static std::string strip_comment(const std::string& s) {
        size_t h = s.find('#');
        return h == std::string::npos ? s : s.substr(0, h);
    }

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Cross-seed summary: mean with a 95% confidence interval (1.96·sd/√K,
// sample standard deviation).

struct MeanCi {
    double mean = 0, sd = 0, ci = 0;
    size_t n = 0;
};

inline MeanCi mean_ci(const std::vector<double>& xs) {
    if (xs.empty()) throw usage_error("mean_ci: empty sample");
    MeanCi r;
    r.n = xs.size();
    for (double x : xs) r.mean += x;
    r.mean /= double(r.n);
    if (r.n > 1) {
        double ss = 0;
        for (double x : xs) ss += (x - r.mean) * (x - r.mean);
        r.sd = std::sqrt(ss / double(r.n - 1));
        r.ci = 1.96 * r.sd / std::sqrt(double(r.n));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Config -> experiment-config builders. Each consumes its section's keys;
// call require_all_used() once every section is built.

inline Scale parse_scale(const std::string& s) {
    if (s == "desk") return Scale::Desk;
    if (s == "paper") return Scale::Paper;
    throw config_error("unknown scale '" + s + "' (desk|paper)");
}

inline SplitAeConfig build_mnist_config(const KeyValueConfig& kv, Scale scale) {
    int preset = int(kv.get_int("mnist.preset", 1));
    SplitAeConfig c = mnist_preset(preset, scale);
    c.epochs = size_t(kv.get_int("mnist.epochs", (long long)c.epochs));
    c.batch = size_t(kv.get_int("mnist.batch", (long long)c.batch));
    c.n_train = size_t(kv.get_int("mnist.n_train", (long long)c.n_train));
    c.lr = kv.get_double("mnist.lr", c.lr);
    c.weight_decay = kv.get_double("mnist.weight_decay", c.weight_decay);
    c.validate();
    return c;
}

struct LmCorpusOpts {
    uint64_t seed = 1234;
    size_t stories = 1000;
    double forget_fraction = 0.25;
    std::string path; // nonempty: load instead of generating
};

inline LmCorpusOpts build_lm_corpus_opts(const KeyValueConfig& kv) {
    LmCorpusOpts o;
    o.seed = uint64_t(kv.get_int("lm.corpus_seed", (long long)o.seed));
    o.stories = size_t(kv.get_int("lm.corpus_stories", (long long)o.stories));
    o.forget_fraction = kv.get_double("lm.corpus_forget_fraction", o.forget_fraction);
    o.path = kv.get_str("lm.corpus_path", "");
    return o;
}

inline StoryCorpus make_lm_corpus(const LmCorpusOpts& o) {
    if (!o.path.empty()) return load_story_corpus(o.path);
    return generate_story_corpus(o.seed, o.stories, o.forget_fraction);
}

inline EraRunConfig build_lm_config(const KeyValueConfig& kv, Scale scale) {
    EraRunConfig c = scale == Scale::Desk ? era_desk_config() : EraRunConfig{};
    c.variant = parse_variant(kv.get_str("lm.variant", variant_name(c.variant)));
    c.label_fraction = kv.get_double("lm.label_fraction", c.label_fraction);
    c.mask_on_targets = kv.get_bool("lm.mask_on_targets", c.mask_on_targets);
    c.epochs = size_t(kv.get_int("lm.epochs", (long long)c.epochs));
    c.batch = size_t(kv.get_int("lm.batch", (long long)c.batch));
    c.attack_steps = size_t(kv.get_int("lm.attack_steps", (long long)c.attack_steps));
    c.finetune_stories = size_t(kv.get_int("lm.finetune_stories", (long long)c.finetune_stories));
    c.finetune_budget = size_t(kv.get_int("lm.finetune_budget", (long long)c.finetune_budget));
    c.lr_start = kv.get_double("lm.lr_start", c.lr_start);
    c.lr_end = kv.get_double("lm.lr_end", c.lr_end);
    c.weight_decay = kv.get_double("lm.weight_decay", c.weight_decay);
    c.val_fraction = kv.get_double("lm.val_fraction", c.val_fraction);
    c.era.expansion_width = size_t(
        kv.get_int("lm.expansion_width", (long long)c.era.expansion_width));
    c.era.original_dim_weight = kv.get_double("lm.original_dim_weight",
                                              c.era.original_dim_weight);
    c.era.activation_l1_weight = kv.get_double("lm.activation_l1_weight",
                                               c.era.activation_l1_weight);
    c.validate();
    return c;
}

inline std::vector<size_t> build_lm_attack_batches(const KeyValueConfig& kv) {
    auto xs = kv.get_uint_list("lm.attack_batch", {16});
    std::vector<size_t> out(xs.begin(), xs.end());
    for (size_t b : out)
        if (b == 0) throw config_error("key lm.attack_batch: batch sizes must be positive");
    return out;
}

inline SteeringConfig build_steer_config(const KeyValueConfig& kv) {
    SteeringConfig c = steering_desk_config();
    c.routed_token = kv.get_str("steer.token", c.routed_token);
    c.target_dim = size_t(kv.get_int("steer.target_dim", (long long)c.target_dim));
    c.layer_lo = size_t(kv.get_int("steer.layer_lo", (long long)c.layer_lo));
    c.layer_hi = size_t(kv.get_int("steer.layer_hi", (long long)c.layer_hi));
    c.n_contexts = size_t(kv.get_int("steer.n_contexts", (long long)c.n_contexts));
    c.epochs = size_t(kv.get_int("steer.epochs", (long long)c.epochs));
    c.batch = size_t(kv.get_int("steer.batch", (long long)c.batch));
    c.steer_values = kv.get_double_list("steer.values", c.steer_values);
    return c;
}

inline RlRunConfig build_rl_config(const KeyValueConfig& kv) {
    RlRunConfig c;
    c.mode = parse_rl_mode(kv.get_str("rl.mode", rl_mode_name(c.mode)));
    c.env.oversight = kv.get_double("rl.oversight", c.env.oversight);
    c.keep_fraction = kv.get_double("rl.keep_fraction", c.keep_fraction);
    c.ppo.total_steps = size_t(kv.get_int("rl.total_steps", (long long)c.ppo.total_steps));
    c.ppo.n_envs = size_t(kv.get_int("rl.n_envs", (long long)c.ppo.n_envs));
    c.ppo.rollout = size_t(kv.get_int("rl.rollout", (long long)c.ppo.rollout));
    c.ppo.lr = kv.get_double("rl.lr", c.ppo.lr);
    c.ppo.anneal_lr = kv.get_bool("rl.anneal_lr", c.ppo.anneal_lr);
    c.ppo.epochs = size_t(kv.get_int("rl.epochs", (long long)c.ppo.epochs));
    c.ppo.minibatches = size_t(kv.get_int("rl.minibatches", (long long)c.ppo.minibatches));
    c.ppo.clip = kv.get_double("rl.clip", c.ppo.clip);
    c.ppo.ent_coef = kv.get_double("rl.ent_coef", c.ppo.ent_coef);
    c.ppo.vf_coef = kv.get_double("rl.vf_coef", c.ppo.vf_coef);
    c.ppo.max_grad_norm = kv.get_double("rl.max_grad_norm", c.ppo.max_grad_norm);
    c.ppo.gate_alpha = kv.get_double("rl.gate_alpha", c.ppo.gate_alpha);
    c.ppo.gate_push_down = kv.get_bool("rl.gate_push_down", c.ppo.gate_push_down);
    c.ppo.norm_adv_per_minibatch =
        kv.get_bool("rl.norm_adv_per_minibatch", c.ppo.norm_adv_per_minibatch);
    c.ppo.check_isolation = kv.get_bool("rl.check_isolation", c.ppo.check_isolation);
    c.env.spurious_rate = kv.get_double("rl.spurious_rate", c.env.spurious_rate);
    c.env.discount = kv.get_double("rl.discount", c.env.discount);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Resolved-config snapshots: write every effective setting back as explicit
// keys, so re-running from the snapshot reproduces the run bit-for-bit.

namespace detail {

inline std::string num_str(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

template <class It>
std::string join_csv(It begin, It end) {
    std::ostringstream os;
    for (It i = begin; i != end; ++i) os << (i == begin ? "" : ",") << *i;
    return os.str();
}

} // namespace detail

struct RunOpts {
    std::vector<uint64_t> seeds = {0};
    Scale scale = Scale::Desk;
    bool f64 = false;
    bool resume = false; // not snapshotted: a resumed run equals the original
};

inline RunOpts build_run_opts(const KeyValueConfig& kv) {
    RunOpts o;
    o.seeds = kv.get_uint_list("run.seeds", o.seeds);
    o.scale = parse_scale(kv.get_str("run.scale", "desk"));
    o.f64 = kv.get_bool("run.f64", o.f64);
    return o;
}

inline void dump_run_opts(KeyValueConfig& kv, const RunOpts& o) {
    kv.set("run.seeds", detail::join_csv(o.seeds.begin(), o.seeds.end()));
    kv.set("run.scale", o.scale == Scale::Desk ? "desk" : "paper");
    kv.set("run.f64", o.f64 ? "true" : "false");
}

inline void dump_mnist_config(KeyValueConfig& kv, const SplitAeConfig& c) {
    kv.set("mnist.preset", std::to_string(c.preset_id));
    kv.set("mnist.epochs", std::to_string(c.epochs));
    kv.set("mnist.batch", std::to_string(c.batch));
    kv.set("mnist.n_train", std::to_string(c.n_train));
    kv.set("mnist.lr", detail::num_str(c.lr));
    kv.set("mnist.weight_decay", detail::num_str(c.weight_decay));
}

inline void dump_lm_corpus_opts(KeyValueConfig& kv, const LmCorpusOpts& o) {
    kv.set("lm.corpus_seed", std::to_string(o.seed));
    kv.set("lm.corpus_stories", std::to_string(o.stories));
    kv.set("lm.corpus_forget_fraction", detail::num_str(o.forget_fraction));
    if (!o.path.empty()) kv.set("lm.corpus_path", o.path);
}

inline void dump_lm_config(KeyValueConfig& kv, const EraRunConfig& c,
                           const std::vector<size_t>& attack_batches) {
    kv.set("lm.variant", variant_name(c.variant));
    kv.set("lm.label_fraction", detail::num_str(c.label_fraction));
    kv.set("lm.mask_on_targets", c.mask_on_targets ? "true" : "false");
    kv.set("lm.epochs", std::to_string(c.epochs));
    kv.set("lm.batch", std::to_string(c.batch));
    kv.set("lm.attack_steps", std::to_string(c.attack_steps));
    kv.set("lm.attack_batch", detail::join_csv(attack_batches.begin(), attack_batches.end()));
    kv.set("lm.finetune_stories", std::to_string(c.finetune_stories));
    kv.set("lm.finetune_budget", std::to_string(c.finetune_budget));
    kv.set("lm.lr_start", detail::num_str(c.lr_start));
    kv.set("lm.lr_end", detail::num_str(c.lr_end));
    kv.set("lm.weight_decay", detail::num_str(c.weight_decay));
    kv.set("lm.val_fraction", detail::num_str(c.val_fraction));
    kv.set("lm.expansion_width", std::to_string(c.era.expansion_width));
    kv.set("lm.original_dim_weight", detail::num_str(c.era.original_dim_weight));
    kv.set("lm.activation_l1_weight", detail::num_str(c.era.activation_l1_weight));
}

inline void dump_steer_config(KeyValueConfig& kv, const SteeringConfig& c) {
    kv.set("steer.token", c.routed_token);
    kv.set("steer.target_dim", std::to_string(c.target_dim));
    kv.set("steer.layer_lo", std::to_string(c.layer_lo));
    kv.set("steer.layer_hi", std::to_string(c.layer_hi));
    kv.set("steer.n_contexts", std::to_string(c.n_contexts));
    kv.set("steer.epochs", std::to_string(c.epochs));
    kv.set("steer.batch", std::to_string(c.batch));
    std::vector<std::string> vals;
    for (double v : c.steer_values) vals.push_back(detail::num_str(v));
    kv.set("steer.values", detail::join_csv(vals.begin(), vals.end()));
}

inline void dump_rl_config(KeyValueConfig& kv, const RlRunConfig& c) {
    kv.set("rl.mode", rl_mode_name(c.mode));
    kv.set("rl.oversight", detail::num_str(c.env.oversight));
    kv.set("rl.keep_fraction", detail::num_str(c.keep_fraction));
    kv.set("rl.total_steps", std::to_string(c.ppo.total_steps));
    kv.set("rl.n_envs", std::to_string(c.ppo.n_envs));
    kv.set("rl.rollout", std::to_string(c.ppo.rollout));
    kv.set("rl.lr", detail::num_str(c.ppo.lr));
    kv.set("rl.anneal_lr", c.ppo.anneal_lr ? "true" : "false");
    kv.set("rl.epochs", std::to_string(c.ppo.epochs));
    kv.set("rl.minibatches", std::to_string(c.ppo.minibatches));
    kv.set("rl.clip", detail::num_str(c.ppo.clip));
    kv.set("rl.ent_coef", detail::num_str(c.ppo.ent_coef));
    kv.set("rl.vf_coef", detail::num_str(c.ppo.vf_coef));
    kv.set("rl.max_grad_norm", detail::num_str(c.ppo.max_grad_norm));
    kv.set("rl.gate_alpha", detail::num_str(c.ppo.gate_alpha));
    kv.set("rl.gate_push_down", c.ppo.gate_push_down ? "true" : "false");
    kv.set("rl.norm_adv_per_minibatch", c.ppo.norm_adv_per_minibatch ? "true" : "false");
    kv.set("rl.check_isolation", c.ppo.check_isolation ? "true" : "false");
    kv.set("rl.spurious_rate", detail::num_str(c.env.spurious_rate));
    kv.set("rl.discount", detail::num_str(c.env.discount));
}

// Default output root: $GRADROUTE_OUT, falling back to ./runs.
inline std::string default_out_root() {
    const char* env = std::getenv("GRADROUTE_OUT");
    return env && *env ? env : "runs";
}

} // namespace gradroute
