#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gradroute/cli/cli.hpp"
#include "gradroute/data/checkpoint.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gradroute;

namespace {

// ---------------------------------------------------------------------------
// Shared run plumbing

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::string scale;
    std::string seed_list;
    long long n_seeds = -1;
    bool resume = false;
    bool f64 = false;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "key-value config file");
    cmd->add_option("--out", f.out_dir, "run directory (default: $GRADROUTE_OUT/<name>)");
    cmd->add_option("--scale", f.scale, "desk|paper");
    cmd->add_option("--seed", f.seed_list, "explicit seed list, e.g. 0,1,2");
    cmd->add_option("--seeds", f.n_seeds, "number of seeds (0..K-1)");
    cmd->add_flag("--resume", f.resume, "skip seeds with a completed report");
    cmd->add_flag("--f64", f.f64, "run in 64-bit floating point");
}

KeyValueConfig load_kv(const CommonFlags& f) {
    KeyValueConfig kv;
    if (!f.config_path.empty()) kv = KeyValueConfig::from_file(f.config_path);
    if (!f.seed_list.empty()) {
        kv.set("run.seeds", f.seed_list);
    } else if (f.n_seeds >= 0) {
        if (f.n_seeds == 0) throw config_error("--seeds must be positive");
        std::vector<uint64_t> s;
        for (long long i = 0; i < f.n_seeds; ++i) s.push_back(uint64_t(i));
        kv.set("run.seeds", gradroute::detail::join_csv(s.begin(), s.end()));
    }
    if (!f.scale.empty()) kv.set("run.scale", f.scale);
    if (f.f64) kv.set("run.f64", "true");
    return kv;
}

fs::path prepare_run_dir(const CommonFlags& f, const std::string& default_name) {
    fs::path dir = f.out_dir.empty() ? fs::path(default_out_root()) / default_name
                                     : fs::path(f.out_dir);
    fs::create_directories(dir);
    return dir;
}

void write_snapshot(const fs::path& dir, const KeyValueConfig& kv) {
    std::ofstream out(dir / "config.resolved");
    out << kv.serialize();
    if (!out) throw format_error("cannot write " + (dir / "config.resolved").string());
}

void write_report(const fs::path& seed_dir, const json& report) {
    std::ofstream out(seed_dir / "report.json");
    out << report.dump(2) << "\n";
    if (!out) throw format_error("cannot write " + (seed_dir / "report.json").string());
}

bool try_load_report(const fs::path& seed_dir, json& report) {
    std::ifstream in(seed_dir / "report.json");
    if (!in) return false;
    report = json::parse(in, nullptr, false);
    return !report.is_discarded();
}

// Runs fn(seed, seed_dir) for each seed, honoring --resume, and returns the
// per-seed reports. Seeds run one at a time: the sandbox has a single core,
// so the bounded worker pool degenerates to sequential execution.
template <class Fn>
std::vector<json> run_seeds(const std::vector<uint64_t>& seeds, const fs::path& dir, bool resume,
                            Fn fn) {
    std::vector<json> reports;
    for (uint64_t seed : seeds) {
        fs::path seed_dir = dir / ("seed" + std::to_string(seed));
        fs::create_directories(seed_dir);
        json report;
        if (resume && try_load_report(seed_dir, report)) {
            std::cout << "seed " << seed << ": resumed from " << (seed_dir / "report.json")
                      << "\n";
        } else {
            report = fn(seed, seed_dir);
            write_report(seed_dir, report);
        }
        reports.push_back(std::move(report));
    }
    return reports;
}

json summarize(const std::vector<json>& reports, const std::vector<std::string>& metrics) {
    json out;
    for (const auto& m : metrics) {
        std::vector<double> xs;
        for (const auto& r : reports)
            if (r.contains(m) && r[m].is_number()) xs.push_back(r[m].get<double>());
        if (xs.empty()) continue;
        MeanCi s = mean_ci(xs);
        out[m] = {{"mean", s.mean}, {"ci95", s.ci}, {"n", s.n}};
        std::cout << "  " << m << " = " << s.mean << " +/- " << s.ci << " (n=" << s.n << ")\n";
    }
    return out;
}

void write_summary(const fs::path& dir, const json& summary) {
    std::ofstream out(dir / "summary.json");
    out << summary.dump(2) << "\n";
    if (!out) throw format_error("cannot write " + (dir / "summary.json").string());
}

// ---------------------------------------------------------------------------
// mnist

template <class T>
json run_mnist_seed(const SplitAeConfig& cfg, const MnistDataset& train, const MnistDataset& val,
                    uint64_t seed, const fs::path& seed_dir) {
    MetricsWriter mw((seed_dir / "metrics.jsonl").string());
    SplitAeModels<T> models;
    auto rep = train_split_autoencoder<T>(cfg, train, val, seed, &mw, "mnist", &models);
    mw.flush();
    write_reconstruction_grid((seed_dir / "reconstructions.pgm").string(), models, val);
    CheckpointData<T> ck;
    ck.params = models.params;
    ck.meta["experiment"] = "mnist";
    ck.meta["preset"] = std::to_string(cfg.preset_id);
    save_checkpoint((seed_dir / "checkpoint.bin").string(), ck);
    json r;
    r["preset"] = rep.preset_id;
    r["seed"] = rep.seed;
    r["cert_mae_04"] = rep.cert_mae_04;
    r["cert_mae_59"] = rep.cert_mae_59;
    r["dec_mae_04"] = rep.dec_mae_04;
    r["dec_mae_59"] = rep.dec_mae_59;
    for (int d = 0; d < 10; ++d) r["cert_mae_digit"][std::to_string(d)] = rep.cert_mae[d];
    return r;
}

int cmd_mnist(const CommonFlags& flags, long long preset_flag, const std::string& data_dir_flag) {
    KeyValueConfig kv = load_kv(flags);
    if (preset_flag > 0) kv.set("mnist.preset", std::to_string(preset_flag));
    if (!data_dir_flag.empty()) kv.set("mnist.data_dir", data_dir_flag);

    RunOpts run = build_run_opts(kv);
    SplitAeConfig cfg = build_mnist_config(kv, run.scale);
    std::string data_dir = kv.get_str("mnist.data_dir", "data");
    kv.require_all_used();

    fs::path dir = prepare_run_dir(flags, "mnist-p" + std::to_string(cfg.preset_id));
    KeyValueConfig snap;
    dump_run_opts(snap, run);
    dump_mnist_config(snap, cfg);
    snap.set("mnist.data_dir", data_dir);
    write_snapshot(dir, snap);

    MnistDataset train = load_mnist(data_dir + "/train-images-idx3-ubyte.gz",
                                    data_dir + "/train-labels-idx1-ubyte.gz");
    MnistDataset val = load_mnist(data_dir + "/t10k-images-idx3-ubyte.gz",
                                  data_dir + "/t10k-labels-idx1-ubyte.gz");

    auto reports = run_seeds(run.seeds, dir, flags.resume, [&](uint64_t seed, const fs::path& sd) {
        std::cout << "mnist preset " << cfg.preset_id << " seed " << seed << "\n";
        return run.f64 ? run_mnist_seed<double>(cfg, train, val, seed, sd)
                       : run_mnist_seed<float>(cfg, train, val, seed, sd);
    });
    std::cout << "summary (" << dir << "):\n";
    write_summary(dir, summarize(reports, {"cert_mae_04", "cert_mae_59", "dec_mae_04",
                                           "dec_mae_59"}));
    return 0;
}

// ---------------------------------------------------------------------------
// lm (ERA unlearning)

template <class T>
json run_lm_seed(const EraRunConfig& cfg, const StoryCorpus& corpus,
                 const std::vector<size_t>& attack_batches, uint64_t seed,
                 const fs::path& seed_dir) {
    MetricsWriter mw((seed_dir / "metrics.jsonl").string());
    ParamStore<T> params;
    auto rep = run_unlearning<T>(cfg, corpus, seed, attack_batches, &mw, "lm", &params);
    mw.flush();
    CheckpointData<T> ck;
    ck.params = params;
    ck.meta["experiment"] = "lm";
    ck.meta["variant"] = rep.variant;
    save_checkpoint((seed_dir / "checkpoint.bin").string(), ck);
    json r;
    r["variant"] = rep.variant;
    r["seed"] = rep.seed;
    r["forget_end"] = rep.forget_end;
    r["retain_end"] = rep.retain_end;
    r["forget_ablate"] = rep.forget_ablate;
    r["retain_ablate"] = rep.retain_ablate;
    r["forget_final"] = rep.forget_final;
    r["retain_final"] = rep.retain_final;
    for (const auto& [bs, v] : rep.attack_min) r["attack_min_b" + std::to_string(bs)] = v;
    for (const auto& [bs, v] : rep.attack_start) r["attack_start_b" + std::to_string(bs)] = v;
    return r;
}

int cmd_lm(const CommonFlags& flags, const std::string& variant_flag, double label_fraction_flag,
           const std::string& attack_batch_flag) {
    KeyValueConfig kv = load_kv(flags);
    if (!variant_flag.empty()) kv.set("lm.variant", variant_flag);
    if (label_fraction_flag >= 0) kv.set("lm.label_fraction", std::to_string(label_fraction_flag));
    if (!attack_batch_flag.empty()) kv.set("lm.attack_batch", attack_batch_flag);

    RunOpts run = build_run_opts(kv);
    EraRunConfig cfg = build_lm_config(kv, run.scale);
    LmCorpusOpts corpus_opts = build_lm_corpus_opts(kv);
    std::vector<size_t> attack_batches = build_lm_attack_batches(kv);
    kv.require_all_used();

    fs::path dir = prepare_run_dir(flags, "lm-" + std::string(variant_name(cfg.variant)));
    KeyValueConfig snap;
    dump_run_opts(snap, run);
    dump_lm_config(snap, cfg, attack_batches);
    dump_lm_corpus_opts(snap, corpus_opts);
    write_snapshot(dir, snap);

    StoryCorpus corpus = make_lm_corpus(corpus_opts);
    auto reports = run_seeds(run.seeds, dir, flags.resume, [&](uint64_t seed, const fs::path& sd) {
        std::cout << "lm " << variant_name(cfg.variant) << " seed " << seed << "\n";
        return run.f64 ? run_lm_seed<double>(cfg, corpus, attack_batches, seed, sd)
                       : run_lm_seed<float>(cfg, corpus, attack_batches, seed, sd);
    });
    std::vector<std::string> cols = {"forget_end",   "retain_end",  "forget_ablate",
                                     "retain_ablate", "forget_final", "retain_final"};
    for (size_t bs : attack_batches) cols.push_back("attack_min_b" + std::to_string(bs));
    std::cout << "summary (" << dir << "):\n";
    write_summary(dir, summarize(reports, cols));
    return 0;
}

// ---------------------------------------------------------------------------
// lm steer

template <class T>
json run_steer_seed(const SteeringConfig& cfg, const StoryCorpus& corpus, uint64_t seed,
                    const fs::path& seed_dir) {
    auto st = train_steering_lm<T>(cfg, corpus, seed);
    auto rep = steering_scalar_demo(st, corpus, seed);
    MetricsWriter mw((seed_dir / "metrics.jsonl").string());
    for (const auto& [v, logit] : rep.mean_logit)
        mw.write(json{{"run_id", "lm_steer"}, {"seed", seed}, {"steer_value", v},
                      {"metric", "mean_logit"}, {"value", logit}});
    mw.flush();
    CheckpointData<T> ck;
    ck.params = st.params;
    ck.meta["experiment"] = "lm_steer";
    ck.meta["token"] = cfg.routed_token;
    save_checkpoint((seed_dir / "checkpoint.bin").string(), ck);
    json r;
    r["seed"] = seed;
    r["token"] = cfg.routed_token;
    r["routed_rank"] = rep.routed_rank;
    r["direction_sign"] = rep.direction_sign;
    for (const auto& [v, logit] : rep.mean_logit)
        r["mean_logit_v" + gradroute::detail::num_str(v)] = logit;
    json rank = json::array();
    for (size_t i = 0; i < std::min<size_t>(10, rep.cosine_ranking.size()); ++i)
        rank.push_back({{"token", rep.cosine_ranking[i].first},
                        {"cos", rep.cosine_ranking[i].second}});
    r["top_cosine"] = rank;
    return r;
}

int cmd_lm_steer(const CommonFlags& flags, const std::string& token_flag, double value_flag) {
    KeyValueConfig kv = load_kv(flags);
    if (!token_flag.empty()) kv.set("steer.token", token_flag);

    RunOpts run = build_run_opts(kv);
    SteeringConfig cfg = build_steer_config(kv);
    LmCorpusOpts corpus_opts = build_lm_corpus_opts(kv);
    kv.require_all_used();
    if (value_flag >= 0 &&
        std::find(cfg.steer_values.begin(), cfg.steer_values.end(), value_flag) ==
            cfg.steer_values.end()) {
        cfg.steer_values.push_back(value_flag);
        std::sort(cfg.steer_values.begin(), cfg.steer_values.end());
    }

    fs::path dir = prepare_run_dir(flags, "lm-steer");
    KeyValueConfig snap;
    dump_run_opts(snap, run);
    dump_steer_config(snap, cfg);
    dump_lm_corpus_opts(snap, corpus_opts);
    write_snapshot(dir, snap);

    StoryCorpus corpus = make_lm_corpus(corpus_opts);
    auto reports = run_seeds(run.seeds, dir, flags.resume, [&](uint64_t seed, const fs::path& sd) {
        std::cout << "lm steer token '" << cfg.routed_token << "' seed " << seed << "\n";
        return run.f64 ? run_steer_seed<double>(cfg, corpus, seed, sd)
                       : run_steer_seed<float>(cfg, corpus, seed, sd);
    });
    std::vector<std::string> cols;
    for (double v : cfg.steer_values) cols.push_back("mean_logit_v" + gradroute::detail::num_str(v));
    std::cout << "summary (" << dir << "):\n";
    write_summary(dir, summarize(reports, cols));
    if (value_flag >= 0 && !reports.empty()) {
        std::string key = "mean_logit_v" + gradroute::detail::num_str(value_flag);
        std::cout << "steer value " << value_flag << ": mean routed-token logit = "
                  << reports[0][key].get<double>() << " (seed " << run.seeds[0] << ")\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// rl train / eval

template <class T>
json run_rl_seed(const RlRunConfig& cfg, uint64_t seed, const fs::path& seed_dir) {
    MetricsWriter mw((seed_dir / "metrics.jsonl").string());
    auto res = train_rl<T>(cfg, seed, &mw, "rl");
    mw.flush();

    CheckpointData<T> ck;
    ck.params = res.params;
    ck.meta["experiment"] = "rl";
    ck.meta["mode"] = rl_mode_name(cfg.mode);
    ck.meta["oversight"] = gradroute::detail::num_str(cfg.env.oversight);
    save_checkpoint((seed_dir / "checkpoint.bin").string(), ck);

    // trailing-window training return + standard evaluation suite
    size_t nu = res.diags.size(), k = std::min<size_t>(20, nu);
    double tail = 0;
    for (size_t i = nu - k; i < nu; ++i) tail += res.diags[i].mean_true_return;
    tail /= double(k);

    Rng er(seed ^ 0x5eed5eedull);
    auto ev_none = steer_eval(res.params, cfg.policy, cfg.env, SteerMode::None, 100, false, er);
    auto ev_d = steer_eval(res.params, cfg.policy, cfg.env, SteerMode::Diamond, 100, true, er);
    auto ev_g = steer_eval(res.params, cfg.policy, cfg.env, SteerMode::Ghost, 100, true, er);
    auto gs = gate_specialization(res.params, cfg.policy, cfg.env, 200, er);

    json r;
    r["mode"] = rl_mode_name(cfg.mode);
    r["seed"] = seed;
    r["final_true_return"] = tail;
    r["eval_true_return"] = ev_none.mean_true_return;
    r["eval_diamond_frac"] = ev_none.diamond_frac;
    r["eval_ghost_frac"] = ev_none.ghost_frac;
    r["challenge_steer_diamond_frac"] = ev_d.diamond_frac;
    r["challenge_steer_diamond_ghost_frac"] = ev_d.ghost_frac;
    r["challenge_steer_ghost_frac"] = ev_g.ghost_frac;
    r["gate_gamma_diamond"] = gs.mean_gamma_diamond;
    r["gate_gamma_ghost"] = gs.mean_gamma_ghost;
    return r;
}

int cmd_rl_train(const CommonFlags& flags, const std::string& mode_flag, double oversight_flag,
                 double keep_flag) {
    KeyValueConfig kv = load_kv(flags);
    if (!mode_flag.empty()) kv.set("rl.mode", mode_flag);
    if (oversight_flag >= 0) kv.set("rl.oversight", gradroute::detail::num_str(oversight_flag));
    if (keep_flag >= 0) kv.set("rl.keep_fraction", gradroute::detail::num_str(keep_flag));

    RunOpts run = build_run_opts(kv);
    RlRunConfig cfg = build_rl_config(kv);
    kv.require_all_used();

    fs::path dir = prepare_run_dir(flags, "rl-" + std::string(rl_mode_name(cfg.mode)));
    KeyValueConfig snap;
    dump_run_opts(snap, run);
    dump_rl_config(snap, cfg);
    write_snapshot(dir, snap);

    auto reports = run_seeds(run.seeds, dir, flags.resume, [&](uint64_t seed, const fs::path& sd) {
        std::cout << "rl " << rl_mode_name(cfg.mode) << " seed " << seed << " ("
                  << cfg.ppo.total_steps << " env steps)\n";
        return run.f64 ? run_rl_seed<double>(cfg, seed, sd) : run_rl_seed<float>(cfg, seed, sd);
    });
    std::cout << "summary (" << dir << "):\n";
    write_summary(dir, summarize(reports, {"final_true_return", "eval_true_return",
                                           "eval_diamond_frac", "eval_ghost_frac",
                                           "challenge_steer_diamond_frac",
                                           "challenge_steer_ghost_frac", "gate_gamma_diamond",
                                           "gate_gamma_ghost"}));
    return 0;
}

int cmd_rl_eval(const std::string& ckpt_path, const std::string& steer, bool challenge,
                long long episodes, long long seed, double oversight) {
    if (episodes <= 0) throw config_error("--episodes must be positive");
    SteerMode mode = parse_steer_mode(steer);
    auto ck = load_checkpoint<float>(ckpt_path);
    MoePolicySpec spec; // fixed architecture; checkpoint shapes must match
    GridEnvConfig env;
    env.oversight = oversight;
    Rng rng{uint64_t(seed)};
    auto ev = steer_eval(ck.params, spec, env, mode, size_t(episodes), challenge, rng);
    json out = {{"steer", steer},
                {"challenge", challenge},
                {"episodes", ev.episodes},
                {"diamond_frac", ev.diamond_frac},
                {"ghost_frac", ev.ghost_frac},
                {"timeout_frac", ev.timeout_frac},
                {"mean_true_return", ev.mean_true_return}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"gradient-routing experiments"};
    app.require_subcommand(1);

    // mnist
    CommonFlags mnist_flags;
    long long mnist_preset_flag = -1;
    std::string mnist_data_dir;
    auto* mnist_cmd = app.add_subcommand("mnist", "split-autoencoder representation study");
    add_common_flags(mnist_cmd, mnist_flags);
    mnist_cmd->add_option("--preset", mnist_preset_flag, "ablation preset 1..10");
    mnist_cmd->add_option("--data-dir", mnist_data_dir, "directory with IDX digit files");

    // lm + lm steer
    CommonFlags lm_flags;
    std::string lm_variant, lm_attack_batch;
    double lm_label_fraction = -1;
    auto* lm_cmd = app.add_subcommand("lm", "ERA unlearning on a story language model");
    add_common_flags(lm_cmd, lm_flags);
    lm_cmd->add_option("--variant", lm_variant, "era|base|pure|control");
    lm_cmd->add_option("--label-fraction", lm_label_fraction, "fraction of forget stories labeled");
    lm_cmd->add_option("--attack-batch", lm_attack_batch, "retraining-attack batch sizes (csv)");

    CommonFlags steer_flags;
    std::string steer_token;
    double steer_value = -1;
    auto* steer_cmd = lm_cmd->add_subcommand("steer", "steering-scalar demo");
    add_common_flags(steer_cmd, steer_flags);
    steer_cmd->add_option("--token", steer_token, "token routed to the target dimension");
    steer_cmd->add_option("--value", steer_value, "extra steering magnitude to report");

    // rl train / eval
    CommonFlags rl_flags;
    std::string rl_mode;
    double rl_oversight = -1, rl_keep = -1;
    auto* rl_cmd = app.add_subcommand("rl", "scalable-oversight gridworld policy");
    auto* rl_train_cmd = rl_cmd->add_subcommand("train", "PPO training");
    add_common_flags(rl_train_cmd, rl_flags);
    rl_train_cmd->add_option("--mode", rl_mode, "routed|outcome|filtering");
    rl_train_cmd->add_option("--oversight", rl_oversight, "terminal oversight probability");
    rl_train_cmd->add_option("--keep-fraction", rl_keep, "filtering keep fraction");

    std::string eval_ckpt, eval_steer = "none";
    bool eval_challenge = false;
    long long eval_episodes = 100, eval_seed = 0;
    double eval_oversight = 0.1;
    auto* rl_eval_cmd = rl_cmd->add_subcommand("eval", "evaluate a trained policy");
    rl_eval_cmd->add_option("--checkpoint", eval_ckpt, "policy checkpoint from rl train")
        ->required();
    rl_eval_cmd->add_option("--steer", eval_steer, "none|diamond|ghost");
    rl_eval_cmd->add_flag("--challenge", eval_challenge, "use challenge environments");
    rl_eval_cmd->add_option("--episodes", eval_episodes, "number of evaluation episodes");
    rl_eval_cmd->add_option("--seed", eval_seed, "evaluation seed");
    rl_eval_cmd->add_option("--oversight", eval_oversight, "terminal oversight probability");
    rl_cmd->require_subcommand(1);

    try {
        app.parse(argc, argv);
        if (mnist_cmd->parsed())
            return cmd_mnist(mnist_flags, mnist_preset_flag, mnist_data_dir);
        if (steer_cmd->parsed()) return cmd_lm_steer(steer_flags, steer_token, steer_value);
        if (lm_cmd->parsed())
            return cmd_lm(lm_flags, lm_variant, lm_label_fraction, lm_attack_batch);
        if (rl_train_cmd->parsed()) return cmd_rl_train(rl_flags, rl_mode, rl_oversight, rl_keep);
        if (rl_eval_cmd->parsed())
            return cmd_rl_eval(eval_ckpt, eval_steer, eval_challenge, eval_episodes, eval_seed,
                               eval_oversight);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "run failure: " << e.what() << "\n";
        return 1;
    }
}
