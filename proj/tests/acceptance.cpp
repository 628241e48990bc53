// Acceptance gate: one pass/fail line per criterion. Exit 0 iff all selected
// criteria pass. Usage: acceptance [criterion numbers...] (default: all).
//
// Expected wall time on one core: criteria 1-2 seconds, 3 ~12 min, 4 ~25 min,
// 5 ~1 min, 6 ~90 min, 7 ~1 min.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "gradroute/cli/cli.hpp"
#include "gradroute/data/checkpoint.hpp"
#include "support/gradcheck.hpp"

using namespace gradroute;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

// ---------------------------------------------------------------------------
// Criterion 1: finite-difference gradient checks for every primitive,
// >= 20 random shapes each, rel err < 1e-4, 64-bit.

using Op = std::function<Tensor<double>(Tape<double>&, Tensor<double>, Rng&)>;

double fd_once(const Shape& shape, const Op& op, Rng& rng, double lo, double hi) {
    size_t n = shape_size(shape);
    std::vector<double> x0(n);
    for (auto& v : x0) v = rng.uniform(lo, hi);
    uint64_t op_state = rng.state(); // same op-internal draws for every eval
    auto eval = [&](const std::vector<double>& xv, std::vector<double>* grad) {
        Tape<double> tape;
        Rng op_rng(0);
        op_rng.set_state(op_state);
        Tensor<double> x = tape.input(Tensor<double>::from(shape, xv));
        Tensor<double> y = op(tape, x, op_rng);
        // fixed random projection to a scalar so every output element matters
        Rng prj(7);
        std::vector<double> w(y.size());
        for (auto& v : w) v = prj.uniform(-1, 1);
        Tensor<double> wt = Tensor<double>::from(y.shape, w);
        Tensor<double> loss = sum_all(mul(y, wt));
        if (grad) {
            auto g = tape.backward(loss);
            *grad = tape.node_grad(x.node);
        }
        return double(loss.scalar());
    };
    std::vector<double> analytic;
    eval(x0, &analytic);
    auto numeric = testsupport::finite_diff([&](const std::vector<double>& xv) {
        return eval(xv, nullptr);
    }, x0);
    return testsupport::max_rel_err(analytic, numeric);
}

Shape rand_shape(Rng& rng, size_t rank_lo, size_t rank_hi, size_t dim_hi = 4) {
    size_t rank = rank_lo + rng.randint(rank_hi - rank_lo + 1);
    Shape s(rank);
    for (auto& d : s) d = 1 + rng.randint(dim_hi);
    return s;
}

Outcome criterion1() {
    Rng rng(12345);
    struct Prim {
        const char* name;
        std::function<double(Rng&)> check; // one random-shape trial
    };
    auto unary = [&](auto opf, double lo = -1, double hi = 1, size_t rank_lo = 1) {
        return [opf, lo, hi, rank_lo](Rng& r) {
            Shape s = rand_shape(r, rank_lo, 4);
            return fd_once(s, [opf](Tape<double>&, Tensor<double> x, Rng&) { return opf(x); }, r,
                           lo, hi);
        };
    };
    auto binary = [&](auto opf) {
        return [opf](Rng& r) {
            Shape s = rand_shape(r, 1, 4);
            return fd_once(s, [opf, s](Tape<double>&, Tensor<double> x, Rng& orng) {
                std::vector<double> bv(shape_size(s));
                for (auto& v : bv) v = orng.uniform(0.5, 1.5);
                return opf(x, Tensor<double>::from(s, bv));
            }, r, -1, 1);
        };
    };

    std::vector<Prim> prims = {
        {"add", binary([](auto a, auto b) { return add(a, b); })},
        {"sub", binary([](auto a, auto b) { return sub(a, b); })},
        {"mul", binary([](auto a, auto b) { return mul(a, b); })},
        {"div", binary([](auto a, auto b) { return div(a, b); })},
        {"maximum", binary([](auto a, auto b) { return maximum(a, b); })},
        {"minimum", binary([](auto a, auto b) { return minimum(a, b); })},
        {"scale", unary([](auto x) { return scale(x, -1.7); })},
        {"add_scalar", unary([](auto x) { return add_scalar(x, 0.3); })},
        {"neg", unary([](auto x) { return neg(x); })},
        {"abs", unary([](auto x) { return gradroute::abs(x); })},
        {"clamp", unary([](auto x) { return clamp(x, -0.5, 0.5); })},
        {"exp", unary([](auto x) { return gradroute::exp(x); })},
        {"log", unary([](auto x) { return gradroute::log(x); }, 0.2, 2.0)},
        {"sqrt", unary([](auto x) { return gradroute::sqrt(x); }, 0.2, 2.0)},
        {"relu", unary([](auto x) { return relu(x); })},
        {"gelu", unary([](auto x) { return gelu(x); })},
        {"sigmoid", unary([](auto x) { return sigmoid(x); })},
        {"softmax", unary([](auto x) { return softmax(x); })},
        {"log_softmax", unary([](auto x) { return log_softmax(x); })},
        {"sum_all", unary([](auto x) { return sum_all(x); })},
        {"mean_all", unary([](auto x) { return mean_all(x); })},
        {"stop+add", unary([](auto x) { return add(x, stop_gradient(x)); })},
        {"sum_axis", [](Rng& r) {
             Shape s = rand_shape(r, 2, 4);
             size_t ax = r.randint(s.size());
             return fd_once(s, [ax](Tape<double>&, Tensor<double> x, Rng&) {
                 return sum_axis(x, ax);
             }, r, -1, 1);
         }},
        {"mean_axis", [](Rng& r) {
             Shape s = rand_shape(r, 2, 4);
             size_t ax = r.randint(s.size());
             return fd_once(s, [ax](Tape<double>&, Tensor<double> x, Rng&) {
                 return mean_axis(x, ax);
             }, r, -1, 1);
         }},
        {"reshape", [](Rng& r) {
             Shape s = rand_shape(r, 2, 3);
             return fd_once(s, [](Tape<double>&, Tensor<double> x, Rng&) {
                 return reshape(x, {x.size()});
             }, r, -1, 1);
         }},
        {"transpose", [](Rng& r) {
             Shape s = rand_shape(r, 2, 2);
             return fd_once(s, [](Tape<double>&, Tensor<double> x, Rng&) {
                 return transpose(x, 0, 1);
             }, r, -1, 1);
         }},
        {"slice", [](Rng& r) {
             Shape s = {2 + r.randint(3), 3 + r.randint(3)};
             return fd_once(s, [](Tape<double>&, Tensor<double> x, Rng&) {
                 return slice(x, 1, 1, x.shape[1] - 1);
             }, r, -1, 1);
         }},
        {"concat", [](Rng& r) {
             Shape s = {2 + r.randint(2), 2 + r.randint(3)};
             return fd_once(s, [s](Tape<double>&, Tensor<double> x, Rng& orng) {
                 std::vector<double> bv(shape_size(s));
                 for (auto& v : bv) v = orng.uniform(-1, 1);
                 return concat(std::vector<Tensor<double>>{x, Tensor<double>::from(s, bv)}, 1);
             }, r, -1, 1);
         }},
        {"matmul", [](Rng& r) {
             size_t m = 1 + r.randint(4), k = 1 + r.randint(4), n = 1 + r.randint(4);
             return fd_once({m, k}, [k, n](Tape<double>&, Tensor<double> x, Rng& orng) {
                 std::vector<double> wv(k * n);
                 for (auto& v : wv) v = orng.uniform(-1, 1);
                 return matmul(x, Tensor<double>::from({k, n}, wv));
             }, r, -1, 1);
         }},
        {"bmm", [](Rng& r) {
             size_t b = 1 + r.randint(3), m = 1 + r.randint(3), k = 1 + r.randint(3),
                    n = 1 + r.randint(3);
             return fd_once({b, m, k}, [b, k, n](Tape<double>&, Tensor<double> x, Rng& orng) {
                 std::vector<double> wv(b * k * n);
                 for (auto& v : wv) v = orng.uniform(-1, 1);
                 return bmm(x, Tensor<double>::from({b, k, n}, wv));
             }, r, -1, 1);
         }},
        {"conv2d", [](Rng& r) {
             size_t n = 1 + r.randint(2), ci = 1 + r.randint(2), h = 3 + r.randint(3),
                    co = 1 + r.randint(2);
             return fd_once({n, ci, h, h}, [ci, co](Tape<double>&, Tensor<double> x, Rng& orng) {
                 std::vector<double> wv(co * ci * 9);
                 for (auto& v : wv) v = orng.uniform(-0.5, 0.5);
                 return conv2d(x, Tensor<double>::from({co, ci, 3, 3}, wv), nullptr, 1);
             }, r, -1, 1);
         }},
        {"maxpool2d", [](Rng& r) {
             size_t n = 1 + r.randint(2), c = 1 + r.randint(2), h = 4 + 2 * r.randint(2);
             return fd_once({n, c, h, h}, [](Tape<double>&, Tensor<double> x, Rng&) {
                 return maxpool2d(x);
             }, r, -1, 1);
         }},
        {"gather_last", [](Rng& r) {
             Shape s = {2 + r.randint(3), 3 + r.randint(3)};
             return fd_once(s, [s](Tape<double>&, Tensor<double> x, Rng& orng) {
                 std::vector<int> ids(s[0]);
                 for (auto& i : ids) i = int(orng.randint(s[1]));
                 return gather_last(x, ids);
             }, r, -1, 1);
         }},
        {"embedding", [](Rng& r) {
             size_t v = 3 + r.randint(3), d = 2 + r.randint(3), n = 2 + r.randint(3);
             return fd_once({v, d}, [v, n](Tape<double>&, Tensor<double> tbl, Rng& orng) {
                 std::vector<int> ids(n);
                 for (auto& i : ids) i = int(orng.randint(v));
                 return embedding(tbl, ids, {n});
             }, r, -1, 1);
         }},
        {"layer_norm", [](Rng& r) {
             Shape s = {2 + r.randint(2), 3 + r.randint(4)};
             return fd_once(s, [s](Tape<double>&, Tensor<double> x, Rng& orng) {
                 size_t d = s.back();
                 std::vector<double> gv(d), bv(d);
                 for (auto& v : gv) v = orng.uniform(0.5, 1.5);
                 for (auto& v : bv) v = orng.uniform(-0.5, 0.5);
                 return layer_norm(x, Tensor<double>::from({d}, gv),
                                   Tensor<double>::from({d}, bv));
             }, r, -1, 1);
         }},
        {"route_mask", [](Rng& r) {
             // finite differences only see the forward pass, so the FD oracle
             // applies to the all-ones mask (backward = unrouted); weighted
             // masks are covered by the routing-algebra criterion
             Shape s = rand_shape(r, 1, 3);
             return fd_once(s, [s](Tape<double>&, Tensor<double> x, Rng&) {
                 std::vector<double> ones(shape_size(s), 1.0);
                 MaskSite<double> site{"acc", Tensor<double>::from(s, ones)};
                 return gelu(route_mask(sigmoid(x), site));
             }, r, -1, 1);
         }},
    };

    double worst = 0;
    std::string worst_name;
    for (const auto& p : prims) {
        for (int trial = 0; trial < 20; ++trial) {
            double e = p.check(rng);
            if (e > worst) { worst = e; worst_name = p.name; }
        }
    }
    return {worst < 1e-4, fmt("%zu primitives x 20 shapes, max rel err %.2e (%s)", prims.size(),
                              worst, worst_name.c_str())};
}

// ---------------------------------------------------------------------------
// Criterion 2: routing algebra on a two-layer network.

Outcome criterion2() {
    Rng rng(77);
    size_t B = 4, D = 6, H = 5;
    ParamStore<double> ps;
    ps.add_fan_in_uniform("w1", {D, H}, D, rng);
    ps.add_fan_in_uniform("w2", {H, 3}, H, rng);
    std::vector<double> xv(B * D);
    for (auto& v : xv) v = rng.uniform(-1, 1);

    auto run = [&](const Tensor<double>* mask_w, Tensor<double>* out) {
        Tape<double> tape;
        Tensor<double> x = Tensor<double>::from({B, D}, xv);
        Tensor<double> h = relu(matmul(x, ps.use(tape, "w1")));
        if (mask_w) h = route_mask(h, MaskSite<double>{"site", *mask_w});
        Tensor<double> y = matmul(h, ps.use(tape, "w2"));
        if (out) *out = y;
        return tape.backward(sum_all(mul(y, y)));
    };

    Tensor<double> y_plain, y_masked;
    Tensor<double> ones = Tensor<double>::from({B, H}, std::vector<double>(B * H, 1.0));
    auto g_plain = run(nullptr, &y_plain);
    auto g_ones = run(&ones, &y_masked);

    bool fwd_identical = *y_plain.data == *y_masked.data; // (a) bit-identical
    double ones_err = 0;                                  // (b) within 1e-12
    for (const auto& [name, g] : g_plain)
        for (size_t i = 0; i < g.size(); ++i)
            ones_err = std::max(ones_err,
                                std::abs((*g.data)[i] - (*g_ones.at(name).data)[i]));

    Tensor<double> zeros = Tensor<double>::from({B, H}, std::vector<double>(B * H, 0.0));
    auto g_zero = run(&zeros, nullptr);
    bool upstream_zero = true; // (c) exact zeros upstream of the site
    for (double v : *g_zero.at("w1").data)
        if (v != 0.0) upstream_zero = false;

    auto grads_at = [&](double w) {
        Tensor<double> m = Tensor<double>::from({B, H}, std::vector<double>(B * H, w));
        return run(&m, nullptr);
    };
    auto g1 = grads_at(1.0);
    double lin_err = 0; // (d) upstream gradient scales linearly in w
    for (double w : {-1.0, -0.75, 0.0, 0.5, 1.0, 2.0}) {
        auto gw = grads_at(w);
        const auto& a = *gw.at("w1").data;
        const auto& b = *g1.at("w1").data;
        for (size_t i = 0; i < a.size(); ++i)
            lin_err = std::max(lin_err, std::abs(a[i] - w * b[i]));
    }

    bool pass = fwd_identical && ones_err < 1e-12 && upstream_zero && lin_err < 1e-12;
    return {pass, fmt("fwd bit-identical=%d, all-ones err %.1e, zero-mask exact=%d, "
                      "linearity err %.1e", int(fwd_identical), ones_err, int(upstream_zero),
                      lin_err)};
}

// ---------------------------------------------------------------------------
// Criterion 3: MNIST split, desk scale: preset 1 x 3 seeds ratio > 2,
// preset 10 ratio in [0.8, 1.25].

Outcome criterion3(const std::string& data_dir) {
    MnistDataset train = load_mnist(data_dir + "/train-images-idx3-ubyte.gz",
                                    data_dir + "/train-labels-idx1-ubyte.gz");
    MnistDataset val = load_mnist(data_dir + "/t10k-images-idx3-ubyte.gz",
                                  data_dir + "/t10k-labels-idx1-ubyte.gz");
    auto cfg1 = mnist_preset(1, Scale::Desk);
    double m04 = 0, m59 = 0;
    for (uint64_t seed : {0, 1, 2}) {
        auto rep = train_split_autoencoder<float>(cfg1, train, val, seed);
        m04 += rep.cert_mae_04 / 3.0;
        m59 += rep.cert_mae_59 / 3.0;
    }
    double ratio1 = m04 / m59;
    auto cfg10 = mnist_preset(10, Scale::Desk);
    auto rep10 = train_split_autoencoder<float>(cfg10, train, val, 0);
    double ratio10 = rep10.cert_mae_04 / rep10.cert_mae_59;
    bool pass = ratio1 > 2.0 && ratio10 >= 0.8 && ratio10 <= 1.25;
    return {pass, fmt("preset1 mean MAE 0-4/5-9 = %.3f/%.3f (ratio %.2f > 2), "
                      "preset10 ratio %.2f in [0.8,1.25]", m04, m59, ratio1, ratio10)};
}

// ---------------------------------------------------------------------------
// Criterion 4: ERA unlearning orderings over 5 matched seeds.

Outcome criterion4() {
    StoryCorpus corpus = generate_story_corpus(1234, 1000, 0.25);
    EraRunConfig cfg = era_desk_config();
    const std::vector<uint64_t> seeds = {0, 1, 2, 3, 4};

    double era_fgap = 0, era_rgap = 0, ctl_fgap = 0, ctl_rgap = 0;
    double amin_base = 0, amin_era = 0, amin_pure = 0;
    for (uint64_t seed : seeds) {
        for (LmVariant v : {LmVariant::Era, LmVariant::Control, LmVariant::Base,
                            LmVariant::Pure}) {
            cfg.variant = v;
            bool attacked = v != LmVariant::Control;
            auto rep = run_unlearning<float>(cfg, corpus, seed,
                                             attacked ? std::vector<size_t>{16}
                                                      : std::vector<size_t>{});
            double fgap = rep.forget_final - rep.forget_end;
            double rgap = rep.retain_final - rep.retain_end;
            double k = 1.0 / double(seeds.size());
            if (v == LmVariant::Era) {
                era_fgap += k * fgap;
                era_rgap += k * rgap;
                amin_era += k * rep.attack_min.at(16);
            } else if (v == LmVariant::Control) {
                ctl_fgap += k * fgap;
                ctl_rgap += k * rgap;
            } else if (v == LmVariant::Base) {
                amin_base += k * rep.attack_min.at(16);
            } else {
                amin_pure += k * rep.attack_min.at(16);
            }
        }
    }
    double gap = era_fgap - ctl_fgap;
    bool a_ok = gap >= 0.1 && std::abs(era_rgap - ctl_rgap) < 0.5 * gap;
    bool b_ok = amin_base < amin_era &&
                std::abs(amin_era - amin_pure) < 0.5 * (amin_pure - amin_base);
    return {a_ok && b_ok,
            fmt("(a) forget gap era-ctl %.3f >= 0.1, retain diff %.3f < %.3f; "
                "(b) attack-min base %.3f < era %.3f, |era-pure| %.3f < %.3f",
                gap, std::abs(era_rgap - ctl_rgap), 0.5 * gap, amin_base, amin_era,
                std::abs(amin_era - amin_pure), 0.5 * (amin_pure - amin_base))};
}

// ---------------------------------------------------------------------------
// Criterion 5: steering scalar: exact-zero gradient probe + monotone sweep.

Outcome criterion5() {
    StoryCorpus corpus = generate_story_corpus(1234, 1000, 0.25);
    SteeringConfig cfg = steering_desk_config();
    auto st = train_steering_lm<float>(cfg, corpus, 0);

    // hard assertion: on a probe sequence where every position predicts the
    // routed token, residual-writing parameters in the layer range get exactly
    // zero gradient outside the target column (trained model weights)
    const auto& spec = st.cfg.model;
    size_t S = 8;
    std::vector<int> toks(S, st.routed_id), targets(S, st.routed_id);
    LmHooks<float> hooks;
    build_residual_route(st.route, spec, targets, 1, S, hooks);
    Tape<float> tape;
    auto logits = transformer_forward(tape, st.params, spec, toks, 1, S, &hooks);
    auto grads = tape.backward(cross_entropy(logits, targets));
    bool exact_zero = true;
    size_t checked = 0;
    for (size_t l = cfg.layer_lo; l <= cfg.layer_hi; ++l) {
        for (const std::string base :
             {"l" + std::to_string(l) + ".mlp.w2", "l" + std::to_string(l) + ".attn.wo"}) {
            const auto& g = grads.at(base);
            size_t cols = g.shape[1];
            for (size_t i = 0; i < g.size(); ++i)
                if (i % cols != cfg.target_dim) {
                    ++checked;
                    if ((*g.data)[i] != 0.0f) exact_zero = false;
                }
        }
    }

    auto rep = steering_scalar_demo(st, corpus, 0);
    bool monotone = true;
    double prev = -1e30;
    std::string sweep;
    for (double v : cfg.steer_values) {
        double m = rep.mean_logit.at(v);
        if (m <= prev) monotone = false;
        prev = m;
        sweep += fmt(" %.2f", m);
    }
    return {exact_zero && monotone,
            fmt("zero-grad probe: %zu non-target entries all zero=%d; mean logit over "
                "{0,1,2,4}:%s monotone=%d", checked, int(exact_zero), sweep.c_str(),
                int(monotone))};
}

// ---------------------------------------------------------------------------
// Criterion 6: RL scalable oversight at p=0.1, 1.5M steps.

Outcome criterion6() {
    RlRunConfig cfg;
    cfg.env.oversight = 0.1;
    cfg.ppo.check_isolation = true; // throws on any isolation violation

    // routed: steered-to-Diamond >= 60% on >= 2 of 3 seeds
    int hits = 0;
    std::string detail = "routed steered-diamond:";
    for (uint64_t seed : {0, 1, 2}) {
        cfg.mode = RlMode::Routed;
        auto res = train_rl<float>(cfg, seed);
        Rng er(seed ^ 0x5eed5eedull);
        auto ev = steer_eval(res.params, cfg.policy, cfg.env, SteerMode::Diamond, 100, true, er);
        detail += fmt(" %.0f%%", 100 * ev.diamond_frac);
        if (ev.diamond_frac >= 0.6) ++hits;
    }

    cfg.mode = RlMode::Outcome;
    auto out_res = train_rl<float>(cfg, 0);
    Rng eo(0x5eed5eedull);
    auto out_ev = steer_eval(out_res.params, cfg.policy, cfg.env, SteerMode::None, 100, true, eo);
    detail += fmt("; outcome challenge ghost %.0f%%", 100 * out_ev.ghost_frac);

    cfg.mode = RlMode::Filtering;
    cfg.keep_fraction = 1.0;
    auto fil_res = train_rl<float>(cfg, 0);
    Rng ef(0x5eed5eedull);
    auto fil_ev = steer_eval(fil_res.params, cfg.policy, fil_res.cfg.env, SteerMode::None, 100,
                             false, ef);
    detail += fmt("; filtering keep-1.0 true return %.2f", fil_ev.mean_true_return);

    bool pass = hits >= 2 && out_ev.ghost_frac > 0.5 && fil_ev.mean_true_return > 0.5;
    detail += fmt("; isolation asserted on every routed update (%d/3 seeds >= 60%%)", hits);
    return {pass, detail};
}

// ---------------------------------------------------------------------------
// Criterion 7: byte-identical metrics JSONL on repeat (64-bit mode).

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Outcome criterion7() {
    auto run_once = [&](const std::string& path) {
        RlRunConfig cfg;
        cfg.ppo.total_steps = 2048;
        cfg.env.oversight = 0.5;
        MetricsWriter mw(path);
        train_rl<double>(cfg, 0, &mw);
        mw.flush();
    };
    run_once("acc_c7_a.jsonl");
    run_once("acc_c7_b.jsonl");
    bool rl_same = file_bytes("acc_c7_a.jsonl") == file_bytes("acc_c7_b.jsonl");

    StoryCorpus corpus = generate_story_corpus(7, 80, 0.3);
    EraRunConfig cfg = era_desk_config();
    cfg.epochs = 1;
    cfg.attack_steps = 3;
    cfg.finetune_stories = 8;
    cfg.finetune_budget = 2;
    auto run_lm = [&](const std::string& path) {
        MetricsWriter mw(path);
        run_unlearning<double>(cfg, corpus, 0, {16}, &mw);
        mw.flush();
    };
    run_lm("acc_c7_c.jsonl");
    run_lm("acc_c7_d.jsonl");
    bool lm_same = file_bytes("acc_c7_c.jsonl") == file_bytes("acc_c7_d.jsonl");
    for (const char* f : {"acc_c7_a.jsonl", "acc_c7_b.jsonl", "acc_c7_c.jsonl", "acc_c7_d.jsonl"})
        std::remove(f);
    return {rl_same && lm_same,
            fmt("repeat runs byte-identical: rl=%d lm=%d", int(rl_same), int(lm_same))};
}

} // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    std::string data_dir = std::getenv("GRADROUTE_DATA") ? std::getenv("GRADROUTE_DATA") : "data";

    struct Item {
        int id;
        const char* title;
        std::function<Outcome()> run;
    };
    std::vector<Item> items = {
        {1, "autodiff finite-difference checks", criterion1},
        {2, "routing algebra", criterion2},
        {3, "mnist representation split", [&] { return criterion3(data_dir); }},
        {4, "era robust unlearning", criterion4},
        {5, "steering scalar", criterion5},
        {6, "rl scalable oversight", criterion6},
        {7, "determinism", criterion7},
    };

    bool all_pass = true;
    for (const auto& it : items) {
        if (!wanted.empty() && !wanted.count(it.id)) continue;
        double t0 = now_s();
        Outcome o;
        try {
            o = it.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        double dt = now_s() - t0;
        std::printf("CRITERION %d (%s): %s [%.1fs] -- %s\n", it.id, it.title,
                    o.pass ? "PASS" : "FAIL", dt, o.detail.c_str());
        std::fflush(stdout);
        all_pass = all_pass && o.pass;
    }
    return all_pass ? 0 : 1;
}
