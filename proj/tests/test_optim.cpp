#include <catch2/catch_amalgamated.hpp>

#include "gradroute/optim/optim.hpp"

using namespace gradroute;

namespace {

GradientMap<double> grad_map(const std::string& name, Shape shape, std::vector<double> v) {
    GradientMap<double> g;
    g.emplace(name, Tensor<double>::from(std::move(shape), std::move(v)));
    return g;
}

} // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    ParamStore<double> ps;
    ps.add("w", {3}, {1.0, -2.0, 0.5});
    AdamState<double> st;
    adam_step(st, ps, grad_map("w", {3}, {0, 0, 0}));
    CHECK(ps.raw("w") == std::vector<double>{1.0, -2.0, 0.5});
}

TEST_CASE("adam: first step matches bias-corrected closed form") {
    // After one step: m̂ = g, v̂ = g², so Δ = −lr·g/(|g|+ε).
    for (double g : {0.7, -3.0, 1e-3}) {
        ParamStore<double> ps;
        ps.add("w", {1}, {2.0});
        AdamState<double> st;
        st.lr = 1e-3;
        adam_step(st, ps, grad_map("w", {1}, {g}));
        double want = 2.0 - st.lr * g / (std::abs(g) + st.eps);
        CHECK(ps.raw("w")[0] == Catch::Approx(want).margin(1e-15));
    }
}

TEST_CASE("adam: descends on f(w)=w^2") {
    ParamStore<double> ps;
    ps.add("w", {1}, {1.5});
    AdamState<double> st;
    st.lr = 0.1;
    double prev = 1.5 * 1.5;
    for (int i = 0; i < 2; ++i) {
        double w = ps.raw("w")[0];
        adam_step(st, ps, grad_map("w", {1}, {2 * w}));
        double f = ps.raw("w")[0] * ps.raw("w")[0];
        CHECK(f < prev);
        prev = f;
    }
}

TEST_CASE("adam: matches reference simulation to 1e-10 over 100 steps") {
    Rng rng(77);
    ParamStore<double> ps;
    ps.add("a", {2}, {0.3, -0.8});
    ps.add("b", {1}, {1.1});
    AdamState<double> st;
    st.lr = 3e-3;

    // independent textbook recursion
    std::vector<double> w = {0.3, -0.8, 1.1}, m(3, 0), v(3, 0);
    for (int step = 1; step <= 100; ++step) {
        std::vector<double> g(3);
        for (auto& x : g) x = rng.uniform(-1.0, 1.0);
        GradientMap<double> gm;
        gm.emplace("a", Tensor<double>::from({2}, {g[0], g[1]}));
        gm.emplace("b", Tensor<double>::from({1}, {g[2]}));
        adam_step(st, ps, gm);
        for (int i = 0; i < 3; ++i) {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            double mh = m[i] / (1 - std::pow(0.9, step));
            double vh = v[i] / (1 - std::pow(0.999, step));
            w[i] -= st.lr * mh / (std::sqrt(vh) + st.eps);
        }
    }
    CHECK(ps.raw("a")[0] == Catch::Approx(w[0]).margin(1e-10));
    CHECK(ps.raw("a")[1] == Catch::Approx(w[1]).margin(1e-10));
    CHECK(ps.raw("b")[0] == Catch::Approx(w[2]).margin(1e-10));
}

TEST_CASE("adam: decoupled weight decay shrinks before the delta") {
    ParamStore<double> ps;
    ps.add("w", {1}, {4.0});
    AdamState<double> st;
    st.lr = 1e-2;
    st.weight_decay = 0.1;
    adam_step(st, ps, grad_map("w", {1}, {0.0}));
    // zero gradient: only the multiplicative shrink applies
    CHECK(ps.raw("w")[0] == Catch::Approx(4.0 * (1 - 1e-2 * 0.1)).margin(1e-15));

    // coupled mode adds wd·w to the gradient instead
    ParamStore<double> ps2;
    ps2.add("w", {1}, {4.0});
    AdamState<double> st2;
    st2.lr = 1e-2;
    st2.weight_decay = 0.1;
    st2.decoupled = false;
    adam_step(st2, ps2, grad_map("w", {1}, {0.0}));
    double g = 0.1 * 4.0;
    CHECK(ps2.raw("w")[0] == Catch::Approx(4.0 - st2.lr * g / (g + st2.eps)).margin(1e-12));
}

TEST_CASE("adam: key mismatches are usage errors naming the keys") {
    ParamStore<double> ps;
    ps.add("w", {1}, {1.0});
    ps.add("u", {1}, {1.0});
    AdamState<double> st;
    CHECK_THROWS_WITH(adam_step(st, ps, grad_map("w", {1}, {0.0})),
                      Catch::Matchers::ContainsSubstring("u"));
    GradientMap<double> gm = grad_map("w", {1}, {0.0});
    gm.emplace("u", Tensor<double>::from({1}, {0.0}));
    gm.emplace("zz", Tensor<double>::from({1}, {0.0}));
    CHECK_THROWS_WITH(adam_step(st, ps, gm), Catch::Matchers::ContainsSubstring("zz"));
}

TEST_CASE("clip_global_norm behavior") {
    // below threshold: unchanged, same buffers
    auto g = grad_map("w", {2}, {0.1, 0.2});
    auto before = g.at("w").data;
    auto out = clip_global_norm(g, 5.0);
    CHECK(out.at("w").data == before);

    // single tensor with norm 2, max 0.5 -> scaled by 0.25
    auto g2 = clip_global_norm(grad_map("w", {2}, {2.0, 0.0}), 0.5);
    CHECK((*g2.at("w").data)[0] == Catch::Approx(0.5).margin(1e-12));

    // multi-tensor: post-clip global norm equals max_norm
    GradientMap<double> gm;
    gm.emplace("a", Tensor<double>::from({2}, {3.0, -4.0}));
    gm.emplace("b", Tensor<double>::from({1}, {12.0}));
    auto clipped = clip_global_norm(gm, 0.5);
    double sq = 0;
    for (const auto& [k, t] : clipped)
        for (double x : *t.data) sq += x * x;
    CHECK(std::sqrt(sq) == Catch::Approx(0.5).margin(1e-6));
    // idempotent
    auto twice = clip_global_norm(clipped, 0.5);
    for (const auto& [k, t] : twice)
        for (size_t i = 0; i < t.size(); ++i)
            CHECK((*t.data)[i] == (*clipped.at(k).data)[i]);
    // originals untouched
    CHECK((*gm.at("b").data)[0] == 12.0);

    CHECK_THROWS_AS(clip_global_norm(gm, 0.0), usage_error);
}

TEST_CASE("lr schedules hit declared endpoints exactly") {
    LrSchedule c{LrSchedule::Kind::Constant, 1e-3, 0, 100};
    CHECK(c.lr(0) == 1e-3);
    CHECK(c.lr(99) == 1e-3);

    LrSchedule lin{LrSchedule::Kind::LinearDecay, 5e-4, 5e-5, 200};
    CHECK(lin.lr(0) == 5e-4);
    CHECK(lin.lr(199) == Catch::Approx(5e-5).margin(1e-18));
    CHECK(lin.lr(100) > lin.lr(150));

    LrSchedule ppo{LrSchedule::Kind::PpoAnneal, 2.5e-4, 0, 1000};
    CHECK(ppo.lr(0) == 2.5e-4);
    CHECK(ppo.lr(999) == 0.0);
    CHECK(ppo.lr(500) > ppo.lr(700));

    LrSchedule cos{LrSchedule::Kind::CosineWarmup, 1e-3, 1e-5, 100, 10};
    CHECK(cos.lr(99) == Catch::Approx(1e-5).margin(1e-15));
    CHECK(cos.lr(0) == Catch::Approx(1e-4).margin(1e-15)); // first warmup step
    CHECK(cos.lr(9) == Catch::Approx(1e-3).margin(1e-15)); // warmup peak
    CHECK(cos.lr(30) > cos.lr(60));
}
