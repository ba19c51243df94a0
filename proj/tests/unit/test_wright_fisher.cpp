#include <doctest.h>

#include <cmath>
#include <vector>

#include "jumplim/errors.hpp"
#include "jumplim/jumpdiff.hpp"
#include "jumplim/stats.hpp"
#include "jumplim/wright_fisher.hpp"

using namespace jumplim;

namespace {

LevyTriplet atom_env() {
    LevyTriplet t;
    t.alpha = 0.2;
    t.sigma = 0.3;
    t.nu.add_atom(0.5, 0.4).add_atom(-0.3, 0.6);
    return t;
}

WFModel model(std::int64_t N, EnvFamily env) {
    WFModel m;
    m.N = N;
    m.env = std::move(env);
    m.z0 = 0.5;
    return m;
}

} // namespace

TEST_CASE("selection functions are neutral at w = 0 and stay in [0, 1]") {
    for (const auto& p : {SelectionFn::example(), SelectionFn::tanh_form()})
        for (double z : {0.0, 0.1, 0.5, 0.9, 1.0}) {
            CHECK(p(z, 0) == doctest::Approx(z));
            for (double w : {-0.9, -0.3, 0.4, 3.0}) {
                CHECK(p(z, w) >= -1e-15);
                CHECK(p(z, w) <= 1 + 1e-15);
            }
            double d = 1e-4;
            CHECK(p.p_w(z) == doctest::Approx((p(z, d) - p(z, -d)) / (2 * d)).epsilon(1e-6));
            CHECK(p.p_ww(z) ==
                  doctest::Approx((p(z, d) - 2 * z + p(z, -d)) / (d * d)).epsilon(1e-4));
        }
}

TEST_CASE("checked probability") {
    CHECK(checked_probability(1 + 1e-14) == 1);
    CHECK(checked_probability(-1e-14) == 0);
    CHECK_THROWS_AS(checked_probability(1.01), ModelContractError);
    CHECK_THROWS_AS(checked_probability(std::nan("")), ModelContractError);
}

TEST_CASE("neutral chain is a martingale and absorbs at the boundary") {
    auto m = model(50, EnvFamily::deterministic(0));
    std::vector<double> grid{0, 1, 5};
    RunningStats end;
    int fixed = 0;
    for (int i = 0; i < 4000; ++i) {
        Philox rng(12, static_cast<std::uint64_t>(i));
        auto p = simulate_wf(m, 5, grid, rng);
        REQUIRE(p.z.front() == 0.5);
        end.add(p.z.back());
        fixed += p.z.back() == 0 || p.z.back() == 1;
        CHECK(p.s.back() == 0);
    }
    CHECK(std::fabs(end.mean() - 0.5) < 5 * end.stderr_());
    CHECK(fixed > 3000);

    auto edge = model(20, EnvFamily::deterministic(0.5));
    edge.z0 = 0;
    Philox rng(1, 0);
    auto p = simulate_wf(edge, 1, {}, rng);
    for (double z : p.z)
        CHECK(z == 0);
    CHECK(p.t.size() == 21);
}

TEST_CASE("replaying the recorded environment reproduces the path") {
    auto m = model(200, EnvFamily::constructed(atom_env()));
    std::vector<double> env;
    Philox a(4, 2), b(4, 2);
    auto p = simulate_wf(m, 1, {}, a, &env);
    auto q = replay_wf(m, 1, {}, env, b);
    CHECK(env.size() == 200);
    CHECK(p.z == q.z);
    CHECK(p.s == q.s);
    std::vector<double> short_env(10, 0.0);
    CHECK_THROWS_AS(replay_wf(m, 1, {}, short_env, b), ContractError);
}

TEST_CASE("deterministic environment gives the classical selection drift") {
    double s = 1.0;
    auto env = EnvFamily::deterministic(s);
    for (int k : {1, 2})
        for (double l : {0.0, 1.0})
            for (double z : {0.1, 0.5, 0.8}) {
                auto H = TestFunction::wf(k, l);
                double zz = z * (1 - z);
                double expect = s * (k * zz + l) - 0.5 * k * k * zz;
                CHECK(G_limit_wf(z, H, env.target(), SelectionFn::example()) ==
                      doctest::Approx(expect).epsilon(1e-10));
                Philox rng(1, 0);
                double prev = 1e9;
                for (std::int64_t N : {100, 1000, 10000}) {
                    auto g = G_N_wf(z, H, model(N, env), GMode::EnvExact, 0, rng);
                    double err = std::fabs(g.value - expect);
                    CHECK(err < prev);
                    prev = err;
                }
                CHECK(prev < 5e-3);
            }
}

TEST_CASE("characteristics converge for the atom environment") {
    auto env = EnvFamily::constructed(atom_env());
    auto H = TestFunction::wf(1, 1.0);
    for (double z : {0.2, 0.5, 0.7}) {
        double target = G_limit_wf(z, H, env.target(), SelectionFn::example());
        Philox rng(2, 0);
        double prev = 1e9;
        for (std::int64_t N : {100, 1000, 10000}) {
            double err = std::fabs(G_N_wf(z, H, model(N, env), GMode::EnvExact, 0, rng).value - target);
            CHECK(err < prev);
            prev = err;
        }
    }
}

TEST_CASE("monte carlo modes agree with the exact environment mode") {
    auto m = model(500, EnvFamily::constructed(atom_env()));
    auto H = TestFunction::wf(2, 0.5);
    Philox rng(3, 0);
    double exact = G_N_wf(0.4, H, m, GMode::EnvExact, 0, rng).value;
    auto env_only = G_N_wf(0.4, H, m, GMode::EnvOnly, 200000, rng);
    auto full = G_N_wf(0.4, H, m, GMode::FullMC, 200000, rng);
    CHECK(std::fabs(env_only.value - exact) < 4 * env_only.stderr_);
    CHECK(std::fabs(full.value - exact) < 4 * full.stderr_);
    CHECK_THROWS_AS(G_N_wf(0.4, TestFunction::wf(0, 0), m, GMode::EnvExact, 0, rng), ContractError);
    CHECK_THROWS_AS(G_N_wf(1.5, H, m, GMode::EnvExact, 0, rng), ContractError);
}

TEST_CASE("drift of the example selection matches the general formula") {
    auto t = atom_env();
    for (double z : {0.1, 0.4, 0.9}) {
        CHECK(b1_example(z, t) == doctest::Approx(b1_wf(z, t, SelectionFn::example())).epsilon(1e-12));
        CHECK(b1_example(z, t, DriftConvention::PaperLiteral) ==
              doctest::Approx(b1_wf(z, t, SelectionFn::example(), DriftConvention::PaperLiteral))
                  .epsilon(1e-12));
    }
}

TEST_CASE("limit SDE stays in [0, 1] and is neutral without environment") {
    LevyTriplet zero;
    auto spec = wf_limit_sde_spec(zero, SelectionFn::example());
    RunningStats end;
    for (int i = 0; i < 4000; ++i) {
        Philox rng(6, static_cast<std::uint64_t>(i));
        auto path = integrate_wf(spec, 0.3, 1.0, 1e-2, rng);
        for (const auto& x : path.x) {
            REQUIRE(x[0] >= 0);
            REQUIRE(x[0] <= 1);
        }
        end.add(path.x.back()[0]);
    }
    CHECK(std::fabs(end.mean() - 0.3) < 5 * end.stderr_());

    auto jumpy = wf_limit_sde_spec(atom_env(), SelectionFn::example());
    Philox rng(7, 0);
    auto path = integrate_wf(jumpy, 0.5, 2.0, 1e-3, rng);
    for (const auto& x : path.x) {
        CHECK(x[0] >= 0);
        CHECK(x[0] <= 1);
    }
    CHECK(!path.jumps.empty());
}
