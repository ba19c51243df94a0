#include <doctest.h>

#include <cmath>

#include "jumplim/errors.hpp"
#include "jumplim/jumpdiff.hpp"
#include "jumplim/stats.hpp"

using namespace jumplim;

namespace {

SdeSpec one_dim(std::function<double(double)> drift, std::function<double(double)> sd,
                CoordinateDomain dom = {}) {
    SdeSpec s;
    s.name = "test";
    s.dim = 1;
    s.drift = [drift](const State& x) { return State{drift(x[0])}; };
    s.diffusion = [sd](const State& x) {
        Matrix m{};
        m[0][0] = sd(x[0]);
        return m;
    };
    s.domain = {dom};
    return s;
}

} // namespace

TEST_CASE("step count") {
    CHECK(step_count(1.0, 0.1) == 10);
    CHECK(step_count(1.0, 0.3) == 4);
    CHECK(step_count(0.0, 0.1) == 0);
    CHECK(step_count(1e-6, 0.1) == 1);
    CHECK_THROWS_AS(step_count(1.0, 0.0), ContractError);
}

TEST_CASE("pure drift is integrated exactly for constant drift") {
    auto s = one_dim([](double) { return 2.0; }, [](double) { return 0.0; });
    Philox rng(1, 0);
    auto p = integrate(s, State{1.0}, 1.5, 0.01, rng);
    CHECK(p.x.back()[0] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(p.t.back() == doctest::Approx(1.5));
    CHECK(p.t.size() == 151);
}

TEST_CASE("recording stride keeps the final time") {
    auto s = one_dim([](double) { return 1.0; }, [](double) { return 0.0; });
    Philox rng(1, 0);
    IntegrateOptions opt;
    opt.record_stride = 7;
    auto p = integrate(s, State{0.0}, 1.0, 0.01, rng, opt);
    CHECK(p.t.back() == doctest::Approx(1.0));
    CHECK(p.t.size() == 1 + 14 + 1);
}

TEST_CASE("geometric brownian motion mean") {
    double mu = 0.5, sig = 0.4;
    auto s = one_dim([mu](double x) { return mu * x; }, [sig](double x) { return sig * x; });
    RunningStats end;
    for (int i = 0; i < 20000; ++i) {
        Philox rng(2, static_cast<std::uint64_t>(i));
        end.add(integrate(s, State{1.0}, 1.0, 1e-2, rng).x.back()[0]);
    }
    // Euler mean is (1 + mu dt)^n exactly.
    double euler = std::pow(1 + mu * 1e-2, 100);
    CHECK(std::fabs(end.mean() - euler) < 4 * end.stderr_());
    CHECK(euler == doctest::Approx(std::exp(mu)).epsilon(2e-3));
}

TEST_CASE("accounting adds up to the displacement") {
    auto s = one_dim([](double x) { return -x; }, [](double) { return 1.0; },
                     {0.9, 5.0, BoundaryPolicy::Clamp});
    JumpSource js;
    js.name = "up";
    js.intensity = [](const State&) { return 3.0; };
    js.draw = [](const State&, Philox&) { return JumpDraw{State{0.5}, 0.5}; };
    s.jumps.push_back(js);
    Philox rng(3, 0);
    auto p = integrate(s, State{1.0}, 2.0, 1e-2, rng);
    const auto& a = p.account;
    double total = a.drift[0] + a.diffusion[0] + a.jumps[0] + a.corrections[0];
    CHECK(p.x.back()[0] - 1.0 == doctest::Approx(total).epsilon(1e-10));
    CHECK(a.corrections[0] != 0);
    for (const auto& x : p.x) {
        CHECK(x[0] >= 0.9);
        CHECK(x[0] <= 5);
    }
    for (const auto& j : p.jumps)
        CHECK(j.source == 0);
}

TEST_CASE("poisson jump counts") {
    auto s = one_dim([](double) { return 0.0; }, [](double) { return 0.0; });
    JumpSource js;
    js.name = "unit";
    js.intensity = [](const State&) { return 2.0; };
    js.draw = [](const State&, Philox&) { return JumpDraw{State{1.0}, 1.0}; };
    s.jumps.push_back(js);
    RunningStats n;
    for (int i = 0; i < 5000; ++i) {
        Philox rng(4, static_cast<std::uint64_t>(i));
        n.add(integrate(s, State{0.0}, 1.5, 1e-2, rng).x.back()[0]);
    }
    CHECK(std::fabs(n.mean() - 3.0) < 5 * n.stderr_());
    CHECK(n.variance() == doctest::Approx(3.0).epsilon(0.1));
}

TEST_CASE("absorbing boundary freezes the coordinate") {
    auto s = one_dim([](double) { return -10.0; }, [](double) { return 0.0; },
                     {0.0, 1.0, BoundaryPolicy::Absorb});
    Philox rng(5, 0);
    auto p = integrate(s, State{0.5}, 1.0, 1e-2, rng);
    CHECK(p.x.back()[0] == 0);
    CHECK_FALSE(p.explosion_time);
}

TEST_CASE("explosion sends the state to the cemetery") {
    CoordinateDomain d;
    d.cemetery_above = 1e6;
    auto s = one_dim([](double x) { return x * x; }, [](double) { return 0.0; }, d);
    Philox rng(6, 0);
    auto p = integrate(s, State{1.0}, 2.0, 1e-4, rng);
    REQUIRE(p.explosion_time);
    // The ODE x' = x^2 from 1 blows up at t = 1.
    CHECK(*p.explosion_time == doctest::Approx(1.0).epsilon(2e-3));
    CHECK(std::isinf(p.x.back()[0]));
}

TEST_CASE("same stream gives the same path") {
    auto s = one_dim([](double x) { return -x; }, [](double) { return 0.7; });
    Philox a(9, 9), b(9, 9);
    auto p = integrate(s, State{0.2}, 1.0, 1e-2, a);
    auto q = integrate(s, State{0.2}, 1.0, 1e-2, b);
    for (std::size_t i = 0; i < p.x.size(); ++i)
        CHECK(p.x[i][0] == q.x[i][0]);
}

TEST_CASE("bad specs are rejected") {
    auto s = one_dim([](double) { return 0.0; }, [](double) { return 0.0; },
                     {0.0, 1.0, BoundaryPolicy::Clamp});
    CHECK_THROWS_AS(Stepper(s, State{2.0}), ContractError);
    SdeSpec empty;
    empty.dim = 0;
    CHECK_THROWS_AS(Stepper(empty, State{}), ContractError);
    Philox rng(1, 0);
    CHECK_THROWS_AS(integrate_wf(s, 0.5, 1.0, 0.1, rng), ContractError);
}

TEST_CASE("non-finite state without a cemetery raises a blowup error") {
    auto s = one_dim([](double x) { return x * x * x * 1e300; }, [](double) { return 0.0; });
    Philox rng(1, 0);
    CHECK_THROWS_AS(integrate(s, State{10.0}, 1.0, 0.1, rng), BlowupError);
}
