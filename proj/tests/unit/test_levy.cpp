#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "jumplim/distributions.hpp"
#include "jumplim/errors.hpp"
#include "jumplim/levy.hpp"
#include "jumplim/stats.hpp"

using namespace jumplim;

namespace {

LevyTriplet atom_triplet() {
    LevyTriplet t;
    t.alpha = 0.2;
    t.sigma = 0.3;
    t.nu.add_atom(0.5, 0.4).add_atom(-0.3, 0.6);
    return t;
}

} // namespace

TEST_CASE("truncation functions are the identity near zero and bounded") {
    auto c = TruncationFn::clamp(1.0);
    auto s = TruncationFn::smooth(0.5, 1.0);
    for (double w : {-0.4, -0.1, 0.0, 0.3, 0.5}) {
        CHECK(c(w) == w);
        CHECK(s(w) == w);
    }
    CHECK(c(3.0) == 1.0);
    CHECK(c(-3.0) == -1.0);
    for (double w : {0.6, 1.0, 5.0, 100.0}) {
        CHECK(s(w) > 0.5);
        CHECK(s(w) < 1.0 + 1e-15);
        CHECK(s(-w) == -s(w));
    }
}

TEST_CASE("slab cdf and quantile are inverse") {
    std::vector<Slab> slabs{{SlabFamily::Uniform, -0.5, 0.8, 0, 1},
                            {SlabFamily::Power, 0.1, 4.0, 0.5, 1},
                            {SlabFamily::Power, 0.1, std::numeric_limits<double>::infinity(), 1.5, 1},
                            {SlabFamily::Power, 0.2, 2.0, 0.0, 1},
                            {SlabFamily::Exponential, 0.0, 10.0, 2.0, 1}};
    for (const auto& s : slabs)
        for (double t : {0.01, 0.3, 0.5, 0.9, 0.999})
            CHECK(s.cdf(s.quantile(t)) == doctest::Approx(t).epsilon(1e-10));
}

TEST_CASE("jump measure mass and integrals") {
    JumpMeasure nu;
    nu.add_atom(0.5, 2.0).add_atom(-0.01, 1.0);
    nu.add_slab({SlabFamily::Uniform, 0.0, 2.0, 0, 4.0});
    CHECK(nu.mass() == doctest::Approx(7.0));
    CHECK(nu.mass(Region::abs_at_least(0.1)) == doctest::Approx(2.0 + 4.0 * 1.9 / 2.0));
    CHECK(nu.mass(Region::abs_below(0.1)) == doctest::Approx(1.0 + 0.2));
    double m2 = nu.integrate([](double w) { return w * w; });
    CHECK(m2 == doctest::Approx(2.0 * 0.25 + 1e-4 + 4.0 * (8.0 / 3) / 2.0).epsilon(1e-10));
}

TEST_CASE("jump measure sampling follows the restricted law") {
    JumpMeasure nu;
    nu.add_atom(0.5, 1.0).add_atom(-0.5, 3.0);
    Philox rng(2, 0);
    int pos = 0;
    for (int i = 0; i < 40000; ++i)
        pos += nu.sample(Region::all(), rng) > 0;
    CHECK(std::fabs(pos / 40000.0 - 0.25) < 5 * std::sqrt(0.25 * 0.75 / 40000));
}

TEST_CASE("support validation") {
    JumpMeasure bad_env;
    bad_env.add_atom(-1.5, 1.0);
    CHECK_THROWS_AS(bad_env.validate(Support::Environment), ConfigError);
    JumpMeasure zero;
    zero.add_atom(0.0, 1.0);
    CHECK_THROWS_AS(zero.validate(Support::Environment), ConfigError);
    JumpMeasure neg_demo;
    neg_demo.add_atom(-0.2, 1.0);
    CHECK_NOTHROW(neg_demo.validate(Support::Environment));
    CHECK_THROWS_AS(neg_demo.validate(Support::Demographic), ConfigError);
    JumpMeasure heavy;
    heavy.add_slab({SlabFamily::Power, 1.0, std::numeric_limits<double>::infinity(), 0.0, 1.0});
    CHECK_THROWS_AS(heavy.validate(Support::Demographic), ConfigError);
    LevyTriplet t;
    t.sigma = -1;
    CHECK_THROWS_AS(validate(t, Support::Environment), ConfigError);
}

TEST_CASE("laplace exponent of an atom triplet") {
    auto t = atom_triplet();
    for (double z : {0.0, 0.5, 1.0, 3.0}) {
        double expect = t.alpha * z - 0.5 * t.sigma * t.sigma * z * z +
                        0.4 * (1 - std::exp(-0.5 * z) - 0.5 * z) +
                        0.6 * (1 - std::exp(0.3 * z) + 0.3 * z);
        CHECK(gamma_levy(z, t) == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK(t.beta() == doctest::Approx(0.09 + 0.4 * 0.25 + 0.6 * 0.09));
    CHECK_THROWS_AS(gamma_E(-1, t), ContractError);
}

TEST_CASE("deterministic environment family") {
    auto f = EnvFamily::deterministic(0.7);
    EnvLaw law = f.law(100);
    CHECK(law.deterministic);
    Philox rng(1, 1);
    CHECK(f.sample(law, rng) == doctest::Approx(0.007));
    CHECK(law.v * f.expectation(law, [](double w) { return w; }) == doctest::Approx(0.7));
    CHECK_THROWS_AS(EnvFamily::deterministic(-5).law(2), ConfigError);
}

TEST_CASE("constructed family moments approach the triplet") {
    auto f = EnvFamily::constructed(atom_triplet());
    auto h = f.target().h;
    double prev_h2 = 1e9;
    for (double n : {100.0, 1000.0, 10000.0, 100000.0}) {
        EnvLaw law = f.law(n);
        double mh = law.v * f.expectation(law, [&](double w) { return h(w); });
        double mh2 = law.v * f.expectation(law, [&](double w) { return h(w) * h(w); });
        // The drift carries an O(1/v) bias jump_mass * c / v.
        CHECK(std::fabs(mh - f.target().alpha) <= law.jump_mass * std::fabs(law.c) / law.v + 1e-10);
        double eh2 = std::fabs(mh2 - f.target().beta());
        CHECK(eh2 <= prev_h2 + 1e-12);
        prev_h2 = eh2;
        auto [lo, hi] = f.range(law);
        CHECK(lo > -1);
        CHECK(hi >= lo);
    }
    CHECK(prev_h2 < 1e-3);
}

TEST_CASE("coupled environment draw has the same law") {
    auto f = EnvFamily::constructed(atom_triplet());
    EnvLaw law = f.law(400);
    Philox a(3, 0), b(3, 1), xi_rng(3, 2);
    RunningStats plain, coupled;
    for (int i = 0; i < 100000; ++i) {
        plain.add(law.v * f.sample(law, a));
        coupled.add(law.v * f.sample_coupled(law, std_normal(xi_rng), b));
    }
    double se = std::hypot(plain.stderr_(), coupled.stderr_());
    CHECK(std::fabs(plain.mean() - coupled.mean()) < 5 * se);
}

TEST_CASE("assumption A passes for an atom-jump family") {
    LevyTriplet t;
    t.nu.add_atom(0.5, 1.0).add_atom(-0.4, 0.5);
    t.alpha = 0.5 * 1.0 - 0.4 * 0.5;
    auto f = EnvFamily::constructed(t);
    std::vector<double> ns{100, 1000};
    std::vector<MomentFn> fs{indicator_moment(t.nu, 0.3, 0.7)};
    auto r = check_assumption_A(f, ns, 200000, fs, 17, 2);
    CHECK(r.passed());
    CHECK(r.rows.size() == 6);
    auto again = check_assumption_A(f, ns, 200000, fs, 17, 1);
    for (std::size_t i = 0; i < r.rows.size(); ++i)
        CHECK(r.rows[i].estimate == again.rows[i].estimate);
    CHECK_THROWS_AS(check_assumption_A(f, ns, 10, fs, 1), ContractError);
}

TEST_CASE("levy path has the triplet mean and variance") {
    auto t = atom_triplet();
    std::vector<double> grid{0, 0.5, 1.0};
    RunningStats y1;
    for (int i = 0; i < 20000; ++i) {
        Philox rng(8, static_cast<std::uint64_t>(i));
        auto p = sample_levy_path(t, grid, rng);
        REQUIRE(p.y.front() == 0);
        y1.add(p.y.back());
    }
    // Atoms lie inside the clamp radius, so E[Y_1] = alpha and Var = beta.
    CHECK(std::fabs(y1.mean() - t.alpha) < 5 * y1.stderr_());
    CHECK(y1.variance() == doctest::Approx(t.beta()).epsilon(0.05));
    Philox rng(1, 0);
    std::vector<double> bad{0.1, 1.0};
    CHECK_THROWS_AS(sample_levy_path(t, bad, rng), ContractError);
}
