#include <doctest.h>

#include <array>
#include <cmath>

#include "jumplim/errors.hpp"
#include "jumplim/testfn.hpp"

using namespace jumplim;

namespace {

const std::array<SumArgs, 10> kGrid{{{0.0, 0.0, 0.0},
                                     {0.1, 0.5, 0.0},
                                     {0.25, 1.0, 0.5},
                                     {0.5, 0.2, 1.0},
                                     {0.75, 2.0, 0.3},
                                     {1.0, 0.05, 2.0},
                                     {1.5, 1.5, 0.0},
                                     {-0.3, 0.7, 0.7},
                                     {0.01, 3.0, 1.2},
                                     {2.0, 0.9, 0.1}}};

} // namespace

TEST_CASE("binomial coefficients") {
    CHECK(binomial_coefficient(12, 6) == 924);
    CHECK(binomial_coefficient(5, 0) == 1);
    CHECK(binomial_coefficient(5, 6) == 0);
    CHECK(binomial_coefficient(60, 30) == 118264581564861424LL);
}

TEST_CASE("alternating binomial sums equal their closed forms") {
    for (SumKind kind : {SumKind::I1, SumKind::I2, SumKind::I3, SumKind::I4})
        for (int k = 0; k <= kMaxDefaultK; ++k)
            for (const auto& a : kGrid) {
                double direct = binomial_sum_direct(kind, k, a);
                double closed = binomial_sum_closed(kind, k, a);
                CHECK_MESSAGE(std::fabs(direct - closed) <= 1e-12,
                              "kind " << static_cast<int>(kind) << " k " << k << " u " << a.u);
            }
}

TEST_CASE("binomial sums reject bad arguments") {
    CHECK_THROWS_AS(binomial_sum_direct(SumKind::I3, 2, {-1.5, 0, 0}), ContractError);
    CHECK_THROWS_AS(binomial_sum_direct(SumKind::I4, 2, {0.5, -1, 0}), ContractError);
    CHECK_THROWS_AS(binomial_sum_direct(SumKind::I1, 13, {}), ContractError);
    CHECK_THROWS_AS(binomial_sum_direct(SumKind::I1, -1, {}), ContractError);
    CHECK(binomial_sum_direct(SumKind::I1, 20, {}, true) == doctest::Approx(0).epsilon(1e-9));
}

TEST_CASE("test function values and bound") {
    auto w = TestFunction::wf(2, 0.5);
    CHECK(w(0.1, 0.2) == doctest::Approx(1 - std::exp(-0.2 - 0.1)));
    CHECK(w(0, 0) == 0);
    auto kl = TestFunction::csbp_kl(3, 1.0);
    CHECK(kl(0.5, 0.2) == doctest::Approx(0.125 * std::exp(-0.2)));
    auto l = TestFunction::csbp_l(2.0);
    CHECK(l(0.7, 0.1) == doctest::Approx(1 - std::exp(-0.2)));
    CHECK(w.bound() == doctest::Approx(1 + std::exp(0.5)));
    CHECK(w.name() == "WF(2,0.5)");
}

TEST_CASE("closed-form decomposition matches finite differences") {
    SpecificTruncation wf_h{IncrementSpace::WF, TruncationFn::clamp(1.0)};
    SpecificTruncation cs_h{IncrementSpace::CSBP, TruncationFn::clamp(1.0)};
    std::vector<std::pair<TestFunction, SpecificTruncation>> cases;
    for (int k : {1, 2, 3})
        for (double l : {0.0, 0.5, 2.0}) {
            cases.emplace_back(TestFunction::wf(k, l), wf_h);
            cases.emplace_back(TestFunction::csbp_kl(k, l), cs_h);
        }
    for (double l : {1.0, 2.0, 3.0})
        cases.emplace_back(TestFunction::csbp_l(l), cs_h);

    for (const auto& [H, h0] : cases) {
        auto exact = decompose(H, h0);
        auto numeric = decompose_numerical([H](double u, double w) { return H(u, w); }, h0);
        for (int i = 0; i < 2; ++i) {
            CHECK_MESSAGE(std::fabs(exact.alpha[i] - numeric.alpha[i]) <= 1e-6, H.name());
            for (int j = 0; j < 2; ++j)
                CHECK_MESSAGE(std::fabs(exact.beta[i][j] - numeric.beta[i][j]) <= 1e-6, H.name());
        }
        // The remainder is third order at the origin.
        double r = exact.remainder(1e-3, -1e-3);
        CHECK(std::fabs(r) < 1e-7);
    }
}

TEST_CASE("decomposition rejects a mismatched increment space") {
    SpecificTruncation cs_h{IncrementSpace::CSBP, TruncationFn::clamp(1.0)};
    CHECK_THROWS_AS(decompose(TestFunction::wf(1, 0), cs_h), ContractError);
}
