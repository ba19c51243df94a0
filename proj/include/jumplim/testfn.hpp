#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>

#include "levy.hpp"

namespace jumplim {

enum class TestFamily { WF, CsbpKL, CsbpL };

/*!
 * Convergence-determining test functions on the increment space
 * [-1, 1] x (-1, inf).
 *
 * WF(k, l):      1 - exp(-k u - l w)
 * CsbpKL(k, l):  u^k exp(-l w)
 * CsbpL(l):      1 - exp(-l w)
 */
class TestFunction {
  public:
    static TestFunction wf(int k, double ell);
    static TestFunction csbp_kl(int k, double ell);
    static TestFunction csbp_l(double ell);

    double operator()(double u, double w) const;

    TestFamily family() const noexcept { return family_; }
    int k() const noexcept { return k_; }
    double ell() const noexcept { return ell_; }
    //! Declared sup bound 1 + e^l.
    double bound() const;
    std::string name() const;

  private:
    TestFunction(TestFamily family, int k, double ell) : family_(family), k_(k), ell_(ell) {}

    TestFamily family_;
    int k_;
    double ell_;
};

enum class IncrementSpace { WF, CSBP };

//! h0(u, w) = (u, h_E(w)) on the WF or CSBP increment space.
struct SpecificTruncation {
    IncrementSpace space = IncrementSpace::WF;
    TruncationFn h = TruncationFn::clamp(1.0);

    std::array<double, 2> operator()(double u, double w) const { return {u, h(w)}; }
};

struct DecompositionCoeffs {
    std::array<double, 2> alpha{};
    std::array<std::array<double, 2>, 2> beta{};
    std::function<double(double, double)> remainder;
};

//! Closed-form second-order decomposition of H relative to h0.
DecompositionCoeffs decompose(const TestFunction& H, const SpecificTruncation& h0);

//! Same coefficients from central differences at the origin with Richardson
//! extrapolation (base step 1e-5).
DecompositionCoeffs decompose_numerical(const std::function<double(double, double)>& H,
                                        const SpecificTruncation& h0, double step = 1e-5);

inline double f_z(double z, double u) {
    return -std::expm1(-z * u);
}

enum class SumKind { I1, I2, I3, I4 };

struct SumArgs {
    double u = 0;
    double z = 0;
    double ell = 0;
};

inline constexpr int kMaxDefaultK = 12;

std::int64_t binomial_coefficient(int n, int k);

//! sum_j C(k,j) (-1)^(k-j) x_j with x_j = j, j^2, f_j(u) or f_{jz+l}(u).
//! k above 12 needs allow_large_k and uses compensated summation.
double binomial_sum_direct(SumKind kind, int k, const SumArgs& args, bool allow_large_k = false);
//! Closed form of the same sum.
double binomial_sum_closed(SumKind kind, int k, const SumArgs& args);

} // namespace jumplim
