#include "jumplim/testfn.hpp"

#include <cmath>
#include <sstream>

#include "jumplim/errors.hpp"

namespace jumplim {

TestFunction TestFunction::wf(int k, double ell) {
    if (k < 0 || !(ell >= 0))
        throw ContractError("WF test function needs k >= 0 and l >= 0");
    return {TestFamily::WF, k, ell};
}

TestFunction TestFunction::csbp_kl(int k, double ell) {
    if (k < 1 || !(ell >= 0))
        throw ContractError("CSBP test function H_{k,l} needs k >= 1 and l >= 0");
    return {TestFamily::CsbpKL, k, ell};
}

TestFunction TestFunction::csbp_l(double ell) {
    if (!(ell >= 1))
        throw ContractError("CSBP test function H_l needs l >= 1");
    return {TestFamily::CsbpL, 0, ell};
}

double TestFunction::operator()(double u, double w) const {
    switch (family_) {
    case TestFamily::WF:
        return -std::expm1(-k_ * u - ell_ * w);
    case TestFamily::CsbpKL:
        return std::pow(u, k_) * std::exp(-ell_ * w);
    case TestFamily::CsbpL:
        return -std::expm1(-ell_ * w);
    }
    return 0;
}

double TestFunction::bound() const {
    return 1 + std::exp(ell_);
}

std::string TestFunction::name() const {
    std::ostringstream os;
    switch (family_) {
    case TestFamily::WF:
        os << "WF(" << k_ << "," << ell_ << ")";
        break;
    case TestFamily::CsbpKL:
        os << "H(" << k_ << "," << ell_ << ")";
        break;
    case TestFamily::CsbpL:
        os << "H(" << ell_ << ")";
        break;
    }
    return os.str();
}

namespace {

DecompositionCoeffs with_remainder(DecompositionCoeffs c, std::function<double(double, double)> H,
                                   const SpecificTruncation& h0) {
    c.remainder = [c, H = std::move(H), h0](double u, double w) {
        auto x = h0(u, w);
        double linear = c.alpha[0] * x[0] + c.alpha[1] * x[1];
        double quad = c.beta[0][0] * x[0] * x[0] + 2 * c.beta[0][1] * x[0] * x[1] +
                      c.beta[1][1] * x[1] * x[1];
        return H(u, w) - linear - quad;
    };
    return c;
}

} // namespace

DecompositionCoeffs decompose(const TestFunction& H, const SpecificTruncation& h0) {
    bool wf_space = h0.space == IncrementSpace::WF;
    if ((H.family() == TestFamily::WF) != wf_space)
        throw ContractError("test function " + H.name() + " does not match the truncation's increment space");
    DecompositionCoeffs c;
    double k = H.k();
    double l = H.ell();
    switch (H.family()) {
    case TestFamily::WF:
        c.alpha = {k, l};
        c.beta = {{{-k * k / 2, -k * l / 2}, {-k * l / 2, -l * l / 2}}};
        break;
    case TestFamily::CsbpKL:
        if (H.k() == 1) {
            c.alpha = {1, 0};
            c.beta = {{{0, -l / 2}, {-l / 2, 0}}};
        } else if (H.k() == 2) {
            c.beta = {{{1, 0}, {0, 0}}};
        }
        break;
    case TestFamily::CsbpL:
        c.alpha = {0, l};
        c.beta = {{{0, 0}, {0, -l * l / 2}}};
        break;
    }
    return with_remainder(c, [H](double u, double w) { return H(u, w); }, h0);
}

DecompositionCoeffs decompose_numerical(const std::function<double(double, double)>& H,
                                        const SpecificTruncation& h0, double step) {
    auto first = [&](int i, double d) {
        double p = i == 0 ? H(d, 0) : H(0, d);
        double m = i == 0 ? H(-d, 0) : H(0, -d);
        return (p - m) / (2 * d);
    };
    auto second = [&](int i, int j, double d) {
        if (i == j) {
            double p = i == 0 ? H(d, 0) : H(0, d);
            double m = i == 0 ? H(-d, 0) : H(0, -d);
            return (p - 2 * H(0, 0) + m) / (d * d);
        }
        return (H(d, d) - H(d, -d) - H(-d, d) + H(-d, -d)) / (4 * d * d);
    };
    auto richardson = [&](auto&& estimate) {
        double coarse = estimate(step);
        double fine = estimate(step / 2);
        return (4 * fine - coarse) / 3;
    };
    DecompositionCoeffs c;
    for (int i = 0; i < 2; ++i)
        c.alpha[i] = richardson([&](double d) { return first(i, d); });
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            c.beta[i][j] = 0.5 * richardson([&](double d) { return second(i, j, d); });
    return with_remainder(c, H, h0);
}

std::int64_t binomial_coefficient(int n, int k) {
    if (k < 0 || k > n)
        return 0;
    k = std::min(k, n - k);
    std::int64_t c = 1;
    for (int i = 1; i <= k; ++i)
        c = c * (n - k + i) / i;
    return c;
}

namespace {

// Extended precision keeps the cancellation error of the alternating sum
// near 1e-15 even when the terms reach C(12,6) e^{12|u|}.
long double term(SumKind kind, int j, const SumArgs& a) {
    switch (kind) {
    case SumKind::I1:
        return j;
    case SumKind::I2:
        return static_cast<long double>(j) * j;
    case SumKind::I3:
        return -std::expm1(-static_cast<long double>(j) * a.u);
    case SumKind::I4:
        return -std::expm1(-(j * static_cast<long double>(a.z) + a.ell) * a.u);
    }
    return 0;
}

void check_args(SumKind kind, int k, const SumArgs& a) {
    if (k < 0)
        throw ContractError("binomial sum needs k >= 0");
    if ((kind == SumKind::I3 || kind == SumKind::I4) && !(a.u > -1))
        throw ContractError("binomial sum needs u > -1");
    if (kind == SumKind::I4 && (!(a.z >= 0) || !(a.ell >= 0)))
        throw ContractError("binomial sum I4 needs z >= 0 and l >= 0");
}

} // namespace

double binomial_sum_direct(SumKind kind, int k, const SumArgs& args, bool allow_large_k) {
    check_args(kind, k, args);
    if (k > kMaxDefaultK && !allow_large_k)
        throw ContractError("k above 12 needs explicit opt-in");
    if (k > 66)
        throw ContractError("binomial coefficients overflow beyond k = 66");
    long double sum = 0;
    long double comp = 0;
    for (int j = 0; j <= k; ++j) {
        long double sign = ((k - j) % 2 == 0) ? 1.0L : -1.0L;
        long double x = sign * static_cast<long double>(binomial_coefficient(k, j)) * term(kind, j, args);
        if (k <= kMaxDefaultK) {
            sum += x;
            continue;
        }
        long double t = sum + x;
        if (std::fabs(sum) >= std::fabs(x))
            comp += (sum - t) + x;
        else
            comp += (x - t) + sum;
        sum = t;
    }
    return static_cast<double>(sum + comp);
}

double binomial_sum_closed(SumKind kind, int k, const SumArgs& args) {
    check_args(kind, k, args);
    double sign = (k % 2 == 0) ? -1.0 : 1.0; // (-1)^(k+1)
    switch (kind) {
    case SumKind::I1:
        return k == 1 ? 1 : 0;
    case SumKind::I2:
        return (k == 2 ? 2 : 0) + (k == 1 ? 1 : 0);
    case SumKind::I3:
        if (k == 0)
            return 0;
        return sign * std::pow(f_z(1, args.u), k);
    case SumKind::I4:
        if (k == 0)
            return f_z(args.ell, args.u);
        return sign * std::exp(-args.ell * args.u) * std::pow(f_z(args.z, args.u), k);
    }
    return 0;
}

} // namespace jumplim
