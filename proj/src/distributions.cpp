#include "jumplim/distributions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/random/binomial_distribution.hpp>
#include <boost/random/exponential_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

namespace jumplim {

double std_normal(Philox& rng) {
    boost::random::normal_distribution<double> dist;
    return dist(rng);
}

double exponential(Philox& rng) {
    return -std::log(rng.uniform());
}

std::int64_t poisson(double mean, Philox& rng) {
    if (!(mean > 0))
        return 0;
    boost::random::poisson_distribution<std::int64_t, double> dist(mean);
    return dist(rng);
}

std::int64_t binomial(std::int64_t n, double p, Philox& rng) {
    if (n <= 0 || p <= 0)
        return 0;
    if (p >= 1)
        return n;
    boost::random::binomial_distribution<std::int64_t, double> dist(n, p);
    return dist(rng);
}

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double normal_sf(double x) {
    return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

double normal_quantile(double p) {
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double truncated_normal(double lo, double hi, Philox& rng) {
    if (!(lo < hi))
        return lo;
    double u = rng.uniform();
    double x;
    if (lo >= 0) {
        double a = normal_sf(lo);
        double b = normal_sf(hi);
        x = -normal_quantile(a - u * (a - b));
    } else if (hi <= 0) {
        double a = normal_cdf(lo);
        double b = normal_cdf(hi);
        x = normal_quantile(a + u * (b - a));
    } else {
        double a = normal_cdf(lo);
        double b = normal_cdf(hi);
        x = normal_quantile(a + u * (b - a));
    }
    return std::fmin(std::fmax(x, lo), hi);
}

double truncated_normal_coupled(double lo, double hi, double xi, Philox& rng) {
    if (xi >= lo && xi <= hi)
        return xi;
    return truncated_normal(lo, hi, rng);
}

namespace {

const std::array<double, 16>& small_log_factorials() {
    static const std::array<double, 16> table = [] {
        std::array<double, 16> t{};
        double acc = 0;
        for (int i = 1; i < 16; ++i) {
            acc += std::log(static_cast<double>(i));
            t[i] = acc;
        }
        return t;
    }();
    return table;
}

// Deviance term x log(x/np) + np - x, stable near x = np.
double bd0(double x, double np) {
    if (std::fabs(x - np) < 0.1 * (x + np)) {
        double v = (x - np) / (x + np);
        double s = (x - np) * v;
        double ej = 2 * x * v;
        v *= v;
        for (int j = 1; j < 1000; ++j) {
            ej *= v;
            double s1 = s + ej / (2 * j + 1);
            if (s1 == s)
                return s1;
            s = s1;
        }
        return s;
    }
    return x * std::log(x / np) + np - x;
}

constexpr double kLogSqrt2Pi = 0.918938533204672741780329736406;

} // namespace

double stirling_error(double n) {
    constexpr double s0 = 1.0 / 12;
    constexpr double s1 = 1.0 / 360;
    constexpr double s2 = 1.0 / 1260;
    constexpr double s3 = 1.0 / 1680;
    constexpr double s4 = 1.0 / 1188;
    if (n <= 15) {
        auto k = static_cast<std::int64_t>(n);
        if (static_cast<double>(k) == n)
            return small_log_factorials()[k] - (n + 0.5) * std::log(n) + n - kLogSqrt2Pi;
        return std::lgamma(n + 1) - (n + 0.5) * std::log(n) + n - kLogSqrt2Pi;
    }
    double nn = n * n;
    if (n > 500)
        return (s0 - s1 / nn) / n;
    if (n > 80)
        return (s0 - (s1 - s2 / nn) / nn) / n;
    if (n > 35)
        return (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / n;
    return (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / n;
}

double log_factorial(std::int64_t k) {
    if (k < 16)
        return small_log_factorials()[k];
    double n = static_cast<double>(k);
    return (n + 0.5) * std::log(n) - n + kLogSqrt2Pi + stirling_error(n);
}

double binomial_pmf(std::int64_t k, std::int64_t n, double p) {
    if (k < 0 || k > n)
        return 0;
    double q = 1 - p;
    if (p <= 0)
        return k == 0 ? 1 : 0;
    if (q <= 0)
        return k == n ? 1 : 0;
    double dn = static_cast<double>(n);
    if (k == 0)
        return std::exp(dn * std::log1p(-p));
    if (k == n)
        return std::exp(dn * std::log(p));
    double dk = static_cast<double>(k);
    double lc = stirling_error(dn) - stirling_error(dk) - stirling_error(dn - dk)
                - bd0(dk, dn * p) - bd0(dn - dk, dn * q);
    double lf = 2 * kLogSqrt2Pi + std::log(dk) + std::log1p(-dk / dn);
    return std::exp(lc - 0.5 * lf);
}

namespace {

// Smallest k with P(X <= k) >= normal_cdf(xi), for xi <= 0.
std::int64_t binomial_lower_quantile(std::int64_t n, double p, double xi) {
    double u = normal_cdf(xi);
    double dn = static_cast<double>(n);
    double mu = dn * p;
    double sd = std::sqrt(mu * (1 - p));
    auto k = static_cast<std::int64_t>(std::clamp(std::floor(mu + sd * xi + 0.5), 0.0, dn));
    double cdf = k == n ? 1.0 : boost::math::ibeta(dn - static_cast<double>(k),
                                                   static_cast<double>(k) + 1, 1 - p);
    if (cdf >= u) {
        for (;;) {
            if (k == 0)
                return 0;
            double below = cdf - binomial_pmf(k, n, p);
            if (below < u)
                return k;
            cdf = below;
            --k;
        }
    }
    for (;;) {
        ++k;
        cdf += binomial_pmf(k, n, p);
        if (cdf >= u || k == n)
            return k;
    }
}

} // namespace

std::int64_t binomial_coupled(std::int64_t n, double p, double xi) {
    if (n <= 0 || p <= 0)
        return 0;
    if (p >= 1)
        return n;
    if (xi <= 0)
        return binomial_lower_quantile(n, p, xi);
    return n - binomial_lower_quantile(n, 1 - p, -xi);
}

} // namespace jumplim
