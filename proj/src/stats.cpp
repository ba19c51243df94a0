#include "jumplim/stats.hpp"

#include <algorithm>
#include <numeric>

#include "jumplim/distributions.hpp"
#include "jumplim/errors.hpp"

namespace jumplim {

void RunningStats::merge(const RunningStats& o) noexcept {
    if (o.n_ == 0)
        return;
    if (n_ == 0) {
        *this = o;
        return;
    }
    double total = n_ + o.n_;
    double d = o.mean_ - mean_;
    mean_ += d * o.n_ / total;
    m2_ += o.m2_ + d * d * n_ * o.n_ / total;
    n_ = total;
}

Estimate mean_estimate(std::span<const double> xs) {
    RunningStats s;
    for (double x : xs)
        s.add(x);
    return s.estimate();
}

double wasserstein1_sorted(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty())
        throw ContractError("Wasserstein distance of an empty sample");
    if (a.size() == b.size()) {
        double total = 0;
        for (std::size_t i = 0; i < a.size(); ++i)
            total += std::fabs(a[i] - b[i]);
        return total / static_cast<double>(a.size());
    }
    // Integrate |F_a - F_b| over the merged support.
    double na = static_cast<double>(a.size());
    double nb = static_cast<double>(b.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double total = 0;
    double x = std::min(a[0], b[0]);
    while (i < a.size() || j < b.size()) {
        double next;
        if (j >= b.size() || (i < a.size() && a[i] <= b[j]))
            next = a[i];
        else
            next = b[j];
        total += std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - x);
        x = next;
        while (i < a.size() && a[i] == x)
            ++i;
        while (j < b.size() && b[j] == x)
            ++j;
    }
    return total;
}

double wasserstein1(std::span<const double> a, std::span<const double> b) {
    std::vector<double> sa(a.begin(), a.end());
    std::vector<double> sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    return wasserstein1_sorted(sa, sb);
}

Band bootstrap_w1_band(std::span<const double> a, std::span<const double> b, int resamples,
                       std::uint64_t seed, double level) {
    if (a.size() != b.size())
        throw ContractError("paired bootstrap needs equal sample sizes");
    if (resamples < 2)
        throw ContractError("bootstrap needs at least two resamples");
    std::size_t n = a.size();
    std::vector<double> ra(n);
    std::vector<double> rb(n);
    RunningStats acc;
    Philox rng(seed, 0xB007);
    for (int r = 0; r < resamples; ++r) {
        for (std::size_t i = 0; i < n; ++i) {
            auto k = static_cast<std::size_t>(rng() % n);
            ra[i] = a[k];
            rb[i] = b[k];
        }
        std::sort(ra.begin(), ra.end());
        std::sort(rb.begin(), rb.end());
        acc.add(wasserstein1_sorted(ra, rb));
    }
    // Resampling duplicates bias W1 upwards, so the band is centred on the
    // observed distance and only borrows the bootstrap spread.
    double centre = wasserstein1(a, b);
    double half = normal_quantile(0.5 + level / 2) * std::sqrt(acc.variance());
    return {std::max(0.0, centre - half), centre + half};
}

namespace {

double kolmogorov_sf(double x) {
    if (x < 0.2)
        return 1;
    double sum = 0;
    for (int k = 1; k <= 100; ++k) {
        double term = std::exp(-2.0 * k * k * x * x);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-16)
            break;
    }
    return std::clamp(2 * sum, 0.0, 1.0);
}

} // namespace

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
    std::vector<double> sa(a.begin(), a.end());
    std::vector<double> sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    double na = static_cast<double>(sa.size());
    double nb = static_cast<double>(sb.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0;
    while (i < sa.size() && j < sb.size()) {
        double x = std::min(sa[i], sb[j]);
        while (i < sa.size() && sa[i] == x)
            ++i;
        while (j < sb.size() && sb[j] == x)
            ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    double ne = na * nb / (na + nb);
    double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
    return {d, kolmogorov_sf(lambda)};
}

Band wilson_interval(std::int64_t k, std::int64_t n, double z) {
    if (n <= 0)
        return {0, 1};
    double nn = static_cast<double>(n);
    double p = static_cast<double>(k) / nn;
    double z2 = z * z;
    double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
    double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

bool decreasing_within_bands(std::span<const double> values, std::span<const Band> bands,
                             double floor) {
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] <= floor && values[i - 1] <= floor)
            continue;
        if (!(values[i] < values[i - 1]))
            return false;
        if (bands[i].lo > bands[i - 1].hi)
            return false;
    }
    return true;
}

double correlation(std::span<const double> a, std::span<const double> b) {
    std::size_t n = std::min(a.size(), b.size());
    double ma = std::accumulate(a.begin(), a.begin() + n, 0.0) / n;
    double mb = std::accumulate(b.begin(), b.begin() + n, 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

} // namespace jumplim
