#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "rng.hpp"

namespace jumplim {

struct Estimate {
    double value = 0;
    double stderr_ = 0;
};

//! Welford accumulator; merge() combines partial results in a fixed order.
class RunningStats {
  public:
    void add(double x) noexcept {
        n_ += 1;
        double d = x - mean_;
        mean_ += d / n_;
        m2_ += d * (x - mean_);
    }
    void merge(const RunningStats& o) noexcept;

    double count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept { return n_ > 1 ? m2_ / (n_ - 1) : 0.0; }
    double stderr_() const noexcept { return n_ > 1 ? std::sqrt(variance() / n_) : 0.0; }
    Estimate estimate() const noexcept { return {mean_, stderr_()}; }

  private:
    double n_ = 0;
    double mean_ = 0;
    double m2_ = 0;
};

Estimate mean_estimate(std::span<const double> xs);

//! Exact 1-d Wasserstein-1 distance between two empirical laws.
double wasserstein1(std::span<const double> a, std::span<const double> b);
//! Same for data already sorted ascending.
double wasserstein1_sorted(std::span<const double> a, std::span<const double> b);

struct Band {
    double lo = 0;
    double hi = 0;
};

/*!
 * Bootstrap band for the W1 distance between paired samples: the observed
 * distance +- the normal quantile times the bootstrap standard deviation.
 * Each resample draws indices with replacement and applies them to both
 * samples, so common-random-number pairing is preserved.
 */
Band bootstrap_w1_band(std::span<const double> a, std::span<const double> b, int resamples,
                       std::uint64_t seed, double level = 0.95);

struct KsResult {
    double statistic = 0;
    double p_value = 1;
};

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

//! Wilson score interval for k successes out of n.
Band wilson_interval(std::int64_t k, std::int64_t n, double z = 3.0);

/*!
 * True when the point estimates strictly decrease and no adjacent pair of
 * bands shows a significant increase (later lower end above earlier upper end).
 * Adjacent values both at or below `floor` count as converged.
 */
bool decreasing_within_bands(std::span<const double> values, std::span<const Band> bands,
                             double floor = 0);

//! Sample Pearson correlation.
double correlation(std::span<const double> a, std::span<const double> b);

} // namespace jumplim
