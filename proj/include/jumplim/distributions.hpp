#pragma once

#include <cstdint>

#include "rng.hpp"

namespace jumplim {

double std_normal(Philox& rng);
double exponential(Philox& rng);
std::int64_t poisson(double mean, Philox& rng);
//! Exact binomial draw; n may exceed 2^31.
std::int64_t binomial(std::int64_t n, double p, Philox& rng);

double normal_cdf(double x);
//! Upper tail 1 - Phi(x), accurate for large x.
double normal_sf(double x);
double normal_quantile(double p);

//! Standard normal conditioned on [lo, hi], by inversion.
double truncated_normal(double lo, double hi, Philox& rng);
//! Same law, reusing `xi` (a standard normal) when it falls inside [lo, hi].
double truncated_normal_coupled(double lo, double hi, double xi, Philox& rng);

double stirling_error(double n);
double log_factorial(std::int64_t k);
double binomial_pmf(std::int64_t k, std::int64_t n, double p);

/*!
 * Binomial(n, p) draw as the quantile transform of normal_cdf(xi), where xi is
 * a standard normal supplied by the caller. The law of k is exactly binomial
 * and |k - np - sqrt(np(1-p)) xi| stays O(1 + xi^2), so the pair drives a
 * discrete chain and its Gaussian approximation in lockstep.
 */
std::int64_t binomial_coupled(std::int64_t n, double p, double xi);

} // namespace jumplim
