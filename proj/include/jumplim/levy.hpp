#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rng.hpp"

namespace jumplim {

enum class TruncationKind { Clamp, Smooth };

/*!
 * Bounded truncation function equal to the identity on [-radius, radius].
 *
 * Clamp: max(min(w, bound), -bound), radius == bound.
 * Smooth: identity inside the radius, then a tanh approach to +-bound.
 */
class TruncationFn {
  public:
    static TruncationFn clamp(double bound = 1.0);
    static TruncationFn smooth(double radius, double bound);

    double operator()(double w) const noexcept;
    TruncationKind kind() const noexcept { return kind_; }
    double radius() const noexcept { return radius_; }
    double bound() const noexcept { return bound_; }

  private:
    TruncationFn(TruncationKind kind, double radius, double bound)
        : kind_(kind), radius_(radius), bound_(bound) {}

    TruncationKind kind_;
    double radius_;
    double bound_;
};

enum class SlabFamily { Uniform, Power, Exponential };

//! Finite-mass density component with closed-form CDF and quantile.
struct Slab {
    SlabFamily family = SlabFamily::Uniform;
    double lo = 0;
    double hi = 1;
    //! Power: density proportional to w^(-1-param); Exponential: e^(-param w).
    double param = 0;
    double mass = 0;

    double cdf(double w) const;
    double quantile(double t) const;
    std::string describe() const;
};

struct Atom {
    double w = 0;
    double mass = 0;
};

enum class Support { Environment, Demographic };

//! Which part of the real line an integral or draw is restricted to.
struct Region {
    enum Kind { All, AbsAtLeast, AbsBelow } kind = All;
    double eps = 0;

    static Region all() { return {}; }
    static Region abs_at_least(double eps) { return {AbsAtLeast, eps}; }
    static Region abs_below(double eps) { return {AbsBelow, eps}; }
    bool contains(double w) const;
};

class JumpMeasure {
  public:
    JumpMeasure& add_atom(double w, double mass);
    JumpMeasure& add_slab(const Slab& slab);

    const std::vector<Atom>& atoms() const noexcept { return atoms_; }
    const std::vector<Slab>& slabs() const noexcept { return slabs_; }
    bool empty() const noexcept { return atoms_.empty() && slabs_.empty(); }

    double mass(Region region = Region::all()) const;

    //! Integral of f over the region; kinks are points where f is not smooth.
    double integrate(const std::function<double(double)>& f, Region region = Region::all(),
                     std::span<const double> kinks = {}) const;

    //! Draw from the normalized restriction to the region (requires positive mass).
    double sample(Region region, Philox& rng) const;

    //! Throws ConfigError if a component leaves the support or has bad parameters.
    void validate(Support support) const;

  private:
    std::vector<Atom> atoms_;
    std::vector<Slab> slabs_;
};

struct LevyTriplet {
    double alpha = 0;
    double sigma = 0;
    JumpMeasure nu;
    TruncationFn h = TruncationFn::clamp(1.0);

    //! sigma^2 + integral of h^2.
    double beta() const;
    //! Integral of f against nu, with the truncation kinks declared.
    double integrate(const std::function<double(double)>& f,
                     Region region = Region::all()) const;
};

void validate(const LevyTriplet& triplet, Support support);

//! alpha z - sigma^2 z^2 / 2 + int (1 - e^{-zw} - z h(w)) nu(dw).
double gamma_levy(double z, const LevyTriplet& triplet);
double gamma_E(double z, const LevyTriplet& triplet);
double gamma_D(double z, const LevyTriplet& triplet);

//! N -> v_N, either N itself or scale * N^exponent.
struct VRule {
    double scale = 1;
    double exponent = 1;
    bool identity() const { return scale == 1 && exponent == 1; }
    double operator()(double n) const;
};

//! Law of a single environment draw E^N at fixed N.
struct EnvLaw {
    double n = 0;
    double v = 0;
    double eps = 0;
    double jump_mass = 0; //!< nu(|w| >= eps)
    double jump_prob = 0; //!< probability of drawing a jump
    double c = 0;         //!< diffusive part is c/v + s zeta / sqrt(v)
    double s = 0;
    double zeta_lo = 0;   //!< zeta range after truncation and the > -1 guard
    double zeta_hi = 0;
    bool deterministic = false;
    double constant = 0;  //!< value when deterministic
};

/*!
 * Per-N sampler of environment variables whose rescaled law approaches a
 * target triplet: with probability nu(|w|>=eps_N)/v_N a jump from the
 * restricted measure, otherwise a truncated Gaussian carrying the remaining
 * drift and the small-jump variance. eps_N = v_N^(-1/4).
 */
class EnvFamily {
  public:
    static EnvFamily constructed(LevyTriplet target, VRule v = {});
    //! E^N = s / v_N.
    static EnvFamily deterministic(double s, VRule v = {},
                                   TruncationFn h = TruncationFn::clamp(1.0));

    const LevyTriplet& target() const noexcept { return target_; }
    const VRule& v_rule() const noexcept { return v_; }
    bool is_deterministic() const noexcept { return deterministic_; }
    double shift() const noexcept { return shift_; }

    EnvLaw law(double n) const;

    double sample(const EnvLaw& law, Philox& rng) const;
    //! Same law; the Gaussian part reuses xi when it falls in the truncation range.
    double sample_coupled(const EnvLaw& law, double xi, Philox& rng) const;
    double sample(double n, Philox& rng) const { return sample(law(n), rng); }

    //! E[f(E^N)] by exact summation over atoms and quadrature elsewhere.
    double expectation(const EnvLaw& law, const std::function<double(double)>& f) const;

    //! Smallest and largest attainable value (largest may be +inf).
    std::pair<double, double> range(const EnvLaw& law) const;

  private:
    LevyTriplet target_;
    VRule v_;
    bool deterministic_ = false;
    double shift_ = 0;
};

struct MomentFn {
    std::string name;
    std::function<double(double)> f;
    double target = 0;
};

//! Indicator of [a, b] (0 outside it) with target nu([a, b]).
MomentFn indicator_moment(const JumpMeasure& nu, double a, double b);

struct MomentRow {
    double n = 0;
    std::string moment;
    double estimate = 0;
    double stderr_ = 0;
    double target = 0;
    double exact = 0; //!< v_N E[f] from the exact law, no Monte Carlo
    bool inside_band = false;
};

struct AssumptionAReport {
    std::vector<MomentRow> rows;
    bool inside_bands = true;
    bool errors_shrink = true;
    bool warning = false;
    bool passed() const { return inside_bands && errors_shrink; }
};

/*!
 * Monte-Carlo estimates of v_N E[h], v_N E[h^2] and v_N E[f_i] against the
 * triplet targets (alpha, beta, int f_i dnu) for each N.
 * Draws are split into fixed chunks with their own streams, so the result
 * does not depend on `threads`.
 */
AssumptionAReport check_assumption_A(const EnvFamily& family, std::span<const double> n_list,
                                     std::int64_t replicates, std::span<const MomentFn> fs,
                                     std::uint64_t seed, unsigned threads = 1);

struct LevyPath {
    std::vector<double> t;
    std::vector<double> y;
    std::vector<double> jump_times;
    std::vector<double> jump_sizes;
    double discarded_quadratic_mass = 0; //!< int_{|w|<=eps} w^2 nu(dw)
};

//! Exact-in-law path of the Levy process after folding jumps <= eps into the
//! Gaussian part; larger jumps form a compound Poisson process.
LevyPath sample_levy_path(const LevyTriplet& triplet, std::span<const double> t_grid,
                          Philox& rng, double eps = 1e-3);

} // namespace jumplim
