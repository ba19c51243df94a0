#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "jumpdiff.hpp"
#include "levy.hpp"
#include "stats.hpp"
#include "testfn.hpp"

namespace jumplim {

/*!
 * Selection function p(z, w): probability that an offspring picks type 1
 * when the type-1 fraction is z and the environment is w, with p(z, 0) = z.
 */
class SelectionFn {
  public:
    //! z (1 + w) / (1 + z w).
    static SelectionFn example();
    //! z + z (1 - z) tanh(w).
    static SelectionFn tanh_form();
    static SelectionFn custom(std::function<double(double, double)> p,
                              std::function<double(double)> p_w,
                              std::function<double(double)> p_ww, bool monotone,
                              std::string name = "custom");

    double operator()(double z, double w) const { return p_(z, w); }
    //! dp/dw and d2p/dw2 at w = 0.
    double p_w(double z) const { return p_w_(z); }
    double p_ww(double z) const { return p_ww_(z); }
    bool monotone() const noexcept { return monotone_; }
    const std::string& name() const noexcept { return name_; }

  private:
    std::function<double(double, double)> p_;
    std::function<double(double)> p_w_;
    std::function<double(double)> p_ww_;
    bool monotone_ = false;
    std::string name_;
};

struct WFModel {
    std::int64_t N = 100;
    SelectionFn p = SelectionFn::example();
    EnvFamily env = EnvFamily::deterministic(0);
    double z0 = 0.5;

    //! [N z0].
    std::int64_t initial_count() const;
};

//! Clamp a probability within 1e-12 of [0, 1]; larger violations throw.
double checked_probability(double p);

struct WFStep {
    std::int64_t count = 0;
    double env = 0;
};

//! One generation: draw E^N, then Binomial(N, p(z, E^N)).
WFStep wf_step(const WFModel& model, const EnvLaw& law, std::int64_t count, Philox& rng);
WFStep wf_step(const WFModel& model, std::int64_t count, Philox& rng);
//! One generation with a given environment value.
std::int64_t wf_reproduce(const WFModel& model, std::int64_t count, double env, Philox& rng);

struct WFPath {
    std::vector<double> t;
    std::vector<double> z;
    std::vector<double> s; //!< environment random walk
};

/*!
 * Chain (Z_[Nt]/N, S_[Nt]) on [0, T], recorded at the grid times (every
 * generation when the grid is empty). Environment and reproduction use
 * separate sub-streams; `env_record`, if given, receives every E^N drawn.
 */
WFPath simulate_wf(const WFModel& model, double T, std::span<const double> grid, Philox& rng,
                   std::vector<double>* env_record = nullptr);
//! Replays a recorded environment sequence with the reproduction stream of `rng`.
WFPath replay_wf(const WFModel& model, double T, std::span<const double> grid,
                 std::span<const double> env_stream, Philox& rng);

enum class GMode { FullMC, EnvOnly, EnvExact };

//! N (1 - E[exp(-k u - l w) | w]) for the binomial step, exact in reproduction.
double wf_env_only_value(const WFModel& model, double z, const TestFunction& H, double env);

/*!
 * v_N E[H(F_x^N - x)]: FullMC averages N H over M transitions, EnvOnly
 * averages wf_env_only_value over M environment draws, EnvExact integrates
 * it against the exact environment law (stderr 0).
 */
Estimate G_N_wf(double z, const TestFunction& H, const WFModel& model, GMode mode,
                std::int64_t M, Philox& rng);

//! alpha g_w + beta/2 g_ww + int (g - h g_w - h^2/2 g_ww) dnu, for g(0) = 0.
double B_z(const std::function<double(double)>& g, double g_w, double g_ww,
           const LevyTriplet& triplet);

double G_limit_wf(double z, const TestFunction& H, const LevyTriplet& triplet,
                  const SelectionFn& p);

//! Lemma uses beta/2 (sigma^2) on p_ww; PaperLiteral uses sigma/2.
enum class DriftConvention { Lemma, PaperLiteral };

double b1_wf(double z, const LevyTriplet& triplet, const SelectionFn& p,
             DriftConvention convention = DriftConvention::Lemma);
double b1_example(double z, const LevyTriplet& triplet,
                  DriftConvention convention = DriftConvention::Lemma);

/*!
 * Limit SDE for (Z, Y): jumps with |w| >= eps are simulated with amplitude
 * (p(Z, w) - Z, w); smaller ones are folded into the Brownian coefficient.
 * Diffusion columns are (B^D, B^E). Z is absorbed at 0 and 1.
 */
SdeSpec wf_limit_sde_spec(const LevyTriplet& triplet, const SelectionFn& p, double eps = 1e-3,
                          DriftConvention convention = DriftConvention::Lemma);

} // namespace jumplim
