#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jumpdiff.hpp"
#include "levy.hpp"
#include "stats.hpp"
#include "testfn.hpp"
#include "wright_fisher.hpp"

namespace jumplim {

//! Interaction function g acting on the mean reproduction.
class Interaction {
  public:
    enum class Kind { Zero, Poly, Bounded, Custom };

    static Interaction zero();
    //! c z^alpha.
    static Interaction poly(double c, double alpha);
    //! c + b (1 - 1 / (1 + z)).
    static Interaction bounded(double c, double b);
    static Interaction custom(std::function<double(double)> g, std::string name = "custom");

    double operator()(double z) const;
    Kind kind() const noexcept { return kind_; }
    double c() const noexcept { return c_; }
    double alpha() const noexcept { return alpha_; }
    double b() const noexcept { return b_; }
    std::string describe() const;

    //! Throws ConfigError unless e^{-z} z g(z) decays on a test grid.
    void check_decay() const;

  private:
    Kind kind_ = Kind::Zero;
    double c_ = 0;
    double alpha_ = 0;
    double b_ = 0;
    std::function<double(double)> fn_;
    std::string name_;
};

enum class ReproKind { Appendix, CoopGW, LogisticFeller, Custom };

//! Count returned when a generation overflows the integer range.
inline constexpr std::int64_t kCountOverflow = std::numeric_limits<std::int64_t>::max();

/*!
 * Reproduction law L^N(n, e) of one individual when the population has n
 * members and the environment is e.
 */
class ReproLaw {
  public:
    virtual ~ReproLaw() = default;

    virtual ReproKind kind() const = 0;
    virtual std::string name() const = 0;

    virtual std::int64_t sample_one(std::int64_t n, double e, std::int64_t N,
                                    Philox& rng) const = 0;
    //! Total offspring of n individuals (kCountOverflow on overflow).
    virtual std::int64_t sample_sum(std::int64_t n, double e, std::int64_t N, Philox& rng) const;
    //! Same law with the demographic Gaussian fluctuation coupled to xi.
    virtual std::int64_t sample_sum_coupled(std::int64_t n, double e, std::int64_t N, double xi,
                                            Philox& rng) const {
        (void)xi;
        return sample_sum(n, e, N, rng);
    }

    virtual bool has_laplace() const { return false; }
    //! log E[exp(-j (L - 1) / N)].
    virtual double log_laplace(double j, std::int64_t n, double e, std::int64_t N) const;
};

using ReproPtr = std::shared_ptr<const ReproLaw>;

//! Finite pmf on {0, 1, ...}, independent of n and e; {0, 1} gives L == 1.
ReproPtr make_finite_pmf(std::vector<double> pmf);
ReproPtr make_constant_one();

/*!
 * Rare large reproduction events: with probability nu(B)/N^2 an individual
 * gets round(N r) extra offspring with r drawn from nu restricted to B.
 */
struct LargeEvents {
    JumpMeasure nu;

    bool atoms_only() const { return nu.slabs().empty(); }
    //! Sum over n individuals.
    std::int64_t sample_total(std::int64_t n, std::int64_t N, Philox& rng) const;
    //! log E[exp(-j K / N)] for one individual (atoms only).
    double log_laplace(double j, std::int64_t N) const;
};

/*!
 * A^N(n, e) + large events, with A^N two-point on {[m], [m] + 1} of mean
 * m = 1 + g_N(n/N)/N + a/N + e and g_N = g clipped to [-N^(1/3), N^(1/3)].
 */
class AppendixRepro : public ReproLaw {
  public:
    AppendixRepro(Interaction g, double mean_drift, JumpMeasure nu);
    //! Mean drift chosen so the limit demographic triplet is `demo` (sigma must be 0).
    static std::shared_ptr<const AppendixRepro> from_triplet(const LevyTriplet& demo,
                                                             Interaction g);

    ReproKind kind() const override { return ReproKind::Appendix; }
    std::string name() const override { return "appendix"; }
    std::int64_t sample_one(std::int64_t n, double e, std::int64_t N, Philox& rng) const override;
    std::int64_t sample_sum(std::int64_t n, double e, std::int64_t N, Philox& rng) const override;
    bool has_laplace() const override { return big_.atoms_only(); }
    double log_laplace(double j, std::int64_t n, double e, std::int64_t N) const override;

    double g_N(double z, std::int64_t N) const;
    double mean(std::int64_t n, double e, std::int64_t N) const;
    double mean_drift() const noexcept { return drift_; }

  private:
    Interaction g_;
    double drift_;
    LargeEvents big_;
};

/*!
 * Cooperative Galton-Watson law: three-point base law on {0, 1, 2} with
 * P(0) = (sigma^2 - a/N)/2, P(2) = (sigma^2 + a/N)/2, optional large events,
 * plus a Bernoulli extra child with probability min(g(n/N), v_N)/v_N.
 */
class CoopGWRepro : public ReproLaw {
  public:
    CoopGWRepro(double sigma, double mean_drift, JumpMeasure nu, Interaction g);
    static std::shared_ptr<const CoopGWRepro> from_triplet(const LevyTriplet& demo,
                                                           Interaction g);

    ReproKind kind() const override { return ReproKind::CoopGW; }
    std::string name() const override { return "coop_gw"; }
    std::int64_t sample_one(std::int64_t n, double e, std::int64_t N, Philox& rng) const override;
    std::int64_t sample_sum(std::int64_t n, double e, std::int64_t N, Philox& rng) const override;
    bool has_laplace() const override { return big_.atoms_only(); }
    double log_laplace(double j, std::int64_t n, double e, std::int64_t N) const override;

    double cooperation_prob(std::int64_t n, std::int64_t N) const;

  private:
    std::pair<double, double> base(std::int64_t N) const;

    double sigma_;
    double drift_;
    LargeEvents big_;
    Interaction g_;
};

/*!
 * Law on {0, 1, 2}: P(0) = (sigma^2 - e + g_N)/2, P(2) = (sigma^2 + e - g_N)/2
 * with g_N(z) = alpha/N + min(c z / N, 1/sqrt(N)).
 */
class LogisticFellerRepro : public ReproLaw {
  public:
    LogisticFellerRepro(double sigma_D, double alpha_D, double c);

    ReproKind kind() const override { return ReproKind::LogisticFeller; }
    std::string name() const override { return "logistic_feller"; }
    std::int64_t sample_one(std::int64_t n, double e, std::int64_t N, Philox& rng) const override;
    std::int64_t sample_sum(std::int64_t n, double e, std::int64_t N, Philox& rng) const override;
    std::int64_t sample_sum_coupled(std::int64_t n, double e, std::int64_t N, double xi,
                                    Philox& rng) const override;
    bool has_laplace() const override { return true; }
    double log_laplace(double j, std::int64_t n, double e, std::int64_t N) const override;

    double g_N(double z, std::int64_t N) const;
    //! (P(L = 0), P(L = 2)); throws ModelContractError outside [0, 1].
    std::pair<double, double> probs(std::int64_t n, double e, std::int64_t N) const;

    double sigma_D() const noexcept { return sigma_; }
    double alpha_D() const noexcept { return alpha_; }
    double c() const noexcept { return c_; }
    //! Demographic triplet and interaction the chain converges to.
    LevyTriplet limit_demo() const;
    Interaction limit_g() const;

  private:
    double sigma_;
    double alpha_;
    double c_;
};

struct BPModel {
    std::int64_t N = 100;
    ReproPtr repro = make_constant_one();
    EnvFamily env = EnvFamily::deterministic(0);
    LevyTriplet demo;          //!< limiting demographic triplet
    Interaction g;             //!< limiting interaction
    double z0 = 1;
    double z_max = 1e6;

    double v() const;
    std::int64_t initial_count() const;
    BPModel with_N(std::int64_t n) const;
};

struct BPStep {
    std::int64_t count = 0;
    double env = 0;
    bool exploded = false;
};

BPStep bp_step(const BPModel& model, const EnvLaw& law, std::int64_t count, Philox& rng);
BPStep bp_step(const BPModel& model, std::int64_t count, Philox& rng);

struct BPPath {
    std::vector<double> t;
    std::vector<double> z; //!< +inf after explosion
    std::vector<double> s;
    std::optional<double> explosion_time;
};

//! (Z_[v t]/N, S_[v t]) on [0, T] at the grid times (every generation if empty).
BPPath simulate_bp(const BPModel& model, double T, std::span<const double> grid, Philox& rng);

//! E[exp(-k (L - 1)/N)]^[Nz] - 1; inner expectation by M draws without a Laplace evaluator.
double P_k_N(double z, double w, int k, const BPModel& model, Philox* rng = nullptr,
             std::int64_t M = 10000);

/*!
 * A^N_{j,l}(z) = v_N E[P_j^N(z, E^N) e^{-l E^N}]. EnvExact integrates the
 * environment law exactly (needs a Laplace evaluator); EnvOnly averages M
 * environment draws, using one offspring draw per environment when the law
 * has no evaluator.
 */
Estimate A_N_jl(double z, int j, double ell, const BPModel& model, GMode mode, std::int64_t M,
                Philox& rng);

struct CsbpEstimate {
    Estimate est;
    bool cancellation = false; //!< k >= 8 with relative stderr above 10%
};

//! Characteristic of H in the compactified coordinate, assembled from A^N_{j,l}
//! with common environment draws across j.
CsbpEstimate G_N_csbp(double z, const TestFunction& H, const BPModel& model, GMode mode,
                      std::int64_t M, Philox& rng);
//! v_N E[H(e^{-Z'/N} - e^{-z}, E)] by direct simulation of M transitions.
Estimate G_N_csbp_direct(double z, const TestFunction& H, const BPModel& model, std::int64_t M,
                         Philox& rng);

double A2_target(double z, int j, double ell, const LevyTriplet& env, const LevyTriplet& demo,
                 const Interaction& g);

//! Closed-form limiting characteristic.
double G_limit_csbp(double z, const TestFunction& H, const LevyTriplet& env,
                    const LevyTriplet& demo, const Interaction& g);
//! Same by the alternating sum of A2 targets.
double G_limit_csbp_assembled(double z, const TestFunction& H, const LevyTriplet& env,
                              const LevyTriplet& demo, const Interaction& g);

struct ResidualConfig {
    int j = 1;
    double ell = 0;
    int k = 1;
};

struct ResidualRow {
    double N = 0;
    int j = 0;
    double ell = 0;
    int k = 0;
    double z = 0;
    double estimate = 0;
    double stderr_ = 0;
    double target = 0;
    double residual = 0; //!< e^{-kz} |estimate - target|
};

struct ResidualSummary {
    ResidualConfig config;
    std::vector<double> N;
    std::vector<double> sup_residual;
    std::vector<Band> bands;
    bool decreasing = false;
};

struct ResidualReport {
    std::vector<ResidualRow> rows;
    std::vector<ResidualSummary> summaries;
    bool passed() const;
};

//! Grid points rounded to the lattice N^-1 Z.
double lattice_z(double z, std::int64_t N);

/*!
 * sup over the z grid of e^{-kz} |A^N_{j,l}(z) - target| for every
 * configuration and N, with a 3-stderr band and a decreasing-in-N flag.
 */
ResidualReport check_A2(const BPModel& model, std::span<const ResidualConfig> configs,
                        std::span<const double> z_grid, std::span<const std::int64_t> N_list,
                        GMode mode = GMode::EnvExact, std::int64_t M = 0,
                        std::uint64_t seed = 1);

//! v_N (E[exp(-j (L(Nz) - 1)/N)]^{Nz} - 1) for the cooperative law.
double C_j_N(double z, int j, const BPModel& model);
ResidualReport check_coop_expansion(const BPModel& model, std::span<const ResidualConfig> configs,
                                    std::span<const double> z_grid,
                                    std::span<const std::int64_t> N_list);

/*!
 * Compactified pair form (X1 = e^{-Z}, Y). Jumps above eps are simulated,
 * smaller ones move into the Brownian coefficients. X1 = 0 uses the
 * boundary row: no population motion, environment unchanged.
 */
SdeSpec bpile_sde_spec(const LevyTriplet& env, const LevyTriplet& demo, const Interaction& g,
                       double eps = 1e-3);

/*!
 * Z form (Z, Y): drift Z (alpha_D + g(Z)) plus Z dY, demographic noise
 * sigma_D sqrt(Z) dB^D, demographic jumps r at rate Z nu_D, environment
 * jumps (Z w, w). Diffusion columns are (B^D, B^E); Z above z_max is the cemetery.
 */
SdeSpec bpile_z_spec(const LevyTriplet& env, const LevyTriplet& demo, const Interaction& g,
                     double eps = 1e-3, double z_max = 1e6);

//! dZ = (alpha_D Z - c Z^2) dt + sigma_E Z dB^E + sigma_D sqrt(Z) dB^D, dY = sigma_E dB^E.
SdeSpec logistic_feller_sde_spec(double alpha_D, double sigma_D, double sigma_E, double c,
                                 double z_max = 1e6);

} // namespace jumplim
