#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "jumplim/harness/config.hpp"
#include "jumplim/harness/report.hpp"

namespace jumplim {

struct Flag {
    std::string name;
    bool passed = false;
};

struct ExperimentResult {
    std::string experiment;
    std::vector<Table> tables;
    std::vector<std::pair<std::string, std::string>> svgs; //!< file name, content
    std::vector<Flag> flags;

    bool passed() const;
    const Table& table(const std::string& file) const;
    Table flag_table() const;
};

//! Writes every table, the flags table and (optionally) the SVG files.
void write_result(const ExperimentResult& r, const std::filesystem::path& dir, bool svg);

//! Grid-sup residuals of the characteristics against the limit, per test and N.
ExperimentResult run_characteristic_convergence(const Scenario& sc, unsigned threads = 1);
//! sup_z v_N P(|increment| > b) per b and N, sharing draws across b.
ExperimentResult run_h0_check(const Scenario& sc, unsigned threads = 1);
//! sup_{t <= T} |phi^N_t(H) - int_0^t G_{X^N}(H) ds| along simulated paths.
ExperimentResult run_increment_functional(const Scenario& sc, unsigned threads = 1);
//! W1 between the chain marginal and the limit SDE marginal at each grid time.
ExperimentResult run_law_convergence(const Scenario& sc, unsigned threads = 1);
//! Explosion fractions by the horizon, chain against the SDE integrator.
ExperimentResult run_explosion_study(const Scenario& sc, unsigned threads = 1);
//! Chain paths at scenario N; with `limit`, SDE paths and their jump log too.
ExperimentResult run_simulate(const Scenario& sc, unsigned threads = 1, bool limit = false);

//! Marginals at the grid times of M paths of the chain and of its Euler
//! scheme at dt = 1/v_N, both driven by the same Gaussian variables.
struct CoupledMarginals {
    std::vector<std::vector<double>> chain; //!< [time][path], state coordinate
    std::vector<std::vector<double>> sde;
    std::vector<std::vector<double>> chain_env;
    std::vector<std::vector<double>> sde_env;
    std::int64_t chain_explosions = 0;
    std::int64_t sde_explosions = 0;
};

CoupledMarginals coupled_marginals(const Scenario& sc, std::int64_t N, std::int64_t M,
                                   std::uint64_t stream, unsigned threads = 1);

//! Marginals of M independent Euler paths at step dt.
std::vector<std::vector<double>> sde_marginals(const Scenario& sc, double dt, std::int64_t M,
                                               std::uint64_t stream, unsigned threads = 1);

//! Compactified coordinate e^{-z} (0 for the cemetery).
inline double compactify(double z) {
    return z == std::numeric_limits<double>::infinity() ? 0.0 : std::exp(-z);
}

//! Point estimates non-increasing up to band overlap.
bool nonincreasing_within_bands(std::span<const double> values, std::span<const Band> bands);

} // namespace jumplim
