#pragma once

#include <array>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"

namespace jumplim {

inline constexpr std::size_t kMaxDim = 4;
using State = std::array<double, kMaxDim>;
using Matrix = std::array<std::array<double, kMaxDim>, kMaxDim>;

enum class BoundaryPolicy { Free, Clamp, Absorb };

struct CoordinateDomain {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    BoundaryPolicy policy = BoundaryPolicy::Free;
    //! Entering (threshold, inf] sends the whole state to the cemetery.
    double cemetery_above = std::numeric_limits<double>::infinity();
};

struct JumpDraw {
    State delta{};
    double mark = 0;
};

struct JumpSource {
    std::string name;
    std::function<double(const State&)> intensity;
    std::function<JumpDraw(const State&, Philox&)> draw;
    //! Whether the drift already carries this source's compensator.
    bool compensated_in_drift = true;
};

struct SdeSpec {
    std::string name;
    std::size_t dim = 1;
    std::function<State(const State&)> drift;
    std::function<Matrix(const State&)> diffusion; //!< dim x dim
    std::vector<JumpSource> jumps;
    std::vector<CoordinateDomain> domain;
    //! Quadratic jump mass moved into the diffusion by the small-jump cutoff.
    double discarded_quadratic_mass = 0;
};

struct JumpRecord {
    double t = 0;
    int source = 0;
    double mark = 0;
    State pre{};
    State post{};
};

//! Per-coordinate sums of every increment applied to the state.
struct Accounting {
    State drift{};
    State diffusion{};
    State jumps{};
    State corrections{}; //!< changes made by clamping or absorption
};

struct JumpDiffPath {
    std::vector<double> t;
    std::vector<State> x;
    std::vector<JumpRecord> jumps;
    std::optional<double> explosion_time;
    Accounting account;
};

class BlowupError : public std::runtime_error {
  public:
    BlowupError(const std::string& what, State last) : std::runtime_error(what), last_(last) {}
    const State& last_valid() const noexcept { return last_; }

  private:
    State last_;
};

struct IntegrateOptions {
    std::size_t record_stride = 1; //!< record every this many steps (and at T)
    bool log_jumps = true;
};

/*!
 * Euler-Maruyama stepper with frozen-intensity Poisson jumps.
 *
 * Each step applies drift and diffusion, the domain policy, then the jumps
 * of every source one by one with the policy after each. Absorbed
 * coordinates stop moving; the cemetery freezes the whole state.
 */
class Stepper {
  public:
    Stepper(const SdeSpec& spec, const State& x0, bool log_jumps = false);

    //! Advance by dt with the given standard normals (spec.dim of them).
    void step(double dt, std::span<const double> xi, Philox& jump_rng);

    const State& state() const noexcept { return x_; }
    double time() const noexcept { return t_; }
    bool in_cemetery() const noexcept { return cemetery_; }
    std::optional<double> explosion_time() const noexcept { return explosion_; }
    const Accounting& account() const noexcept { return account_; }
    std::vector<JumpRecord>& jump_log() noexcept { return log_; }

  private:
    void apply_policy();

    const SdeSpec* spec_;
    State x_;
    double t_ = 0;
    std::array<bool, kMaxDim> frozen_{};
    bool cemetery_ = false;
    std::optional<double> explosion_;
    Accounting account_;
    bool log_jumps_;
    std::vector<JumpRecord> log_;
};

//! Integrate on [0, T] with ceil(T/dt) equal steps.
JumpDiffPath integrate(const SdeSpec& spec, const State& x0, double T, double dt, Philox& rng,
                       const IntegrateOptions& options = {});

//! Path for a Wright-Fisher limit spec started at (z0, 0).
JumpDiffPath integrate_wf(const SdeSpec& spec, double z0, double T, double dt, Philox& rng,
                          const IntegrateOptions& options = {});
//! Path for a branching Z-form spec started at (z0, 0).
JumpDiffPath integrate_bpile(const SdeSpec& spec, double z0, double T, double dt, Philox& rng,
                             const IntegrateOptions& options = {});

//! Number of Euler steps used for horizon T and nominal step dt.
std::size_t step_count(double T, double dt);

} // namespace jumplim
