#include "jumplim/jumpdiff.hpp"

#include <cmath>

#include "jumplim/distributions.hpp"
#include "jumplim/errors.hpp"

namespace jumplim {

std::size_t step_count(double T, double dt) {
    if (!(dt > 0))
        throw ContractError("dt must be positive");
    if (!(T >= 0))
        throw ContractError("horizon must be nonnegative");
    if (T == 0)
        return 0;
    return static_cast<std::size_t>(std::max(1.0, std::ceil(T / dt - 1e-9)));
}

Stepper::Stepper(const SdeSpec& spec, const State& x0, bool log_jumps)
    : spec_(&spec), x_(x0), log_jumps_(log_jumps) {
    if (spec.dim == 0 || spec.dim > kMaxDim)
        throw ContractError("SDE dimension must be in 1..4");
    if (spec.domain.size() != spec.dim)
        throw ContractError("domain must list one entry per coordinate");
    for (std::size_t i = 0; i < spec.dim; ++i) {
        const auto& d = spec.domain[i];
        if (!(x0[i] >= d.lo && x0[i] <= d.hi))
            throw ContractError("initial state outside the domain");
    }
    apply_policy();
}

void Stepper::apply_policy() {
    const auto& spec = *spec_;
    for (std::size_t i = 0; i < spec.dim; ++i) {
        if (frozen_[i])
            continue;
        const auto& d = spec.domain[i];
        if (x_[i] > d.cemetery_above) {
            cemetery_ = true;
            explosion_ = t_;
            x_[i] = std::numeric_limits<double>::infinity();
            frozen_.fill(true);
            return;
        }
        double before = x_[i];
        switch (d.policy) {
        case BoundaryPolicy::Free:
            break;
        case BoundaryPolicy::Clamp:
            x_[i] = std::fmin(std::fmax(x_[i], d.lo), d.hi);
            break;
        case BoundaryPolicy::Absorb:
            if (x_[i] <= d.lo) {
                x_[i] = d.lo;
                frozen_[i] = true;
            } else if (x_[i] >= d.hi) {
                x_[i] = d.hi;
                frozen_[i] = true;
            }
            break;
        }
        account_.corrections[i] += x_[i] - before;
    }
}

void Stepper::step(double dt, std::span<const double> xi, Philox& jump_rng) {
    const auto& spec = *spec_;
    if (cemetery_) {
        t_ += dt;
        return;
    }
    const State last = x_;
    State b = spec.drift(x_);
    Matrix s = spec.diffusion(x_);
    std::array<double, 8> rates{};
    if (spec.jumps.size() > rates.size())
        throw ContractError("at most 8 jump sources are supported");
    for (std::size_t k = 0; k < spec.jumps.size(); ++k)
        rates[k] = spec.jumps[k].intensity(x_);

    double root = std::sqrt(dt);
    for (std::size_t i = 0; i < spec.dim; ++i) {
        if (frozen_[i])
            continue;
        double drift = b[i] * dt;
        double diff = 0;
        for (std::size_t j = 0; j < spec.dim; ++j)
            diff += s[i][j] * xi[j];
        diff *= root;
        x_[i] += drift + diff;
        account_.drift[i] += drift;
        account_.diffusion[i] += diff;
    }
    apply_policy();

    for (std::size_t k = 0; k < spec.jumps.size() && !cemetery_; ++k) {
        if (!(rates[k] > 0))
            continue;
        std::int64_t count = poisson(rates[k] * dt, jump_rng);
        for (std::int64_t c = 0; c < count && !cemetery_; ++c) {
            JumpDraw jump = spec.jumps[k].draw(x_, jump_rng);
            JumpRecord rec;
            rec.t = t_ + dt;
            rec.source = static_cast<int>(k);
            rec.mark = jump.mark;
            rec.pre = x_;
            for (std::size_t i = 0; i < spec.dim; ++i) {
                if (frozen_[i])
                    continue;
                x_[i] += jump.delta[i];
                account_.jumps[i] += jump.delta[i];
            }
            apply_policy();
            rec.post = x_;
            if (log_jumps_)
                log_.push_back(rec);
        }
    }
    t_ += dt;
    if (cemetery_ && explosion_)
        explosion_ = t_;
    for (std::size_t i = 0; i < spec.dim; ++i)
        if (!cemetery_ && !std::isfinite(x_[i]))
            throw BlowupError("non-finite state in " + spec.name, last);
}

JumpDiffPath integrate(const SdeSpec& spec, const State& x0, double T, double dt, Philox& rng,
                       const IntegrateOptions& options) {
    std::size_t n = step_count(T, dt);
    double h = n > 0 ? T / static_cast<double>(n) : 0;
    Stepper stepper(spec, x0, options.log_jumps);
    Philox jump_rng = rng.split(7);
    JumpDiffPath path;
    path.t.push_back(0);
    path.x.push_back(stepper.state());
    std::array<double, kMaxDim> xi{};
    std::size_t stride = std::max<std::size_t>(1, options.record_stride);
    for (std::size_t k = 1; k <= n; ++k) {
        for (std::size_t i = 0; i < spec.dim; ++i)
            xi[i] = std_normal(rng);
        stepper.step(h, std::span<const double>(xi.data(), spec.dim), jump_rng);
        if (k % stride == 0 || k == n) {
            path.t.push_back(static_cast<double>(k) * h);
            path.x.push_back(stepper.state());
        }
    }
    path.jumps = std::move(stepper.jump_log());
    path.explosion_time = stepper.explosion_time();
    path.account = stepper.account();
    return path;
}

JumpDiffPath integrate_wf(const SdeSpec& spec, double z0, double T, double dt, Philox& rng,
                          const IntegrateOptions& options) {
    if (spec.dim != 2)
        throw ContractError("Wright-Fisher spec must be two-dimensional");
    return integrate(spec, State{z0, 0, 0, 0}, T, dt, rng, options);
}

JumpDiffPath integrate_bpile(const SdeSpec& spec, double z0, double T, double dt, Philox& rng,
                             const IntegrateOptions& options) {
    if (spec.dim != 2)
        throw ContractError("branching spec must be two-dimensional");
    return integrate(spec, State{z0, 0, 0, 0}, T, dt, rng, options);
}

} // namespace jumplim
