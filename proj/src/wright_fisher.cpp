#include "jumplim/wright_fisher.hpp"

#include <cmath>

#include "jumplim/distributions.hpp"
#include "jumplim/errors.hpp"

namespace jumplim {

SelectionFn SelectionFn::example() {
    return custom([](double z, double w) { return z * (1 + w) / (1 + z * w); },
                  [](double z) { return z * (1 - z); },
                  [](double z) { return -2 * z * z * (1 - z); }, true, "example");
}

SelectionFn SelectionFn::tanh_form() {
    return custom([](double z, double w) { return z + z * (1 - z) * std::tanh(w); },
                  [](double z) { return z * (1 - z); }, [](double) { return 0.0; }, true,
                  "tanh");
}

SelectionFn SelectionFn::custom(std::function<double(double, double)> p,
                                std::function<double(double)> p_w,
                                std::function<double(double)> p_ww, bool monotone,
                                std::string name) {
    SelectionFn s;
    s.p_ = std::move(p);
    s.p_w_ = std::move(p_w);
    s.p_ww_ = std::move(p_ww);
    s.monotone_ = monotone;
    s.name_ = std::move(name);
    return s;
}

std::int64_t WFModel::initial_count() const {
    return static_cast<std::int64_t>(std::floor(static_cast<double>(N) * z0 + 1e-9));
}

double checked_probability(double p) {
    constexpr double slack = 1e-12;
    if (!(p >= -slack && p <= 1 + slack))
        throw ModelContractError("selection probability outside [0, 1]");
    return std::fmin(std::fmax(p, 0.0), 1.0);
}

std::int64_t wf_reproduce(const WFModel& model, std::int64_t count, double env, Philox& rng) {
    double z = static_cast<double>(count) / static_cast<double>(model.N);
    double prob = checked_probability(model.p(z, env));
    return binomial(model.N, prob, rng);
}

WFStep wf_step(const WFModel& model, const EnvLaw& law, std::int64_t count, Philox& rng) {
    WFStep step;
    step.env = model.env.sample(law, rng);
    step.count = wf_reproduce(model, count, step.env, rng);
    return step;
}

WFStep wf_step(const WFModel& model, std::int64_t count, Philox& rng) {
    return wf_step(model, model.env.law(static_cast<double>(model.N)), count, rng);
}

namespace {

std::vector<std::size_t> grid_generations(double n, double T, std::span<const double> grid) {
    auto last = static_cast<std::size_t>(std::floor(n * T + 1e-9));
    std::vector<std::size_t> gens;
    if (grid.empty()) {
        for (std::size_t k = 0; k <= last; ++k)
            gens.push_back(k);
        return gens;
    }
    for (double t : grid) {
        if (t < 0 || t > T + 1e-12)
            throw ContractError("grid time outside [0, T]");
        gens.push_back(static_cast<std::size_t>(std::floor(n * t + 1e-9)));
    }
    return gens;
}

template <class EnvSource>
WFPath run_wf(const WFModel& model, double T, std::span<const double> grid, Philox& repro,
              EnvSource&& next_env) {
    if (!(T > 0))
        throw ContractError("horizon must be positive");
    double n = static_cast<double>(model.N);
    auto gens = grid_generations(n, T, grid);
    std::size_t last = gens.empty() ? 0 : *std::max_element(gens.begin(), gens.end());
    std::vector<double> zs(last + 1);
    std::vector<double> ss(last + 1);
    std::int64_t count = model.initial_count();
    double walk = 0;
    zs[0] = static_cast<double>(count) / n;
    for (std::size_t k = 1; k <= last; ++k) {
        double e = next_env(k - 1);
        count = wf_reproduce(model, count, e, repro);
        walk += e;
        zs[k] = static_cast<double>(count) / n;
        ss[k] = walk;
    }
    WFPath path;
    for (std::size_t i = 0; i < gens.size(); ++i) {
        path.t.push_back(grid.empty() ? static_cast<double>(gens[i]) / n : grid[i]);
        path.z.push_back(zs[gens[i]]);
        path.s.push_back(ss[gens[i]]);
    }
    return path;
}

} // namespace

WFPath simulate_wf(const WFModel& model, double T, std::span<const double> grid, Philox& rng,
                   std::vector<double>* env_record) {
    EnvLaw law = model.env.law(static_cast<double>(model.N));
    Philox env_rng = rng.split(1);
    Philox repro_rng = rng.split(2);
    if (env_record)
        env_record->clear();
    return run_wf(model, T, grid, repro_rng, [&](std::size_t) {
        double e = model.env.sample(law, env_rng);
        if (env_record)
            env_record->push_back(e);
        return e;
    });
}

WFPath replay_wf(const WFModel& model, double T, std::span<const double> grid,
                 std::span<const double> env_stream, Philox& rng) {
    Philox repro_rng = rng.split(2);
    return run_wf(model, T, grid, repro_rng, [&](std::size_t k) {
        if (k >= env_stream.size())
            throw ContractError("recorded environment stream is too short");
        return env_stream[k];
    });
}

double wf_env_only_value(const WFModel& model, double z, const TestFunction& H, double env) {
    if (H.family() != TestFamily::WF)
        throw ContractError("Wright-Fisher characteristics need a WF test function");
    double n = static_cast<double>(model.N);
    double k = H.k();
    double prob = checked_probability(model.p(z, env));
    // log E[exp(-k u)] with u = Z'/N - z, Z' ~ Binomial(N, prob).
    double log_laplace = k * z + n * std::log1p(prob * std::expm1(-k / n));
    return -n * std::expm1(log_laplace - H.ell() * env);
}

Estimate G_N_wf(double z, const TestFunction& H, const WFModel& model, GMode mode,
                std::int64_t M, Philox& rng) {
    if (H.family() != TestFamily::WF)
        throw ContractError("Wright-Fisher characteristics need a WF test function");
    if (H.k() == 0 && H.ell() == 0)
        throw ContractError("H_{0,0} vanishes identically");
    if (!(z >= 0 && z <= 1))
        throw ContractError("z must lie in [0, 1]");
    double n = static_cast<double>(model.N);
    EnvLaw law = model.env.law(n);
    if (mode == GMode::EnvExact) {
        double v = model.env.expectation(law, [&](double e) {
            return wf_env_only_value(model, z, H, e);
        });
        return {v, 0};
    }
    if (M < 1)
        throw ContractError("need at least one replicate");
    RunningStats acc;
    auto count = static_cast<std::int64_t>(std::llround(z * n));
    for (std::int64_t i = 0; i < M; ++i) {
        double e = model.env.sample(law, rng);
        if (mode == GMode::EnvOnly) {
            acc.add(wf_env_only_value(model, z, H, e));
        } else {
            std::int64_t next = binomial(model.N, checked_probability(model.p(z, e)), rng);
            double u = static_cast<double>(next - count) / n;
            acc.add(n * H(u, e));
        }
    }
    return acc.estimate();
}

double B_z(const std::function<double(double)>& g, double g_w, double g_ww,
           const LevyTriplet& triplet) {
    double jumps = triplet.integrate([&](double w) {
        double h = triplet.h(w);
        return g(w) - h * g_w - 0.5 * h * h * g_ww;
    });
    return triplet.alpha * g_w + 0.5 * triplet.beta() * g_ww + jumps;
}

double G_limit_wf(double z, const TestFunction& H, const LevyTriplet& triplet,
                  const SelectionFn& p) {
    if (H.family() != TestFamily::WF)
        throw ContractError("Wright-Fisher generator needs a WF test function");
    double k = H.k();
    double l = H.ell();
    auto A = [&](double w) { return -std::expm1(-k * (p(z, w) - z) - l * w); };
    double a_w = k * p.p_w(z) + l;
    double a_ww = k * p.p_ww(z) - a_w * a_w;
    return B_z(A, a_w, a_ww, triplet) - 0.5 * k * k * z * (1 - z);
}

double b1_wf(double z, const LevyTriplet& triplet, const SelectionFn& p,
             DriftConvention convention) {
    double pw = p.p_w(z);
    double pww = p.p_ww(z);
    double jumps = triplet.integrate([&](double w) { return p(z, w) - z - triplet.h(w) * pw; });
    double second = convention == DriftConvention::Lemma ? triplet.sigma * triplet.sigma
                                                         : triplet.sigma;
    return triplet.alpha * pw + 0.5 * second * pww + jumps;
}

double b1_example(double z, const LevyTriplet& triplet, DriftConvention convention) {
    double zz = z * (1 - z);
    double second = convention == DriftConvention::Lemma ? triplet.sigma * triplet.sigma
                                                         : triplet.sigma;
    double jumps = triplet.integrate([&](double w) {
        return w * zz / (z * w + 1) - triplet.h(w) * zz;
    });
    return triplet.alpha * zz - second * z * z * (1 - z) + jumps;
}

SdeSpec wf_limit_sde_spec(const LevyTriplet& triplet, const SelectionFn& p, double eps,
                          DriftConvention convention) {
    validate(triplet, Support::Environment);
    Region big = Region::abs_at_least(eps);
    double rate = triplet.nu.mass(big);
    double c = triplet.alpha - triplet.integrate([&](double w) { return triplet.h(w); }, big);
    double small = triplet.integrate([](double w) { return w * w; }, Region::abs_below(eps));
    double second = (convention == DriftConvention::Lemma ? triplet.sigma * triplet.sigma
                                                          : triplet.sigma) + small;
    double sd = std::sqrt(triplet.sigma * triplet.sigma + small);

    SdeSpec spec;
    spec.name = "wright-fisher";
    spec.dim = 2;
    spec.discarded_quadratic_mass = small;
    spec.drift = [p, c, second](const State& x) {
        double z = x[0];
        return State{c * p.p_w(z) + 0.5 * second * p.p_ww(z), c, 0, 0};
    };
    spec.diffusion = [p, sd](const State& x) {
        double z = x[0];
        Matrix m{};
        m[0][0] = std::sqrt(std::fmax(z * (1 - z), 0.0));
        m[0][1] = sd * p.p_w(z);
        m[1][1] = sd;
        return m;
    };
    if (rate > 0) {
        JumpSource env;
        env.name = "environment";
        env.intensity = [rate](const State&) { return rate; };
        env.draw = [nu = triplet.nu, big, p](const State& x, Philox& rng) {
            double w = nu.sample(big, rng);
            JumpDraw d;
            d.delta = {p(x[0], w) - x[0], w, 0, 0};
            d.mark = w;
            return d;
        };
        spec.jumps.push_back(std::move(env));
    }
    spec.domain = {CoordinateDomain{0, 1, BoundaryPolicy::Absorb}, CoordinateDomain{}};
    return spec;
}

} // namespace jumplim
