#include "jumplim/branching.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "jumplim/distributions.hpp"
#include "jumplim/errors.hpp"

namespace jumplim {

namespace {

constexpr double kProbSlack = 1e-12;
constexpr double kCountLimit = 9.0e18;
// Residuals at or below this size count as converged.
constexpr double kResidualFloor = 1e-12;

double clip_probability(double p, const char* what) {
    if (!(p >= -kProbSlack && p <= 1 + kProbSlack))
        throw ModelContractError(std::string(what) + " outside [0, 1]");
    return std::clamp(p, 0.0, 1.0);
}

std::int64_t lattice_count(double z, std::int64_t N) {
    if (!(z >= 0))
        throw ContractError("z must be nonnegative");
    return std::llround(z * static_cast<double>(N));
}

} // namespace

// ---------------------------------------------------------------------------
// Interaction

Interaction Interaction::zero() {
    return {};
}

Interaction Interaction::poly(double c, double alpha) {
    if (!(alpha >= 0))
        throw ConfigError("polynomial interaction exponent must be nonnegative");
    Interaction g;
    g.kind_ = Kind::Poly;
    g.c_ = c;
    g.alpha_ = alpha;
    return g;
}

Interaction Interaction::bounded(double c, double b) {
    Interaction g;
    g.kind_ = Kind::Bounded;
    g.c_ = c;
    g.b_ = b;
    return g;
}

Interaction Interaction::custom(std::function<double(double)> fn, std::string name) {
    Interaction g;
    g.kind_ = Kind::Custom;
    g.fn_ = std::move(fn);
    g.name_ = std::move(name);
    return g;
}

double Interaction::operator()(double z) const {
    switch (kind_) {
    case Kind::Zero:
        return 0;
    case Kind::Poly:
        return alpha_ == 0 ? c_ : c_ * std::pow(z, alpha_);
    case Kind::Bounded:
        return c_ + b_ * z / (1 + z);
    case Kind::Custom:
        return fn_(z);
    }
    return 0;
}

std::string Interaction::describe() const {
    std::ostringstream os;
    switch (kind_) {
    case Kind::Zero:
        os << "0";
        break;
    case Kind::Poly:
        os << c_ << " z^" << alpha_;
        break;
    case Kind::Bounded:
        os << c_ << " + " << b_ << " z/(1+z)";
        break;
    case Kind::Custom:
        os << name_;
        break;
    }
    return os.str();
}

void Interaction::check_decay() const {
    double prev = std::numeric_limits<double>::infinity();
    for (double z : {25.0, 50.0, 100.0, 200.0, 400.0}) {
        double q = std::fabs(std::exp(-z) * z * (*this)(z));
        if (!std::isfinite(q) || q > prev * (1 + 1e-12) + 1e-300)
            throw ConfigError("interaction violates e^{-z} z g(z) -> 0");
        prev = q;
    }
    if (prev > 1e-6)
        throw ConfigError("interaction violates e^{-z} z g(z) -> 0");
}

// ---------------------------------------------------------------------------
// Reproduction laws

std::int64_t ReproLaw::sample_sum(std::int64_t n, double e, std::int64_t N, Philox& rng) const {
    double total = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        total += static_cast<double>(sample_one(n, e, N, rng));
        if (total > kCountLimit)
            return kCountOverflow;
    }
    return static_cast<std::int64_t>(total);
}

double ReproLaw::log_laplace(double, std::int64_t, double, std::int64_t) const {
    throw ContractError("reproduction law " + name() + " has no Laplace evaluator");
}

namespace {

class FinitePmfRepro : public ReproLaw {
  public:
    explicit FinitePmfRepro(std::vector<double> pmf) : pmf_(std::move(pmf)) {
        double s = 0;
        for (double p : pmf_) {
            if (!(p >= 0))
                throw ConfigError("reproduction pmf entries must be nonnegative");
            s += p;
        }
        if (pmf_.empty() || std::fabs(s - 1) > 1e-9)
            throw ConfigError("reproduction pmf must sum to 1");
        for (double& p : pmf_)
            p /= s;
    }

    ReproKind kind() const override { return ReproKind::Custom; }
    std::string name() const override { return "custom"; }

    std::int64_t sample_one(std::int64_t, double, std::int64_t, Philox& rng) const override {
        double u = rng.uniform();
        for (std::size_t k = 0; k + 1 < pmf_.size(); ++k) {
            if (u < pmf_[k])
                return static_cast<std::int64_t>(k);
            u -= pmf_[k];
        }
        return static_cast<std::int64_t>(pmf_.size() - 1);
    }

    std::int64_t sample_sum(std::int64_t n, double, std::int64_t, Philox& rng) const override {
        // Multinomial split by sequential binomials.
        double total = 0;
        std::int64_t left = n;
        double mass = 1;
        for (std::size_t k = 0; k < pmf_.size() && left > 0; ++k) {
            std::int64_t c = k + 1 == pmf_.size()
                                 ? left
                                 : binomial(left, std::clamp(pmf_[k] / mass, 0.0, 1.0), rng);
            total += static_cast<double>(c) * static_cast<double>(k);
            left -= c;
            mass -= pmf_[k];
        }
        if (total > kCountLimit)
            return kCountOverflow;
        return static_cast<std::int64_t>(total);
    }

    bool has_laplace() const override { return true; }

    double log_laplace(double j, std::int64_t, double, std::int64_t N) const override {
        double s = 0;
        double n = static_cast<double>(N);
        for (std::size_t k = 0; k < pmf_.size(); ++k)
            s += pmf_[k] * std::expm1(-j * (static_cast<double>(k) - 1) / n);
        return std::log1p(s);
    }

  private:
    std::vector<double> pmf_;
};

} // namespace

ReproPtr make_finite_pmf(std::vector<double> pmf) {
    return std::make_shared<FinitePmfRepro>(std::move(pmf));
}

ReproPtr make_constant_one() {
    return make_finite_pmf({0.0, 1.0});
}

std::int64_t LargeEvents::sample_total(std::int64_t n, std::int64_t N, Philox& rng) const {
    double lambda = nu.mass();
    if (lambda == 0 || n == 0)
        return 0;
    double nn = static_cast<double>(N);
    double p = lambda / (nn * nn);
    if (p > 1)
        throw ModelContractError("large-event probability exceeds 1; increase N");
    std::int64_t count = binomial(n, p, rng);
    double total = 0;
    if (atoms_only()) {
        double mass = lambda;
        std::int64_t left = count;
        const auto& atoms = nu.atoms();
        for (std::size_t i = 0; i < atoms.size() && left > 0; ++i) {
            std::int64_t c = i + 1 == atoms.size()
                                 ? left
                                 : binomial(left, std::clamp(atoms[i].mass / mass, 0.0, 1.0), rng);
            total += static_cast<double>(c) * std::round(nn * atoms[i].w);
            left -= c;
            mass -= atoms[i].mass;
        }
    } else {
        for (std::int64_t i = 0; i < count; ++i)
            total += std::round(nn * nu.sample(Region::all(), rng));
    }
    if (total > kCountLimit)
        return kCountOverflow;
    return static_cast<std::int64_t>(total);
}

double LargeEvents::log_laplace(double j, std::int64_t N) const {
    if (!atoms_only())
        throw ContractError("large-event Laplace transform needs an atomic measure");
    double nn = static_cast<double>(N);
    double s = 0;
    for (const Atom& a : nu.atoms())
        s += a.mass / (nn * nn) * -std::expm1(-j * std::round(nn * a.w) / nn);
    return std::log1p(-s);
}

// Appendix construction ------------------------------------------------------

AppendixRepro::AppendixRepro(Interaction g, double mean_drift, JumpMeasure nu)
    : g_(std::move(g)), drift_(mean_drift), big_{std::move(nu)} {
    big_.nu.validate(Support::Demographic);
}

std::shared_ptr<const AppendixRepro> AppendixRepro::from_triplet(const LevyTriplet& demo,
                                                                 Interaction g) {
    validate(demo, Support::Demographic);
    if (demo.sigma != 0)
        throw ConfigError("the appendix construction needs sigma_D = 0", "/demo/sigma");
    double compensator = demo.integrate([&](double r) { return demo.h(r); });
    return std::make_shared<AppendixRepro>(std::move(g), demo.alpha - compensator, demo.nu);
}

double AppendixRepro::g_N(double z, std::int64_t N) const {
    double cap = std::cbrt(static_cast<double>(N));
    return std::clamp(g_(z), -cap, cap);
}

double AppendixRepro::mean(std::int64_t n, double e, std::int64_t N) const {
    double nn = static_cast<double>(N);
    double m = 1 + g_N(static_cast<double>(n) / nn, N) / nn + drift_ / nn + e;
    return std::max(m, 0.0);
}

std::int64_t AppendixRepro::sample_one(std::int64_t n, double e, std::int64_t N,
                                       Philox& rng) const {
    double m = mean(n, e, N);
    double fl = std::floor(m);
    std::int64_t a = static_cast<std::int64_t>(fl) + (rng.uniform() < m - fl ? 1 : 0);
    std::int64_t big = big_.sample_total(1, N, rng);
    if (big == kCountOverflow)
        return kCountOverflow;
    return a + big;
}

std::int64_t AppendixRepro::sample_sum(std::int64_t n, double e, std::int64_t N,
                                       Philox& rng) const {
    if (n == 0)
        return 0;
    double m = mean(n, e, N);
    double fl = std::floor(m);
    if (static_cast<double>(n) * (fl + 1) > kCountLimit)
        return kCountOverflow;
    double total = static_cast<double>(n) * fl +
                   static_cast<double>(binomial(n, std::clamp(m - fl, 0.0, 1.0), rng));
    std::int64_t big = big_.sample_total(n, N, rng);
    if (big == kCountOverflow || total + static_cast<double>(big) > kCountLimit)
        return kCountOverflow;
    return static_cast<std::int64_t>(total) + big;
}

double AppendixRepro::log_laplace(double j, std::int64_t n, double e, std::int64_t N) const {
    double nn = static_cast<double>(N);
    double m = mean(n, e, N);
    double fl = std::floor(m);
    double a_part = -j * (fl - 1) / nn + std::log1p((m - fl) * std::expm1(-j / nn));
    return a_part + big_.log_laplace(j, N);
}

// Cooperative Galton-Watson ---------------------------------------------------

CoopGWRepro::CoopGWRepro(double sigma, double mean_drift, JumpMeasure nu, Interaction g)
    : sigma_(sigma), drift_(mean_drift), big_{std::move(nu)}, g_(std::move(g)) {
    if (!(sigma >= 0 && sigma <= 1))
        throw ConfigError("cooperative GW base law needs sigma_D in [0, 1]", "/demo/sigma");
    big_.nu.validate(Support::Demographic);
    for (double z = 0; z <= 50; z += 0.25)
        if (!(g_(z) >= 0))
            throw ConfigError("cooperation function must be nonnegative", "/interaction");
}

std::shared_ptr<const CoopGWRepro> CoopGWRepro::from_triplet(const LevyTriplet& demo,
                                                             Interaction g) {
    validate(demo, Support::Demographic);
    double compensator = demo.integrate([&](double r) { return demo.h(r); });
    return std::make_shared<CoopGWRepro>(demo.sigma, demo.alpha - compensator, demo.nu,
                                         std::move(g));
}

std::pair<double, double> CoopGWRepro::base(std::int64_t N) const {
    double s2 = sigma_ * sigma_;
    double shift = drift_ / static_cast<double>(N);
    return {clip_probability(0.5 * (s2 - shift), "base P(L = 0)"),
            clip_probability(0.5 * (s2 + shift), "base P(L = 2)")};
}

double CoopGWRepro::cooperation_prob(std::int64_t n, std::int64_t N) const {
    double v = static_cast<double>(N);
    double g = g_(static_cast<double>(n) / v);
    return std::min(std::max(g, 0.0), v) / v;
}

std::int64_t CoopGWRepro::sample_one(std::int64_t n, double, std::int64_t N, Philox& rng) const {
    auto [p0, p2] = base(N);
    double u = rng.uniform();
    std::int64_t l = u < p0 ? 0 : (u < p0 + p2 ? 2 : 1);
    l += rng.uniform() < cooperation_prob(n, N) ? 1 : 0;
    std::int64_t big = big_.sample_total(1, N, rng);
    if (big == kCountOverflow)
        return kCountOverflow;
    return l + big;
}

std::int64_t CoopGWRepro::sample_sum(std::int64_t n, double, std::int64_t N, Philox& rng) const {
    if (n == 0)
        return 0;
    if (3 * static_cast<double>(n) > kCountLimit)
        return kCountOverflow;
    auto [p0, p2] = base(N);
    double s2 = p0 + p2;
    std::int64_t moved = s2 > 0 ? binomial(n, std::min(s2, 1.0), rng) : 0;
    std::int64_t twos = moved > 0 ? binomial(moved, std::clamp(p2 / s2, 0.0, 1.0), rng) : 0;
    std::int64_t extra = binomial(n, cooperation_prob(n, N), rng);
    std::int64_t big = big_.sample_total(n, N, rng);
    if (big == kCountOverflow)
        return kCountOverflow;
    double total = static_cast<double>(n - moved + 2 * twos + extra) + static_cast<double>(big);
    if (total > kCountLimit)
        return kCountOverflow;
    return n - moved + 2 * twos + extra + big;
}

double CoopGWRepro::log_laplace(double j, std::int64_t n, double, std::int64_t N) const {
    auto [p0, p2] = base(N);
    double nn = static_cast<double>(N);
    double q = cooperation_prob(n, N);
    return std::log1p(p0 * std::expm1(j / nn) + p2 * std::expm1(-j / nn)) +
           std::log1p(q * std::expm1(-j / nn)) + big_.log_laplace(j, N);
}

// Logistic Feller --------------------------------------------------------------

LogisticFellerRepro::LogisticFellerRepro(double sigma_D, double alpha_D, double c)
    : sigma_(sigma_D), alpha_(alpha_D), c_(c) {
    if (!(sigma_D > 0 && sigma_D <= 1))
        throw ConfigError("logistic-Feller law needs sigma_D in (0, 1]", "/repro/sigma_D");
    if (!(c >= 0))
        throw ConfigError("competition c must be nonnegative", "/repro/c");
}

double LogisticFellerRepro::g_N(double z, std::int64_t N) const {
    double nn = static_cast<double>(N);
    return alpha_ / nn + std::min(c_ * z / nn, 1 / std::sqrt(nn));
}

std::pair<double, double> LogisticFellerRepro::probs(std::int64_t n, double e,
                                                     std::int64_t N) const {
    double s2 = sigma_ * sigma_;
    double shift = e - g_N(static_cast<double>(n) / static_cast<double>(N), N);
    return {clip_probability(0.5 * (s2 - shift), "logistic P(L = 0)"),
            clip_probability(0.5 * (s2 + shift), "logistic P(L = 2)")};
}

std::int64_t LogisticFellerRepro::sample_one(std::int64_t n, double e, std::int64_t N,
                                             Philox& rng) const {
    auto [p0, p2] = probs(n, e, N);
    double u = rng.uniform();
    return u < p0 ? 0 : (u < p0 + p2 ? 2 : 1);
}

std::int64_t LogisticFellerRepro::sample_sum(std::int64_t n, double e, std::int64_t N,
                                             Philox& rng) const {
    if (n == 0)
        return 0;
    if (2 * static_cast<double>(n) > kCountLimit)
        return kCountOverflow;
    auto [p0, p2] = probs(n, e, N);
    double s2 = p0 + p2;
    std::int64_t moved = binomial(n, std::min(s2, 1.0), rng);
    std::int64_t twos = moved > 0 ? binomial(moved, std::clamp(p2 / s2, 0.0, 1.0), rng) : 0;
    return n - moved + 2 * twos;
}

std::int64_t LogisticFellerRepro::sample_sum_coupled(std::int64_t n, double e, std::int64_t N,
                                                     double xi, Philox& rng) const {
    if (n == 0)
        return 0;
    if (2 * static_cast<double>(n) > kCountLimit)
        return kCountOverflow;
    auto [p0, p2] = probs(n, e, N);
    double s2 = p0 + p2;
    std::int64_t moved = binomial(n, std::min(s2, 1.0), rng);
    std::int64_t twos =
        moved > 0 ? binomial_coupled(moved, std::clamp(p2 / s2, 0.0, 1.0), xi) : 0;
    return n - moved + 2 * twos;
}

double LogisticFellerRepro::log_laplace(double j, std::int64_t n, double e,
                                        std::int64_t N) const {
    auto [p0, p2] = probs(n, e, N);
    double nn = static_cast<double>(N);
    return std::log1p(p0 * std::expm1(j / nn) + p2 * std::expm1(-j / nn));
}

LevyTriplet LogisticFellerRepro::limit_demo() const {
    LevyTriplet t;
    t.alpha = -alpha_;
    t.sigma = sigma_;
    return t;
}

Interaction LogisticFellerRepro::limit_g() const {
    return c_ == 0 ? Interaction::zero() : Interaction::poly(-c_, 1);
}

// ---------------------------------------------------------------------------
// Model and chain

double BPModel::v() const {
    return env.v_rule()(static_cast<double>(N));
}

std::int64_t BPModel::initial_count() const {
    return static_cast<std::int64_t>(std::floor(static_cast<double>(N) * z0 + 1e-9));
}

BPModel BPModel::with_N(std::int64_t n) const {
    BPModel m = *this;
    m.N = n;
    return m;
}

BPStep bp_step(const BPModel& model, const EnvLaw& law, std::int64_t count, Philox& rng) {
    if (count < 0)
        throw ContractError("population count must be nonnegative");
    BPStep s;
    s.env = model.env.sample(law, rng);
    if (count == 0)
        return s;
    s.count = model.repro->sample_sum(count, s.env, model.N, rng);
    if (s.count == kCountOverflow ||
        static_cast<double>(s.count) / static_cast<double>(model.N) > model.z_max)
        s.exploded = true;
    return s;
}

BPStep bp_step(const BPModel& model, std::int64_t count, Philox& rng) {
    return bp_step(model, model.env.law(static_cast<double>(model.N)), count, rng);
}

BPPath simulate_bp(const BPModel& model, double T, std::span<const double> grid, Philox& rng) {
    if (!(T > 0))
        throw ContractError("horizon must be positive");
    double v = model.v();
    double nn = static_cast<double>(model.N);
    auto last = static_cast<std::size_t>(std::floor(v * T + 1e-9));
    std::vector<std::size_t> gens;
    if (grid.empty()) {
        for (std::size_t k = 0; k <= last; ++k)
            gens.push_back(k);
    } else {
        for (double t : grid) {
            if (t < 0 || t > T + 1e-12)
                throw ContractError("grid time outside [0, T]");
            gens.push_back(static_cast<std::size_t>(std::floor(v * t + 1e-9)));
        }
    }
    std::size_t top = gens.empty() ? 0 : *std::max_element(gens.begin(), gens.end());
    std::vector<double> zs(top + 1);
    std::vector<double> ss(top + 1);
    EnvLaw law = model.env.law(nn);
    Philox env_rng = rng.split(1);
    Philox repro_rng = rng.split(2);
    std::int64_t count = model.initial_count();
    bool exploded = false;
    BPPath path;
    double walk = 0;
    zs[0] = static_cast<double>(count) / nn;
    for (std::size_t k = 1; k <= top; ++k) {
        double e = model.env.sample(law, env_rng);
        walk += e;
        if (!exploded && count > 0) {
            count = model.repro->sample_sum(count, e, model.N, repro_rng);
            if (count == kCountOverflow || static_cast<double>(count) / nn > model.z_max) {
                exploded = true;
                path.explosion_time = static_cast<double>(k) / v;
            }
        }
        zs[k] = exploded ? std::numeric_limits<double>::infinity()
                         : static_cast<double>(count) / nn;
        ss[k] = walk;
    }
    for (std::size_t i = 0; i < gens.size(); ++i) {
        path.t.push_back(grid.empty() ? static_cast<double>(gens[i]) / v : grid[i]);
        path.z.push_back(zs[gens[i]]);
        path.s.push_back(ss[gens[i]]);
    }
    return path;
}

// ---------------------------------------------------------------------------
// Characteristics

double P_k_N(double z, double w, int k, const BPModel& model, Philox* rng, std::int64_t M) {
    std::int64_t n = lattice_count(z, model.N);
    if (n == 0)
        return 0;
    const ReproLaw& law = *model.repro;
    if (law.has_laplace())
        return std::expm1(static_cast<double>(n) * law.log_laplace(k, n, w, model.N));
    if (!rng || M < 1)
        throw ContractError("P_k_N needs an rng and draws without a Laplace evaluator");
    RunningStats acc;
    double nn = static_cast<double>(model.N);
    for (std::int64_t i = 0; i < M; ++i) {
        std::int64_t l = law.sample_one(n, w, model.N, *rng);
        acc.add(l == kCountOverflow ? 0.0 : std::exp(-k * (static_cast<double>(l) - 1) / nn));
    }
    return std::expm1(static_cast<double>(n) * std::log(acc.mean()));
}

namespace {

// v_N e^{-l e} sum_j C(k,j) (-1)^(k-j) P_j for one environment value; k = 0
// means the single term P_j with j = `single`.
struct PSum {
    const BPModel& model;
    std::int64_t n;

    double exact(double e, int j) const {
        return std::expm1(static_cast<double>(n) *
                          model.repro->log_laplace(j, n, e, model.N));
    }
};

double offspring_shift(std::int64_t n, std::int64_t next, std::int64_t N) {
    if (next == kCountOverflow)
        return std::numeric_limits<double>::infinity();
    return static_cast<double>(next - n) / static_cast<double>(N);
}

} // namespace

Estimate A_N_jl(double z, int j, double ell, const BPModel& model, GMode mode, std::int64_t M,
                Philox& rng) {
    if (j < 1 || !(ell >= 0))
        throw ContractError("A_N_jl needs j >= 1 and l >= 0");
    std::int64_t n = lattice_count(z, model.N);
    double v = model.v();
    EnvLaw law = model.env.law(static_cast<double>(model.N));
    const ReproLaw& repro = *model.repro;
    PSum ps{model, n};
    if (n == 0)
        return {0, 0};
    if (mode == GMode::EnvExact) {
        if (!repro.has_laplace())
            throw ContractError("exact environment mode needs a Laplace evaluator");
        double val = model.env.expectation(law, [&](double e) {
            return v * ps.exact(e, j) * std::exp(-ell * e);
        });
        return {val, 0};
    }
    if (M < 1)
        throw ContractError("need at least one replicate");
    bool simulate = mode == GMode::FullMC || !repro.has_laplace();
    RunningStats acc;
    for (std::int64_t i = 0; i < M; ++i) {
        double e = model.env.sample(law, rng);
        double p;
        if (simulate) {
            double d = offspring_shift(n, repro.sample_sum(n, e, model.N, rng), model.N);
            p = std::expm1(-j * d);
        } else {
            p = ps.exact(e, j);
        }
        acc.add(v * p * std::exp(-ell * e));
    }
    return acc.estimate();
}

CsbpEstimate G_N_csbp(double z, const TestFunction& H, const BPModel& model, GMode mode,
                      std::int64_t M, Philox& rng) {
    if (H.family() == TestFamily::WF)
        throw ContractError("branching characteristics need a CSBP test function");
    double v = model.v();
    EnvLaw law = model.env.law(static_cast<double>(model.N));
    const ReproLaw& repro = *model.repro;
    CsbpEstimate out;
    if (H.family() == TestFamily::CsbpL) {
        double ell = H.ell();
        auto f = [&](double e) { return -v * std::expm1(-ell * e); };
        if (mode == GMode::EnvExact) {
            out.est = {model.env.expectation(law, f), 0};
        } else {
            RunningStats acc;
            for (std::int64_t i = 0; i < M; ++i)
                acc.add(f(model.env.sample(law, rng)));
            out.est = acc.estimate();
        }
        return out;
    }
    int k = H.k();
    double ell = H.ell();
    std::int64_t n = lattice_count(z, model.N);
    double zl = static_cast<double>(n) / static_cast<double>(model.N);
    double weight = std::exp(-k * zl);
    PSum ps{model, n};
    if (n == 0) {
        out.est = {0, 0};
        return out;
    }
    auto assembled = [&](double e) {
        double s = 0;
        for (int j = 1; j <= k; ++j) {
            double sign = (k - j) % 2 == 0 ? 1.0 : -1.0;
            s += sign * static_cast<double>(binomial_coefficient(k, j)) * ps.exact(e, j);
        }
        return weight * v * s * std::exp(-ell * e);
    };
    if (mode == GMode::EnvExact) {
        if (!repro.has_laplace())
            throw ContractError("exact environment mode needs a Laplace evaluator");
        out.est = {model.env.expectation(law, assembled), 0};
    } else {
        if (M < 1)
            throw ContractError("need at least one replicate");
        bool simulate = mode == GMode::FullMC || !repro.has_laplace();
        RunningStats acc;
        for (std::int64_t i = 0; i < M; ++i) {
            double e = model.env.sample(law, rng);
            if (simulate) {
                // One offspring draw shared by every j collapses the sum.
                double d = offspring_shift(n, repro.sample_sum(n, e, model.N, rng), model.N);
                acc.add(weight * v * std::pow(std::expm1(-d), k) * std::exp(-ell * e));
            } else {
                acc.add(assembled(e));
            }
        }
        out.est = acc.estimate();
    }
    out.cancellation =
        k >= 8 && out.est.stderr_ > 0.1 * std::fabs(out.est.value);
    return out;
}

Estimate G_N_csbp_direct(double z, const TestFunction& H, const BPModel& model, std::int64_t M,
                         Philox& rng) {
    if (H.family() == TestFamily::WF)
        throw ContractError("branching characteristics need a CSBP test function");
    if (M < 1)
        throw ContractError("need at least one replicate");
    std::int64_t n = lattice_count(z, model.N);
    double nn = static_cast<double>(model.N);
    double zl = static_cast<double>(n) / nn;
    double v = model.v();
    EnvLaw law = model.env.law(nn);
    RunningStats acc;
    for (std::int64_t i = 0; i < M; ++i) {
        double e = model.env.sample(law, rng);
        std::int64_t next = n == 0 ? 0 : model.repro->sample_sum(n, e, model.N, rng);
        double znext = next == kCountOverflow ? std::numeric_limits<double>::infinity()
                                              : static_cast<double>(next) / nn;
        double u = std::exp(-znext) - std::exp(-zl);
        acc.add(v * H(u, e));
    }
    return acc.estimate();
}

double A2_target(double z, int j, double ell, const LevyTriplet& env, const LevyTriplet& demo,
                 const Interaction& g) {
    if (j == 0)
        return 0;
    return -j * z * g(z) - gamma_D(j, demo) * z - gamma_E(j * z + ell, env) + gamma_E(ell, env);
}

double G_limit_csbp(double z, const TestFunction& H, const LevyTriplet& env,
                    const LevyTriplet& demo, const Interaction& g) {
    if (!(z >= 0))
        throw ContractError("z must be nonnegative");
    switch (H.family()) {
    case TestFamily::WF:
        throw ContractError("branching generator needs a CSBP test function");
    case TestFamily::CsbpL:
        return gamma_E(H.ell(), env);
    case TestFamily::CsbpKL:
        break;
    }
    int k = H.k();
    double ell = H.ell();
    if (k == 1)
        return std::exp(-z) *
               (gamma_E(ell, env) - gamma_E(z + ell, env) - z * g(z) - z * gamma_D(1, demo));
    if (k == 2) {
        double env_part = env.integrate([&](double w) {
            double f = f_z(z, w);
            double h = env.h(w);
            return std::exp(-ell * w) * f * f - z * z * h * h;
        });
        double demo_part = demo.integrate([&](double r) {
            double f = f_z(1, r);
            double h = demo.h(r);
            return f * f - h * h;
        });
        return std::exp(-2 * z) *
               (z * z * env.beta() + env_part + z * demo.beta() + z * demo_part);
    }
    double env_part =
        env.integrate([&](double w) { return std::exp(-ell * w) * std::pow(f_z(z, w), k); });
    double demo_part = demo.integrate([&](double r) { return std::pow(f_z(1, r), k); });
    double sign = k % 2 == 0 ? 1.0 : -1.0;
    return sign * std::exp(-k * z) * (env_part + z * demo_part);
}

double G_limit_csbp_assembled(double z, const TestFunction& H, const LevyTriplet& env,
                              const LevyTriplet& demo, const Interaction& g) {
    if (H.family() != TestFamily::CsbpKL)
        return G_limit_csbp(z, H, env, demo, g);
    int k = H.k();
    double s = 0;
    for (int j = 0; j <= k; ++j) {
        double sign = (k - j) % 2 == 0 ? 1.0 : -1.0;
        s += sign * static_cast<double>(binomial_coefficient(k, j)) *
             A2_target(z, j, H.ell(), env, demo, g);
    }
    return std::exp(-k * z) * s;
}

// ---------------------------------------------------------------------------
// Residual reports

double lattice_z(double z, std::int64_t N) {
    return static_cast<double>(lattice_count(z, N)) / static_cast<double>(N);
}

bool ResidualReport::passed() const {
    return std::all_of(summaries.begin(), summaries.end(),
                       [](const ResidualSummary& s) { return s.decreasing; });
}

namespace {

template <class Estimator, class Target>
ResidualReport residual_report(std::span<const ResidualConfig> configs,
                               std::span<const double> z_grid,
                               std::span<const std::int64_t> N_list, Estimator&& estimate,
                               Target&& target) {
    ResidualReport report;
    for (std::size_t c = 0; c < configs.size(); ++c) {
        const ResidualConfig& cfg = configs[c];
        ResidualSummary sum;
        sum.config = cfg;
        for (std::size_t i = 0; i < N_list.size(); ++i) {
            std::int64_t N = N_list[i];
            double sup = 0;
            Band band{0, 0};
            for (std::size_t zi = 0; zi < z_grid.size(); ++zi) {
                double z = lattice_z(z_grid[zi], N);
                Estimate est = estimate(c, i, zi, z, N);
                double tgt = target(cfg, z);
                double w = std::exp(-cfg.k * z);
                ResidualRow row{static_cast<double>(N), cfg.j, cfg.ell, cfg.k, z,
                                est.value, est.stderr_, tgt, w * std::fabs(est.value - tgt)};
                report.rows.push_back(row);
                sup = std::max(sup, row.residual);
                band.lo = std::max(band.lo, std::max(0.0, row.residual - 3 * w * est.stderr_));
                band.hi = std::max(band.hi, row.residual + 3 * w * est.stderr_);
            }
            sum.N.push_back(static_cast<double>(N));
            sum.sup_residual.push_back(sup);
            sum.bands.push_back(band);
        }
        sum.decreasing = decreasing_within_bands(sum.sup_residual, sum.bands, kResidualFloor);
        report.summaries.push_back(std::move(sum));
    }
    return report;
}

} // namespace

ResidualReport check_A2(const BPModel& model, std::span<const ResidualConfig> configs,
                        std::span<const double> z_grid, std::span<const std::int64_t> N_list,
                        GMode mode, std::int64_t M, std::uint64_t seed) {
    const LevyTriplet& env = model.env.target();
    return residual_report(
        configs, z_grid, N_list,
        [&](std::size_t c, std::size_t i, std::size_t zi, double z, std::int64_t N) {
            Philox rng(seed, mix64(mix64(c, i), zi));
            return A_N_jl(z, configs[c].j, configs[c].ell, model.with_N(N), mode, M, rng);
        },
        [&](const ResidualConfig& cfg, double z) {
            return A2_target(z, cfg.j, cfg.ell, env, model.demo, model.g);
        });
}

double C_j_N(double z, int j, const BPModel& model) {
    std::int64_t n = lattice_count(z, model.N);
    if (n == 0)
        return 0;
    if (!model.repro->has_laplace())
        throw ContractError("C_j_N needs a Laplace evaluator");
    return model.v() *
           std::expm1(static_cast<double>(n) * model.repro->log_laplace(j, n, 0, model.N));
}

ResidualReport check_coop_expansion(const BPModel& model, std::span<const ResidualConfig> configs,
                                    std::span<const double> z_grid,
                                    std::span<const std::int64_t> N_list) {
    return residual_report(
        configs, z_grid, N_list,
        [&](std::size_t c, std::size_t, std::size_t, double z, std::int64_t N) {
            return Estimate{C_j_N(z, configs[c].j, model.with_N(N)), 0};
        },
        [&](const ResidualConfig& cfg, double z) {
            return -cfg.j * z * model.g(z) - gamma_D(cfg.j, model.demo) * z;
        });
}

// ---------------------------------------------------------------------------
// Limit SDE specifications

namespace {

struct SplitTriplet {
    double rate = 0;        //!< nu(|w| >= eps)
    double compensator = 0; //!< int_{|w| >= eps} h dnu
    double small = 0;       //!< int_{|w| < eps} w^2 dnu
    double sigma_eff = 0;
};

SplitTriplet split(const LevyTriplet& t, double eps) {
    if (!(eps > 0) || eps > t.h.radius())
        throw ConfigError("small-jump cutoff must lie in (0, truncation radius]");
    SplitTriplet s;
    Region big = Region::abs_at_least(eps);
    s.rate = t.nu.mass(big);
    s.compensator = t.integrate([&](double w) { return t.h(w); }, big);
    s.small = t.integrate([](double w) { return w * w; }, Region::abs_below(eps));
    s.sigma_eff = std::sqrt(t.sigma * t.sigma + s.small);
    return s;
}

} // namespace

SdeSpec bpile_z_spec(const LevyTriplet& env, const LevyTriplet& demo, const Interaction& g,
                     double eps, double z_max) {
    validate(env, Support::Environment);
    validate(demo, Support::Demographic);
    g.check_decay();
    SplitTriplet se = split(env, eps);
    SplitTriplet sd = split(demo, eps);
    double c_y = env.alpha - se.compensator;
    double c_z = demo.alpha - sd.compensator + c_y;

    SdeSpec spec;
    spec.name = "bpile";
    spec.dim = 2;
    spec.discarded_quadratic_mass = se.small + sd.small;
    spec.drift = [g, c_y, c_z](const State& x) {
        double z = x[0];
        return State{z * (c_z + g(z)), c_y, 0, 0};
    };
    double s_d = sd.sigma_eff;
    double s_e = se.sigma_eff;
    spec.diffusion = [s_d, s_e](const State& x) {
        Matrix m{};
        m[0][0] = s_d * std::sqrt(std::max(x[0], 0.0));
        m[0][1] = s_e * x[0];
        m[1][1] = s_e;
        return m;
    };
    Region big = Region::abs_at_least(eps);
    if (se.rate > 0) {
        JumpSource src;
        src.name = "environment";
        double rate = se.rate;
        src.intensity = [rate](const State&) { return rate; };
        src.draw = [nu = env.nu, big](const State& x, Philox& rng) {
            double w = nu.sample(big, rng);
            JumpDraw d;
            d.delta = {x[0] * w, w, 0, 0};
            d.mark = w;
            return d;
        };
        spec.jumps.push_back(std::move(src));
    }
    if (sd.rate > 0) {
        JumpSource src;
        src.name = "demographic";
        double rate = sd.rate;
        src.intensity = [rate](const State& x) { return std::max(x[0], 0.0) * rate; };
        src.draw = [nu = demo.nu, big](const State&, Philox& rng) {
            double r = nu.sample(big, rng);
            JumpDraw d;
            d.delta = {r, 0, 0, 0};
            d.mark = r;
            return d;
        };
        spec.jumps.push_back(std::move(src));
    }
    CoordinateDomain zdom{0, std::numeric_limits<double>::infinity(), BoundaryPolicy::Absorb,
                          z_max};
    spec.domain = {zdom, CoordinateDomain{}};
    return spec;
}

SdeSpec bpile_sde_spec(const LevyTriplet& env, const LevyTriplet& demo, const Interaction& g,
                       double eps) {
    validate(env, Support::Environment);
    validate(demo, Support::Demographic);
    g.check_decay();
    SplitTriplet se = split(env, eps);
    SplitTriplet sd = split(demo, eps);
    double c_y = env.alpha - se.compensator;
    double c_z = demo.alpha - sd.compensator + c_y;
    double s_d = sd.sigma_eff;
    double s_e = se.sigma_eff;

    SdeSpec spec;
    spec.name = "bpile-pair";
    spec.dim = 2;
    spec.discarded_quadratic_mass = se.small + sd.small;
    spec.drift = [g, c_y, c_z, s_d, s_e](const State& x) {
        double x1 = x[0];
        if (!(x1 > 0))
            return State{0, c_y, 0, 0};
        double z = -std::log(x1);
        double b1 = x1 * z * (-c_z - g(z) + 0.5 * s_d * s_d + 0.5 * z * s_e * s_e);
        return State{b1, c_y, 0, 0};
    };
    spec.diffusion = [s_d, s_e](const State& x) {
        Matrix m{};
        double x1 = x[0];
        if (x1 > 0) {
            double z = -std::log(x1);
            m[0][0] = -std::sqrt(std::max(z, 0.0)) * s_d * x1;
            m[0][1] = -z * s_e * x1;
        }
        m[1][1] = s_e;
        return m;
    };
    Region big = Region::abs_at_least(eps);
    if (se.rate > 0) {
        JumpSource src;
        src.name = "environment";
        double rate = se.rate;
        src.intensity = [rate](const State&) { return rate; };
        src.draw = [nu = env.nu, big](const State& x, Philox& rng) {
            double w = nu.sample(big, rng);
            double x1 = x[0];
            double z = x1 > 0 ? -std::log(x1) : 0;
            JumpDraw d;
            d.delta = {x1 > 0 ? -x1 * f_z(z, w) : 0.0, w, 0, 0};
            d.mark = w;
            return d;
        };
        spec.jumps.push_back(std::move(src));
    }
    if (sd.rate > 0) {
        JumpSource src;
        src.name = "demographic";
        double rate = sd.rate;
        src.intensity = [rate](const State& x) {
            return x[0] > 0 ? -std::log(x[0]) * rate : 0.0;
        };
        src.draw = [nu = demo.nu, big](const State& x, Philox& rng) {
            double r = nu.sample(big, rng);
            JumpDraw d;
            d.delta = {-x[0] * f_z(1, r), 0, 0, 0};
            d.mark = r;
            return d;
        };
        spec.jumps.push_back(std::move(src));
    }
    spec.domain = {CoordinateDomain{0, 1, BoundaryPolicy::Clamp}, CoordinateDomain{}};
    return spec;
}

SdeSpec logistic_feller_sde_spec(double alpha_D, double sigma_D, double sigma_E, double c,
                                 double z_max) {
    if (!(sigma_D >= 0) || !(sigma_E >= 0) || !(c >= 0))
        throw ConfigError("logistic-Feller coefficients must be nonnegative");
    SdeSpec spec;
    spec.name = "logistic-feller";
    spec.dim = 2;
    spec.drift = [alpha_D, c](const State& x) {
        double z = x[0];
        return State{alpha_D * z - c * z * z, 0, 0, 0};
    };
    spec.diffusion = [sigma_D, sigma_E](const State& x) {
        Matrix m{};
        m[0][0] = sigma_D * std::sqrt(std::max(x[0], 0.0));
        m[0][1] = sigma_E * x[0];
        m[1][1] = sigma_E;
        return m;
    };
    CoordinateDomain zdom{0, std::numeric_limits<double>::infinity(), BoundaryPolicy::Absorb,
                          z_max};
    spec.domain = {zdom, CoordinateDomain{}};
    return spec;
}

} // namespace jumplim
