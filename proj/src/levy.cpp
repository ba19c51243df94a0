#include "jumplim/levy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "jumplim/distributions.hpp"
#include "jumplim/errors.hpp"
#include "jumplim/parallel.hpp"
#include "jumplim/quadrature.hpp"

namespace jumplim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double x) {
    std::ostringstream os;
    os << x;
    return os.str();
}

} // namespace

// ---------------------------------------------------------------------------
// Truncation

TruncationFn TruncationFn::clamp(double bound) {
    if (!(bound > 0) || !std::isfinite(bound))
        throw ConfigError("clamp truncation needs a finite positive bound");
    return {TruncationKind::Clamp, bound, bound};
}

TruncationFn TruncationFn::smooth(double radius, double bound) {
    if (!(radius > 0) || !(bound > radius) || !std::isfinite(bound))
        throw ConfigError("smooth truncation needs 0 < radius < bound < inf");
    return {TruncationKind::Smooth, radius, bound};
}

double TruncationFn::operator()(double w) const noexcept {
    double a = std::fabs(w);
    if (a <= radius_)
        return w;
    if (kind_ == TruncationKind::Clamp)
        return std::copysign(bound_, w);
    double width = bound_ - radius_;
    return std::copysign(radius_ + width * std::tanh((a - radius_) / width), w);
}

// ---------------------------------------------------------------------------
// Slabs

double Slab::cdf(double w) const {
    if (w <= lo)
        return 0;
    if (w >= hi)
        return 1;
    switch (family) {
    case SlabFamily::Uniform:
        return (w - lo) / (hi - lo);
    case SlabFamily::Power:
        if (param == 0)
            return std::log(w / lo) / std::log(hi / lo);
        return std::expm1(param * std::log(lo / w)) / std::expm1(param * std::log(lo / hi));
    case SlabFamily::Exponential:
        return std::expm1(-param * (w - lo)) / std::expm1(-param * (hi - lo));
    }
    return 0;
}

double Slab::quantile(double t) const {
    switch (family) {
    case SlabFamily::Uniform:
        return lo + t * (hi - lo);
    case SlabFamily::Power: {
        if (param == 0)
            return lo * std::exp(t * std::log(hi / lo));
        double d = -std::expm1(param * std::log(lo / hi));
        return lo * std::exp(-std::log1p(-t * d) / param);
    }
    case SlabFamily::Exponential:
        return lo - std::log1p(t * std::expm1(-param * (hi - lo))) / param;
    }
    return lo;
}

std::string Slab::describe() const {
    const char* name = family == SlabFamily::Uniform ? "uniform"
                       : family == SlabFamily::Power ? "power"
                                                     : "exponential";
    return std::string(name) + " slab on [" + fmt(lo) + ", " + fmt(hi) + "]";
}

// ---------------------------------------------------------------------------
// Jump measure

bool Region::contains(double w) const {
    switch (kind) {
    case All:
        return true;
    case AbsAtLeast:
        return std::fabs(w) >= eps;
    case AbsBelow:
        return std::fabs(w) < eps;
    }
    return false;
}

namespace {

// Pieces of [lo, hi] inside the region.
std::vector<std::pair<double, double>> pieces(double lo, double hi, Region region) {
    std::vector<std::pair<double, double>> out;
    auto add = [&](double a, double b) {
        if (b > a)
            out.emplace_back(a, b);
    };
    switch (region.kind) {
    case Region::All:
        add(lo, hi);
        break;
    case Region::AbsAtLeast:
        add(lo, std::min(hi, -region.eps));
        add(std::max(lo, region.eps), hi);
        break;
    case Region::AbsBelow:
        add(std::max(lo, -region.eps), std::min(hi, region.eps));
        break;
    }
    return out;
}

} // namespace

JumpMeasure& JumpMeasure::add_atom(double w, double mass) {
    atoms_.push_back({w, mass});
    return *this;
}

JumpMeasure& JumpMeasure::add_slab(const Slab& slab) {
    slabs_.push_back(slab);
    return *this;
}

double JumpMeasure::mass(Region region) const {
    double total = 0;
    for (const auto& a : atoms_)
        if (region.contains(a.w))
            total += a.mass;
    for (const auto& s : slabs_)
        for (auto [a, b] : pieces(s.lo, s.hi, region))
            total += s.mass * (s.cdf(b) - s.cdf(a));
    return total;
}

double JumpMeasure::integrate(const std::function<double(double)>& f, Region region,
                              std::span<const double> kinks) const {
    double total = 0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
        const auto& a = atoms_[i];
        if (a.mass == 0 || !region.contains(a.w))
            continue;
        double v = a.mass * f(a.w);
        if (!std::isfinite(v))
            throw IntegrationError("non-finite integrand at atom " + std::to_string(i) +
                                   " (w=" + fmt(a.w) + ")");
        total += v;
    }
    for (std::size_t i = 0; i < slabs_.size(); ++i) {
        const auto& s = slabs_[i];
        if (s.mass == 0)
            continue;
        std::string what = "component " + std::to_string(i) + " (" + s.describe() + ")";
        for (auto [a, b] : pieces(s.lo, s.hi, region)) {
            std::vector<double> cuts = {s.cdf(a)};
            for (double k : kinks)
                if (k > a && k < b)
                    cuts.push_back(s.cdf(k));
            if (0 > a && 0 < b)
                cuts.push_back(s.cdf(0));
            cuts.push_back(s.cdf(b));
            std::sort(cuts.begin(), cuts.end());
            auto g = [&](double t) { return f(s.quantile(t)); };
            for (std::size_t c = 0; c + 1 < cuts.size(); ++c)
                total += s.mass * integrate_interval(g, cuts[c], cuts[c + 1], what);
        }
    }
    if (!std::isfinite(total))
        throw IntegrationError("non-finite jump-measure integral");
    return total;
}

double JumpMeasure::sample(Region region, Philox& rng) const {
    double total = mass(region);
    if (!(total > 0))
        throw ContractError("sampling from a region of zero mass");
    double u = rng.uniform() * total;
    for (const auto& a : atoms_) {
        if (!region.contains(a.w))
            continue;
        if (u < a.mass)
            return a.w;
        u -= a.mass;
    }
    const Atom* last_atom = nullptr;
    for (const auto& a : atoms_)
        if (region.contains(a.w) && a.mass > 0)
            last_atom = &a;
    for (const auto& s : slabs_) {
        for (auto [a, b] : pieces(s.lo, s.hi, region)) {
            double ta = s.cdf(a);
            double tb = s.cdf(b);
            double m = s.mass * (tb - ta);
            if (u < m) {
                double t = ta + (tb - ta) * rng.uniform();
                return std::clamp(s.quantile(t), a, b);
            }
            u -= m;
        }
    }
    // Rounding left u just past the end: return the last component with mass.
    for (auto it = slabs_.rbegin(); it != slabs_.rend(); ++it) {
        auto p = pieces(it->lo, it->hi, region);
        if (!p.empty() && it->mass > 0) {
            double ta = it->cdf(p.back().first);
            double tb = it->cdf(p.back().second);
            return it->quantile(ta + (tb - ta) * rng.uniform());
        }
    }
    return last_atom->w;
}

void JumpMeasure::validate(Support support) const {
    double floor = support == Support::Environment ? -1.0 : 0.0;
    const char* label = support == Support::Environment ? "(-1, inf)" : "(0, inf)";
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
        const auto& a = atoms_[i];
        std::string where = "atom " + std::to_string(i);
        if (!std::isfinite(a.w) || !(a.w > floor))
            throw ConfigError(where + " lies outside " + std::string(label));
        if (a.w == 0)
            throw ConfigError(where + " sits at 0");
        if (!(a.mass >= 0) || !std::isfinite(a.mass))
            throw ConfigError(where + " has invalid mass");
    }
    for (std::size_t i = 0; i < slabs_.size(); ++i) {
        const auto& s = slabs_[i];
        std::string where = "slab " + std::to_string(i);
        if (!(s.mass >= 0) || !std::isfinite(s.mass))
            throw ConfigError(where + " has invalid mass");
        if (!(s.hi > s.lo) || !std::isfinite(s.lo))
            throw ConfigError(where + " has an empty or unbounded-below support");
        bool ok_floor = support == Support::Environment ? s.lo > floor : s.lo >= floor;
        if (!ok_floor)
            throw ConfigError(where + " support leaves " + std::string(label));
        switch (s.family) {
        case SlabFamily::Uniform:
            if (!std::isfinite(s.hi))
                throw ConfigError(where + ": uniform slab needs a finite upper end");
            break;
        case SlabFamily::Power:
            if (!(s.lo > 0))
                throw ConfigError(where + ": power slab needs lo > 0");
            if (!std::isfinite(s.hi) && !(s.param > 0))
                throw ConfigError(where + ": unbounded power slab needs exponent > 0");
            if (!std::isfinite(s.param))
                throw ConfigError(where + ": invalid exponent");
            break;
        case SlabFamily::Exponential:
            if (!(s.param > 0) || !std::isfinite(s.param))
                throw ConfigError(where + ": exponential slab needs rate > 0");
            break;
        }
    }
    double q = integrate([](double w) { return std::min(1.0, w * w); }, Region::all(),
                         std::array<double, 2>{-1.0, 1.0});
    if (!std::isfinite(q))
        throw ConfigError("integral of min(1, w^2) is not finite");
}

// ---------------------------------------------------------------------------
// Triplets and gamma

double LevyTriplet::integrate(const std::function<double(double)>& f, Region region) const {
    std::array<double, 2> kinks = {-h.radius(), h.radius()};
    return nu.integrate(f, region, kinks);
}

double LevyTriplet::beta() const {
    return sigma * sigma + integrate([this](double w) {
               double x = h(w);
               return x * x;
           });
}

void validate(const LevyTriplet& triplet, Support support) {
    if (!std::isfinite(triplet.alpha))
        throw ConfigError("triplet drift is not finite");
    if (!(triplet.sigma >= 0) || !std::isfinite(triplet.sigma))
        throw ConfigError("triplet sigma must be finite and nonnegative");
    triplet.nu.validate(support);
}

double gamma_levy(double z, const LevyTriplet& triplet) {
    if (z == 0)
        return 0;
    double jumps = triplet.integrate([&](double w) { return -std::expm1(-z * w) - z * triplet.h(w); });
    return triplet.alpha * z - 0.5 * triplet.sigma * triplet.sigma * z * z + jumps;
}

double gamma_E(double z, const LevyTriplet& triplet) {
    if (!(z >= 0))
        throw ContractError("gamma_E needs z >= 0");
    return gamma_levy(z, triplet);
}

double gamma_D(double z, const LevyTriplet& triplet) {
    if (!(z >= 0))
        throw ContractError("gamma_D needs z >= 0");
    return gamma_levy(z, triplet);
}

// ---------------------------------------------------------------------------
// Environment families

double VRule::operator()(double n) const {
    return identity() ? n : scale * std::pow(n, exponent);
}

EnvFamily EnvFamily::constructed(LevyTriplet target, VRule v) {
    validate(target, Support::Environment);
    if (!(v.scale > 0) || !(v.exponent > 0))
        throw ConfigError("v_N rule must be positive and increasing");
    EnvFamily f;
    f.target_ = std::move(target);
    f.v_ = v;
    return f;
}

EnvFamily EnvFamily::deterministic(double s, VRule v, TruncationFn h) {
    if (!std::isfinite(s))
        throw ConfigError("deterministic environment value must be finite");
    EnvFamily f;
    f.target_.alpha = s;
    f.target_.h = h;
    f.v_ = v;
    f.deterministic_ = true;
    f.shift_ = s;
    return f;
}

EnvLaw EnvFamily::law(double n) const {
    if (!(n >= 1))
        throw ContractError("environment law needs N >= 1");
    EnvLaw law;
    law.n = n;
    law.v = v_(n);
    if (deterministic_) {
        law.deterministic = true;
        law.constant = shift_ / law.v;
        if (!(law.constant > -1))
            throw ConfigError("deterministic environment s/v_N must exceed -1");
        return law;
    }
    const auto& t = target_;
    law.eps = std::pow(law.v, -0.25);
    Region big = Region::abs_at_least(law.eps);
    law.jump_mass = t.nu.mass(big);
    law.jump_prob = std::min(1.0, law.jump_mass / law.v);
    law.c = t.alpha - t.integrate([&](double w) { return t.h(w); }, big);
    double small = t.integrate([](double w) { return w * w; }, Region::abs_below(law.eps));
    law.s = std::sqrt(t.sigma * t.sigma + small);
    double bound = std::max(0.0, std::log(law.v));
    law.zeta_lo = -bound;
    law.zeta_hi = bound;
    if (law.jump_prob < 1) {
        double centre = law.c / law.v;
        if (law.s > 0) {
            double zmin = (-1 - centre) * std::sqrt(law.v) / law.s;
            if (zmin >= law.zeta_hi)
                throw ConfigError("environment Gaussian part cannot stay above -1 at this N");
            law.zeta_lo = std::max(law.zeta_lo, zmin);
        } else if (!(centre > -1)) {
            throw ConfigError("environment drift c_N/v_N is <= -1 at this N");
        }
    }
    return law;
}

namespace {

double diffusive_value(const EnvLaw& law, double zeta) {
    double x = law.c / law.v + law.s * zeta / std::sqrt(law.v);
    return x > -1 ? x : std::nextafter(-1.0, 0.0);
}

} // namespace

double EnvFamily::sample(const EnvLaw& law, Philox& rng) const {
    if (law.deterministic)
        return law.constant;
    double u = rng.uniform();
    if (u < law.jump_prob)
        return target_.nu.sample(Region::abs_at_least(law.eps), rng);
    if (law.s == 0)
        return law.c / law.v;
    return diffusive_value(law, truncated_normal(law.zeta_lo, law.zeta_hi, rng));
}

double EnvFamily::sample_coupled(const EnvLaw& law, double xi, Philox& rng) const {
    if (law.deterministic)
        return law.constant;
    double u = rng.uniform();
    if (u < law.jump_prob)
        return target_.nu.sample(Region::abs_at_least(law.eps), rng);
    if (law.s == 0)
        return law.c / law.v;
    return diffusive_value(law, truncated_normal_coupled(law.zeta_lo, law.zeta_hi, xi, rng));
}

double EnvFamily::expectation(const EnvLaw& law, const std::function<double(double)>& f) const {
    if (law.deterministic)
        return f(law.constant);
    double total = 0;
    if (law.jump_prob > 0) {
        double jumps = target_.integrate(f, Region::abs_at_least(law.eps));
        total += law.jump_prob * jumps / law.jump_mass;
    }
    if (law.jump_prob < 1) {
        double diffusive;
        if (law.s == 0 || law.zeta_lo >= law.zeta_hi) {
            diffusive = f(law.c / law.v + law.s * law.zeta_lo / std::sqrt(law.v));
        } else {
            double lo = law.zeta_lo;
            double hi = law.zeta_hi;
            double norm = lo >= 0 ? normal_sf(lo) - normal_sf(hi)
                                  : normal_cdf(hi) - normal_cdf(lo);
            auto g = [&](double zeta) {
                return f(diffusive_value(law, zeta)) * std::exp(-0.5 * zeta * zeta);
            };
            // Split where the truncation and the origin map into zeta space.
            std::vector<double> cuts = {lo, hi};
            double rho = target_.h.radius();
            for (double x : {-rho, 0.0, rho}) {
                double zeta = (x - law.c / law.v) * std::sqrt(law.v) / law.s;
                if (zeta > lo && zeta < hi)
                    cuts.push_back(zeta);
            }
            std::sort(cuts.begin(), cuts.end());
            double acc = 0;
            for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
                acc += integrate_interval(g, cuts[i], cuts[i + 1], "environment Gaussian part", 1e-12);
            diffusive = acc / (std::sqrt(2 * std::numbers::pi) * norm);
        }
        total += (1 - law.jump_prob) * diffusive;
    }
    return total;
}

std::pair<double, double> EnvFamily::range(const EnvLaw& law) const {
    if (law.deterministic)
        return {law.constant, law.constant};
    double lo = kInf;
    double hi = -kInf;
    if (law.jump_prob > 0) {
        Region big = Region::abs_at_least(law.eps);
        for (const auto& a : target_.nu.atoms())
            if (a.mass > 0 && big.contains(a.w)) {
                lo = std::min(lo, a.w);
                hi = std::max(hi, a.w);
            }
        for (const auto& s : target_.nu.slabs())
            for (auto [a, b] : pieces(s.lo, s.hi, big))
                if (s.mass > 0) {
                    lo = std::min(lo, a);
                    hi = std::max(hi, b);
                }
    }
    if (law.jump_prob < 1) {
        double scale = law.s / std::sqrt(law.v);
        lo = std::min(lo, law.c / law.v + scale * law.zeta_lo);
        hi = std::max(hi, law.c / law.v + scale * law.zeta_hi);
    }
    return {lo, hi};
}

// ---------------------------------------------------------------------------
// Assumption A check

MomentFn indicator_moment(const JumpMeasure& nu, double a, double b) {
    if (!(b > a) || (a <= 0 && b >= 0))
        throw ContractError("indicator moment needs an interval away from 0");
    double target = 0;
    for (const auto& atom : nu.atoms())
        if (atom.w >= a && atom.w <= b)
            target += atom.mass;
    for (const auto& s : nu.slabs())
        target += s.mass * (s.cdf(b) - s.cdf(a));
    MomentFn m;
    m.name = "1[" + fmt(a) + "," + fmt(b) + "]";
    m.f = [a, b](double w) { return (w >= a && w <= b) ? 1.0 : 0.0; };
    m.target = target;
    return m;
}

namespace {

struct Welford {
    double n = 0;
    double mean = 0;
    double m2 = 0;

    void add(double x) {
        n += 1;
        double d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    void merge(const Welford& o) {
        if (o.n == 0)
            return;
        if (n == 0) {
            *this = o;
            return;
        }
        double total = n + o.n;
        double d = o.mean - mean;
        mean += d * o.n / total;
        m2 += o.m2 + d * d * n * o.n / total;
        n = total;
    }
    double stderr_() const { return n > 1 ? std::sqrt(m2 / (n - 1) / n) : 0.0; }
};

} // namespace

AssumptionAReport check_assumption_A(const EnvFamily& family, std::span<const double> n_list,
                                     std::int64_t replicates, std::span<const MomentFn> fs,
                                     std::uint64_t seed, unsigned threads) {
    if (replicates < 10000)
        throw ContractError("check_assumption_A needs at least 1e4 replicates");
    const auto& target = family.target();
    std::vector<MomentFn> moments;
    moments.push_back({"h", [&](double w) { return target.h(w); }, target.alpha});
    moments.push_back({"h2",
                       [&](double w) {
                           double x = target.h(w);
                           return x * x;
                       },
                       target.beta()});
    for (const auto& m : fs)
        moments.push_back(m);

    constexpr std::int64_t kChunk = 1 << 16;
    std::int64_t chunks = (replicates + kChunk - 1) / kChunk;

    AssumptionAReport report;
    std::vector<double> previous_error(moments.size(), std::numeric_limits<double>::infinity());
    for (std::size_t ni = 0; ni < n_list.size(); ++ni) {
        EnvLaw law = family.law(n_list[ni]);
        std::vector<std::vector<Welford>> acc(chunks, std::vector<Welford>(moments.size()));
        parallel_for(static_cast<std::size_t>(chunks), threads, [&](std::size_t c) {
            Philox rng(seed, mix64(ni, c));
            std::int64_t begin = static_cast<std::int64_t>(c) * kChunk;
            std::int64_t end = std::min(replicates, begin + kChunk);
            for (std::int64_t i = begin; i < end; ++i) {
                double e = family.sample(law, rng);
                for (std::size_t m = 0; m < moments.size(); ++m)
                    acc[c][m].add(law.v * moments[m].f(e));
            }
        });
        for (std::size_t m = 0; m < moments.size(); ++m) {
            Welford total;
            for (std::int64_t c = 0; c < chunks; ++c)
                total.merge(acc[c][m]);
            MomentRow row;
            row.n = n_list[ni];
            row.moment = moments[m].name;
            row.estimate = total.mean;
            row.stderr_ = total.stderr_();
            row.target = moments[m].target;
            row.exact = law.v * family.expectation(law, moments[m].f);
            double slack = 1e-12 * std::max(1.0, std::fabs(row.target));
            row.inside_band = std::fabs(row.estimate - row.target) <= 3 * row.stderr_ + slack;
            report.inside_bands = report.inside_bands && row.inside_band;
            if (m >= 2 && row.estimate == 0 && row.target > 0)
                report.warning = true;
            double error = std::fabs(row.exact - row.target);
            if (error > previous_error[m] + slack)
                report.errors_shrink = false;
            previous_error[m] = error;
            report.rows.push_back(row);
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Levy path

LevyPath sample_levy_path(const LevyTriplet& triplet, std::span<const double> t_grid,
                          Philox& rng, double eps) {
    if (t_grid.empty() || t_grid.front() != 0)
        throw ContractError("time grid must start at 0");
    for (std::size_t i = 1; i < t_grid.size(); ++i)
        if (!(t_grid[i] > t_grid[i - 1]))
            throw ContractError("time grid must be increasing");
    Region big = Region::abs_at_least(eps);
    double rate = triplet.nu.mass(big);
    if (!std::isfinite(rate))
        throw ConfigError("jump rate above the cutoff is not finite");
    double drift = triplet.alpha - triplet.integrate([&](double w) { return triplet.h(w); }, big);
    double small = triplet.integrate([](double w) { return w * w; }, Region::abs_below(eps));
    double sd = std::sqrt(triplet.sigma * triplet.sigma + small);

    LevyPath path;
    path.discarded_quadratic_mass = small;
    double horizon = t_grid.back();
    Philox jump_rng = rng.split(1);
    if (rate > 0) {
        double t = exponential(jump_rng) / rate;
        while (t <= horizon) {
            path.jump_times.push_back(t);
            path.jump_sizes.push_back(triplet.nu.sample(big, jump_rng));
            t += exponential(jump_rng) / rate;
        }
    }
    path.t.assign(t_grid.begin(), t_grid.end());
    path.y.assign(t_grid.size(), 0.0);
    std::size_t next_jump = 0;
    double brownian = 0;
    double jumps = 0;
    for (std::size_t i = 1; i < t_grid.size(); ++i) {
        double dt = t_grid[i] - t_grid[i - 1];
        if (sd > 0)
            brownian += sd * std::sqrt(dt) * std_normal(rng);
        while (next_jump < path.jump_times.size() && path.jump_times[next_jump] <= t_grid[i])
            jumps += path.jump_sizes[next_jump++];
        path.y[i] = drift * t_grid[i] + brownian + jumps;
    }
    return path;
}

} // namespace jumplim
