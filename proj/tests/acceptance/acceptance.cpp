// Acceptance suite: one PASS/FAIL line per criterion.
//
//   jumplim_acceptance [-c N ...] [-j threads]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "jumplim/branching.hpp"
#include "jumplim/distributions.hpp"
#include "jumplim/harness/config.hpp"
#include "jumplim/harness/experiments.hpp"
#include "jumplim/levy.hpp"
#include "jumplim/parallel.hpp"
#include "jumplim/stats.hpp"
#include "jumplim/testfn.hpp"
#include "jumplim/wright_fisher.hpp"

using namespace jumplim;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and sizes.
constexpr double kIdentityTol = 1e-12;
constexpr double kDecompTol = 1e-6;
constexpr double kGeneratorTol = 1e-9;
constexpr std::int64_t kEnvDraws = 1000000;
constexpr double kClassicalDriftTol = 1e-10;
constexpr std::int64_t kLawPaths = 5000;
constexpr double kFellerZ0 = 1.0;
constexpr double kFellerAlpha = 0.5;
constexpr double kFellerSigma = 0.5;
constexpr double kFellerT = 1.0;
constexpr double kFellerDt = 1e-3;
constexpr std::int64_t kFellerPaths = 100000;
constexpr double kSigmaBand = 3.0;

unsigned g_threads = 1;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

Json scenario_json(const std::string& name) {
    fs::path p = fs::path(JUMPLIM_SCENARIO_DIR) / (name + ".json");
    std::ifstream in(p);
    return Json::parse(in);
}

std::string failed_flags(const ExperimentResult& r) {
    std::string out;
    for (const auto& f : r.flags)
        if (!f.passed)
            out += (out.empty() ? "" : "; ") + f.name;
    return out;
}

bool check_flags(const ExperimentResult& r, const std::string& what, std::string& detail) {
    std::string bad = failed_flags(r);
    if (!detail.empty())
        detail += ", ";
    detail += what + (bad.empty() ? " ok" : " failed [" + bad + "]");
    return bad.empty();
}

// 1. Binomial identities and decomposition coefficients.
Outcome identities() {
    const SumArgs grid[10] = {{0.0, 0.0, 0.0}, {0.1, 0.5, 0.0}, {0.25, 1.0, 0.5}, {0.5, 0.2, 1.0},
                              {0.75, 2.0, 0.3}, {1.0, 0.05, 2.0}, {1.5, 1.5, 0.0}, {-0.3, 0.7, 0.7},
                              {0.01, 3.0, 1.2}, {2.0, 0.9, 0.1}};
    double worst = 0;
    for (SumKind kind : {SumKind::I1, SumKind::I2, SumKind::I3, SumKind::I4})
        for (int k = 0; k <= kMaxDefaultK; ++k)
            for (const auto& a : grid)
                worst = std::max(worst, std::fabs(binomial_sum_direct(kind, k, a) -
                                                  binomial_sum_closed(kind, k, a)));

    SpecificTruncation wf_h{IncrementSpace::WF, TruncationFn::clamp(1.0)};
    SpecificTruncation cs_h{IncrementSpace::CSBP, TruncationFn::clamp(1.0)};
    std::vector<std::pair<TestFunction, SpecificTruncation>> fns;
    for (int k : {1, 2, 3})
        for (double l : {0.0, 0.5, 2.0}) {
            fns.emplace_back(TestFunction::wf(k, l), wf_h);
            fns.emplace_back(TestFunction::csbp_kl(k, l), cs_h);
        }
    for (double l : {1.0, 2.0, 3.0})
        fns.emplace_back(TestFunction::csbp_l(l), cs_h);
    double worst_dec = 0;
    for (const auto& [H, h0] : fns) {
        auto a = decompose(H, h0);
        auto b = decompose_numerical([H](double u, double w) { return H(u, w); }, h0);
        for (int i = 0; i < 2; ++i) {
            worst_dec = std::max(worst_dec, std::fabs(a.alpha[i] - b.alpha[i]));
            for (int j = 0; j < 2; ++j)
                worst_dec = std::max(worst_dec, std::fabs(a.beta[i][j] - b.beta[i][j]));
        }
    }
    return {worst <= kIdentityTol && worst_dec <= kDecompTol,
            "max identity error " + fmt("%.2e", worst) + ", max coefficient error " +
                fmt("%.2e", worst_dec)};
}

// 2. Alternating sums of A2 targets against the closed-form generator.
Outcome generator_formula() {
    LevyTriplet env;
    env.alpha = 0.1;
    env.sigma = 0.3;
    env.nu.add_atom(0.5, 0.5).add_atom(-0.3, 0.5).add_atom(2.0, 0.1);
    LevyTriplet demo;
    demo.alpha = 0.2;
    demo.sigma = 0.4;
    demo.nu.add_atom(0.5, 0.5).add_atom(1.5, 0.2);
    double worst = 0;
    for (const auto& g : {Interaction::zero(), Interaction::bounded(0, 1), Interaction::poly(1, 2)})
        for (int k = 1; k <= 4; ++k)
            for (double ell : {0.0, 0.5, 1.0})
                for (int i = 0; i < 19; ++i) {
                    double z = 0.25 * (i + 1);
                    auto H = TestFunction::csbp_kl(k, ell);
                    worst = std::max(worst, std::fabs(G_limit_csbp(z, H, env, demo, g) -
                                                      G_limit_csbp_assembled(z, H, env, demo, g)));
                }
    return {worst <= kGeneratorTol, "max difference " + fmt("%.2e", worst)};
}

// 3. Moment conditions of the environment families.
Outcome environment_scaling() {
    LevyTriplet diffusive;
    diffusive.alpha = 0.3;
    diffusive.sigma = 0.5;
    LevyTriplet jumps;
    jumps.alpha = 0.1;
    jumps.nu.add_atom(0.5, 1.0).add_atom(-0.4, 0.5);
    struct Family {
        std::string name;
        EnvFamily f;
    };
    std::vector<Family> families{{"deterministic", EnvFamily::deterministic(1.0)},
                                 {"diffusive", EnvFamily::constructed(diffusive)},
                                 {"atom-jump", EnvFamily::constructed(jumps)}};
    std::vector<double> ns{100, 1000, 10000};
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < families.size(); ++i) {
        const auto& fam = families[i];
        std::vector<MomentFn> fs{indicator_moment(fam.f.target().nu, 0.3, 0.7)};
        auto r = check_assumption_A(fam.f, ns, kEnvDraws, fs, 300 + i, g_threads);
        std::string bad;
        for (const auto& row : r.rows)
            if (!row.inside_band)
                bad += " " + row.moment + "@N=" + fmt("%g", row.n) + " (est " +
                       fmt("%.3g", row.estimate) + ", target " + fmt("%.3g", row.target) +
                       ", se " + fmt("%.2g", row.stderr_) + ")";
        ok = ok && r.passed();
        detail += (detail.empty() ? "" : "; ") + fam.name + ": " +
                  (r.inside_bands ? "inside bands" : "outside band" + bad) + ", " +
                  (r.errors_shrink ? "errors shrink" : "errors do not shrink");
    }
    return {ok, detail};
}

// 4. Wright-Fisher characteristics, atom environment and deterministic selection.
Outcome wf_characteristics() {
    std::string detail;
    Scenario sc = scenario_from_json(scenario_json("wf-example-p"));
    bool ok = check_flags(run_characteristic_convergence(sc, g_threads), "atom env", detail);

    Json j = scenario_json("wf-example-p");
    j["env"] = Json{{"family", "deterministic"}, {"alpha", 1.0}};
    Scenario det = scenario_from_json(j);
    ok = check_flags(run_characteristic_convergence(det, g_threads), "deterministic s=1", detail) && ok;

    double worst = 0;
    for (const auto& t : det.tests)
        for (double z : det.z_grid) {
            double zz = z * (1 - z);
            double classical = 1.0 * (t.k * zz + t.ell) - 0.5 * t.k * t.k * zz;
            worst = std::max(worst, std::fabs(G_limit_wf(z, TestFunction::wf(t.k, t.ell),
                                                          det.env.target(), det.selection) -
                                              classical));
        }
    ok = ok && worst <= kClassicalDriftTol;
    detail += ", limit vs s z(1-z) drift " + fmt("%.1e", worst);
    return {ok, detail};
}

// 5. A2 residuals for the appendix construction and the logistic law.
Outcome a2_certification() {
    std::string detail;
    bool ok = true;
    for (const char* name : {"bpile-appendix", "logistic-feller"}) {
        Scenario sc = scenario_from_json(scenario_json(name));
        sc.N_list = {100, 1000, 10000};
        ok = check_flags(run_characteristic_convergence(sc, g_threads), name, detail) && ok;
    }
    return {ok, detail};
}

std::string w1_trend(const ExperimentResult& r) {
    const Table& t = r.table("law.csv");
    auto n = t.column("N");
    auto tt = t.column("t");
    auto w = t.column("w1");
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (tt[i] == tt.back())
            s += (s.empty() ? "" : " ") + fmt("%.2e", w[i]);
    return "W1(t=" + fmt("%g", tt.back()) + ") " + s;
}

// 6. Law convergence for Wright-Fisher, neutral and selected.
Outcome wf_law() {
    std::string detail;
    bool ok = true;
    for (double s : {0.0, 1.0}) {
        Json j = scenario_json("wf-example-p");
        j["env"] = Json{{"family", "deterministic"}, {"alpha", s}};
        j["N_list"] = {500, 2000, 8000};
        j["replicates"] = kLawPaths;
        j["grid"] = {0.5, 1.0};
        Scenario sc = scenario_from_json(j);
        auto r = run_law_convergence(sc, g_threads);
        ok = check_flags(r, "s=" + fmt("%g", s), detail) && ok;
        detail += " " + w1_trend(r);
    }
    return {ok, detail};
}

// 7. Law convergence for the conservative logistic-Feller model.
Outcome bp_law() {
    std::string detail;
    Scenario sc = scenario_from_json(scenario_json("logistic-feller"));
    sc.N_list = {500, 2000, 8000};
    sc.replicates = kLawPaths;
    sc.t_grid = {0.5, 1.0};
    auto r = run_law_convergence(sc, g_threads);
    bool ok = check_flags(r, "logistic-feller", detail);
    const Table& t = r.table("law.csv");
    double events = 0;
    for (double x : t.column("chain_explosions"))
        events += x;
    for (double x : t.column("sde_explosions"))
        events += x;
    ok = ok && events == 0;
    detail += " " + w1_trend(r) + ", explosion events " + fmt("%g", events);
    return {ok, detail};
}

// 8. Explosion fractions, cooperative quadratic and bounded interaction.
Outcome explosions() {
    std::string detail;
    Scenario sc = scenario_from_json(scenario_json("coop-explosion"));
    sc.N_list = {1000, 10000};
    auto r = run_explosion_study(sc, g_threads);
    bool ok = check_flags(r, "g=z^2", detail);
    const Table& t = r.table("explosion.csv");
    auto chain = t.column("chain_fraction");
    auto sde = t.column("sde_fraction");
    detail += " (chain " + fmt("%.3f", chain[0]) + "/" + fmt("%.3f", chain[1]) + ", SDE " +
              fmt("%.3f", sde[0]) + ")";

    Json j = scenario_json("coop-explosion");
    j["interaction"] = Json{{"kind", "bounded"}, {"c", 0}, {"b", 1}};
    Scenario bounded = scenario_from_json(j);
    bounded.N_list = {1000, 10000};
    auto rb = run_explosion_study(bounded, g_threads);
    const Table& tb = rb.table("explosion.csv");
    double total = 0;
    for (double x : tb.column("chain_exploded"))
        total += x;
    for (double x : tb.column("sde_exploded"))
        total += x;
    ok = ok && total == 0;
    detail += ", bounded g explosions " + fmt("%g", total);
    return {ok, detail};
}

struct FellerRun {
    Estimate plain;
    Estimate controlled;
};

// Euler paths of dZ = alpha Z dt + sigma sqrt(Z) dB. The control variate
// subtracts the discounted sum of Brownian increments, a mean-zero martingale,
// which leaves the Euler mean plus boundary corrections.
FellerRun feller_mean(double dt, std::int64_t M) {
    SdeSpec spec = logistic_feller_sde_spec(kFellerAlpha, kFellerSigma, 0.0, 0.0);
    std::size_t n = step_count(kFellerT, dt);
    double h = kFellerT / static_cast<double>(n);
    std::vector<double> weights(n);
    double w = 1;
    for (std::size_t k = n; k-- > 0;) {
        weights[k] = w;
        w *= 1 + kFellerAlpha * h;
    }
    constexpr std::int64_t kChunk = 4096;
    std::size_t chunks = static_cast<std::size_t>((M + kChunk - 1) / kChunk);
    std::vector<RunningStats> plain(chunks), controlled(chunks);
    parallel_for(chunks, g_threads, [&](std::size_t c) {
        std::int64_t begin = static_cast<std::int64_t>(c) * kChunk;
        std::int64_t end = std::min(M, begin + kChunk);
        for (std::int64_t p = begin; p < end; ++p) {
            Philox rng(2024, static_cast<std::uint64_t>(p));
            Philox jumps = rng.split(9);
            Stepper st(spec, State{kFellerZ0, 0, 0, 0});
            double martingale = 0;
            for (std::size_t k = 0; k < n; ++k) {
                double xi[2] = {std_normal(rng), 0.0};
                double z = std::max(st.state()[0], 0.0);
                martingale += weights[k] * kFellerSigma * std::sqrt(z * h) * xi[0];
                st.step(h, xi, jumps);
            }
            double zt = st.state()[0];
            plain[c].add(zt);
            controlled[c].add(zt - martingale);
        }
    });
    RunningStats a, b;
    for (std::size_t c = 0; c < chunks; ++c) {
        a.merge(plain[c]);
        b.merge(controlled[c]);
    }
    return {a.estimate(), b.estimate()};
}

// 9. Feller first moment and its behaviour under step halving.
Outcome integrator() {
    double target = kFellerZ0 * std::exp(kFellerAlpha * kFellerT);
    FellerRun base = feller_mean(kFellerDt, kFellerPaths);
    double err = base.plain.value - target;
    bool first = std::fabs(err) <= kSigmaBand * base.plain.stderr_;

    std::vector<double> errs;
    std::vector<Band> bands;
    std::string trend;
    for (double dt : {4 * kFellerDt, 2 * kFellerDt, kFellerDt, kFellerDt / 2}) {
        FellerRun r = feller_mean(dt, kFellerPaths);
        double e = std::fabs(r.controlled.value - target);
        errs.push_back(e);
        bands.push_back({e - kSigmaBand * r.controlled.stderr_, e + kSigmaBand * r.controlled.stderr_});
        trend += (trend.empty() ? "" : " ") + fmt("%.2e", e);
    }
    bool halving = decreasing_within_bands(errs, bands);
    return {first && halving, "plain error " + fmt("%.2e", err) + " (3se " +
                                  fmt("%.2e", kSigmaBand * base.plain.stderr_) +
                                  "), control-variate error at dt=4e-3..5e-4: " + trend};
}

// 10. h0 checks and the increment functional.
Outcome hypotheses() {
    std::string detail;
    bool ok = true;
    for (const char* name : {"wf-example-p", "bpile-appendix", "logistic-feller"}) {
        Scenario sc = scenario_from_json(scenario_json(name));
        ok = check_flags(run_h0_check(sc, g_threads), std::string("h0 ") + name, detail) && ok;
    }
    Scenario wf = scenario_from_json(scenario_json("wf-example-p"));
    wf.N_list = {100, 1000};
    auto r = run_increment_functional(wf, g_threads);
    ok = check_flags(r, "increments wf-example-p", detail) && ok;
    return {ok, detail};
}

// 11. Serial and parallel runs give byte-identical CSVs.
Outcome determinism() {
    unsigned par = std::max(4u, g_threads);
    std::size_t compared = 0;
    std::string bad;
    auto compare = [&](const std::string& what, const ExperimentResult& a,
                       const ExperimentResult& b) {
        for (std::size_t i = 0; i < a.tables.size(); ++i) {
            ++compared;
            if (i >= b.tables.size() || to_csv(a.tables[i]) != to_csv(b.tables[i]))
                bad += " " + what + "/" + a.tables[i].file;
        }
        if (to_csv(a.flag_table()) != to_csv(b.flag_table()))
            bad += " " + what + "/flags";
    };
    for (const char* name : {"wf-example-p", "bpile-appendix", "logistic-feller"}) {
        Scenario sc = scenario_from_json(scenario_json(name));
        std::string n = name;
        compare(n + ":characteristics", run_characteristic_convergence(sc, 1),
                run_characteristic_convergence(sc, par));
        compare(n + ":h0", run_h0_check(sc, 1), run_h0_check(sc, par));
        compare(n + ":simulate", run_simulate(sc, 1, true), run_simulate(sc, par, true));
        compare(n + ":law", run_law_convergence(sc, 1), run_law_convergence(sc, par));
        if (sc.model == ModelKind::BP) {
            compare(n + ":explosion", run_explosion_study(sc, 1), run_explosion_study(sc, par));
        } else {
            sc.N_list = {100, 1000};
            compare(n + ":increments", run_increment_functional(sc, 1),
                    run_increment_functional(sc, par));
        }
    }
    return {bad.empty(), std::to_string(compared) + " tables compared, 1 vs " +
                             std::to_string(par) + " threads" +
                             (bad.empty() ? "" : ", differing:" + bad)};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"jumplim acceptance suite"};
    std::vector<int> only;
    app.add_option("-c,--criterion", only, "criteria to run (default all)")->check(CLI::Range(1, 11));
    app.add_option("-j,--threads", g_threads, "worker threads");
    CLI11_PARSE(app, argc, argv);
    if (g_threads == 0)
        g_threads = default_threads();

    const std::vector<Criterion> all{
        {1, "identity suite", identities},
        {2, "generator formula", generator_formula},
        {3, "environment scaling", environment_scaling},
        {4, "WF characteristic convergence", wf_characteristics},
        {5, "A2 certification", a2_certification},
        {6, "law convergence WF", wf_law},
        {7, "law convergence BPILE", bp_law},
        {8, "explosion coherence", explosions},
        {9, "integrator verification", integrator},
        {10, "hypothesis checks", hypotheses},
        {11, "determinism", determinism},
    };

    bool all_ok = true;
    for (const auto& c : all) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end())
            continue;
        auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s  %2d %s: %s [%.0fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        all_ok = all_ok && o.pass;
    }
    return all_ok ? 0 : 1;
}
