#include "jumplim/harness/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "jumplim/distributions.hpp"
#include "jumplim/errors.hpp"
#include "jumplim/parallel.hpp"

namespace jumplim {

namespace {

// Residuals and distances at or below this size count as converged.
constexpr double kFloor = 1e-12;

enum Tag : std::uint64_t {
    kCharTag = 11,
    kH0Tag,
    kIncTag,
    kLawTag,
    kFloorTag,
    kExplTag,
    kSimTag,
    kBootTag,
};

std::uint64_t task_stream(std::uint64_t tag, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0) {
    return mix64(mix64(mix64(tag, a), b), c);
}

std::string fmt(double x) {
    std::ostringstream os;
    os << x;
    return os.str();
}

double time_scale(const Scenario& sc, std::int64_t N) {
    return sc.model == ModelKind::WF ? static_cast<double>(N) : sc.v(static_cast<double>(N));
}

std::vector<std::size_t> generations(double v, std::span<const double> times) {
    std::vector<std::size_t> g;
    for (double t : times)
        g.push_back(static_cast<std::size_t>(std::floor(v * t + 1e-9)));
    return g;
}

struct Summary {
    int j = 0;
    double ell = 0;
    int k = 0;
    std::vector<double> N;
    std::vector<double> sup;
    std::vector<Band> bands;
};

void add_summary_outputs(ExperimentResult& r, const std::vector<Summary>& sums,
                         const std::string& what) {
    Table t{what + "_summary.csv",
            {"j_or_k", "ell", "weight_k", "N", "sup_residual", "band_lo", "band_hi"},
            {}};
    LinePlot plot{"sup residual against N", "N", "sup residual", true, true, {}};
    for (const auto& s : sums) {
        for (std::size_t i = 0; i < s.N.size(); ++i)
            t.add({std::int64_t{s.j}, s.ell, std::int64_t{s.k}, static_cast<std::int64_t>(s.N[i]),
                   s.sup[i], s.bands[i].lo, s.bands[i].hi});
        std::string label = s.k ? "j=" + std::to_string(s.j) + " l=" + fmt(s.ell) +
                                      " k=" + std::to_string(s.k)
                                : "k=" + std::to_string(s.j) + " l=" + fmt(s.ell);
        r.flags.push_back({"decreasing " + label,
                           decreasing_within_bands(s.sup, s.bands, kFloor)});
        plot.series.push_back({label, s.N, s.sup});
    }
    r.tables.push_back(std::move(t));
    r.svgs.emplace_back(what + ".svg", line_plot_svg(plot));
}

} // namespace

bool nonincreasing_within_bands(std::span<const double> values, std::span<const Band> bands) {
    if (values.size() != bands.size())
        throw ContractError("values and bands differ in length");
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[i - 1] && bands[i].lo > bands[i - 1].hi)
            return false;
    return true;
}

bool ExperimentResult::passed() const {
    return std::all_of(flags.begin(), flags.end(), [](const Flag& f) { return f.passed; });
}

const Table& ExperimentResult::table(const std::string& file) const {
    for (const auto& t : tables)
        if (t.file == file)
            return t;
    throw std::out_of_range("no table " + file);
}

Table ExperimentResult::flag_table() const {
    Table t{experiment + "_flags.csv", {"flag", "passed"}, {}};
    for (const auto& f : flags)
        t.add({f.name, std::int64_t{f.passed ? 1 : 0}});
    return t;
}

void write_result(const ExperimentResult& r, const std::filesystem::path& dir, bool svg) {
    for (const auto& t : r.tables)
        write_csv(t, dir);
    if (!r.flags.empty())
        write_csv(r.flag_table(), dir);
    if (svg)
        for (const auto& [name, text] : r.svgs)
            write_text(text, dir / name);
}

// ---------------------------------------------------------------------------
// Characteristics

ExperimentResult run_characteristic_convergence(const Scenario& sc, unsigned threads) {
    ExperimentResult r;
    r.experiment = "characteristics";
    Table rows{"characteristics.csv",
               {"N", "j_or_k", "ell", "weight_k", "z", "estimate", "stderr", "target",
                "abs_residual"},
               {}};
    std::vector<Summary> sums;

    if (sc.model == ModelKind::WF) {
        std::size_t nt = sc.tests.size(), nn = sc.N_list.size(), nz = sc.z_grid.size();
        std::vector<ResidualRow> out(nt * nn * nz);
        parallel_for(out.size(), threads, [&](std::size_t idx) {
            std::size_t ti = idx / (nn * nz), ni = (idx / nz) % nn, zi = idx % nz;
            std::int64_t N = sc.N_list[ni];
            WFModel m = sc.wf_model(N);
            double z = lattice_z(sc.z_grid[zi], N);
            TestFunction H = TestFunction::wf(sc.tests[ti].k, sc.tests[ti].ell);
            Philox rng(sc.seed, task_stream(kCharTag, ti, ni, zi));
            Estimate e = G_N_wf(z, H, m, sc.mode, sc.inner_replicates, rng);
            double target = G_limit_wf(z, H, sc.env.target(), sc.selection);
            out[idx] = ResidualRow{static_cast<double>(N), H.k(), H.ell(), 0, z,
                                   e.value, e.stderr_, target, std::fabs(e.value - target)};
        });
        for (std::size_t ti = 0; ti < nt; ++ti) {
            Summary s{sc.tests[ti].k, sc.tests[ti].ell, 0, {}, {}, {}};
            for (std::size_t ni = 0; ni < nn; ++ni) {
                double sup = 0;
                Band band;
                for (std::size_t zi = 0; zi < nz; ++zi) {
                    const ResidualRow& row = out[(ti * nn + ni) * nz + zi];
                    sup = std::max(sup, row.residual);
                    band.lo = std::max(band.lo, std::max(0.0, row.residual - 3 * row.stderr_));
                    band.hi = std::max(band.hi, row.residual + 3 * row.stderr_);
                }
                s.N.push_back(static_cast<double>(sc.N_list[ni]));
                s.sup.push_back(sup);
                s.bands.push_back(band);
            }
            sums.push_back(std::move(s));
        }
        for (const auto& row : out)
            rows.add({static_cast<std::int64_t>(row.N), std::int64_t{row.j}, row.ell,
                      std::int64_t{0}, row.z, row.estimate, row.stderr_, row.target,
                      row.residual});
    } else {
        std::vector<ResidualConfig> configs;
        for (const auto& t : sc.tests)
            for (int j = 1; j <= t.k; ++j)
                configs.push_back({j, t.ell, t.k});
        ResidualReport rep =
            check_A2(sc.bp_model(sc.N_list.front()), configs, sc.z_grid, sc.N_list, sc.mode,
                     sc.inner_replicates, mix64(sc.seed, kCharTag));
        for (const auto& row : rep.rows)
            rows.add({static_cast<std::int64_t>(row.N), std::int64_t{row.j}, row.ell,
                      std::int64_t{row.k}, row.z, row.estimate, row.stderr_, row.target,
                      row.residual});
        for (const auto& s : rep.summaries)
            sums.push_back({s.config.j, s.config.ell, s.config.k, s.N, s.sup_residual, s.bands});
    }
    r.tables.push_back(std::move(rows));
    add_summary_outputs(r, sums, "characteristics");
    return r;
}

// ---------------------------------------------------------------------------
// H0

ExperimentResult run_h0_check(const Scenario& sc, unsigned threads) {
    ExperimentResult r;
    r.experiment = "h0";
    std::size_t nn = sc.N_list.size(), nz = sc.z_grid.size();
    std::int64_t M = sc.replicates;
    std::vector<std::vector<double>> norms(nn * nz);
    parallel_for(nn * nz, threads, [&](std::size_t idx) {
        std::size_t ni = idx / nz, zi = idx % nz;
        std::int64_t N = sc.N_list[ni];
        double nd = static_cast<double>(N);
        double z = lattice_z(sc.z_grid[zi], N);
        std::int64_t count = std::llround(z * nd);
        Philox rng(sc.seed, task_stream(kH0Tag, ni, zi));
        std::vector<double>& out = norms[idx];
        out.resize(static_cast<std::size_t>(M));
        if (sc.model == ModelKind::WF) {
            WFModel m = sc.wf_model(N);
            EnvLaw law = m.env.law(nd);
            for (std::int64_t i = 0; i < M; ++i) {
                WFStep s = wf_step(m, law, count, rng);
                out[i] = std::hypot(static_cast<double>(s.count) / nd - z, s.env);
            }
        } else {
            BPModel m = sc.bp_model(N);
            EnvLaw law = m.env.law(nd);
            for (std::int64_t i = 0; i < M; ++i) {
                BPStep s = bp_step(m, law, count, rng);
                double next = s.exploded ? std::numeric_limits<double>::infinity()
                                         : static_cast<double>(s.count) / nd;
                out[i] = std::hypot(compactify(next) - compactify(z), s.env);
            }
        }
        std::sort(out.begin(), out.end());
    });

    Table t{"h0.csv", {"N", "b", "z", "exceed", "draws", "estimate", "stderr"}, {}};
    LinePlot plot{"sup_z G^N(1{|x| > b})", "b", "estimate", false, false, {}};
    for (std::size_t ni = 0; ni < nn; ++ni) {
        std::int64_t N = sc.N_list[ni];
        double v = time_scale(sc, N);
        std::vector<double> est;
        std::vector<Band> bands;
        for (double b : sc.b_grid) {
            std::int64_t best = -1;
            std::size_t arg = 0;
            for (std::size_t zi = 0; zi < nz; ++zi) {
                const auto& xs = norms[ni * nz + zi];
                auto c = static_cast<std::int64_t>(xs.end() - std::upper_bound(xs.begin(), xs.end(), b));
                if (c > best) {
                    best = c;
                    arg = zi;
                }
            }
            double p = static_cast<double>(best) / static_cast<double>(M);
            double value = v * p;
            double se = v * std::sqrt(p * (1 - p) / static_cast<double>(M));
            t.add({N, b, lattice_z(sc.z_grid[arg], N), best, M, value, se});
            est.push_back(value);
            bands.push_back({value - 3 * se, value + 3 * se});
        }
        r.flags.push_back({"nonincreasing in b N=" + std::to_string(N),
                           nonincreasing_within_bands(est, bands)});
        plot.series.push_back({"N=" + std::to_string(N), sc.b_grid, est});
    }
    r.tables.push_back(std::move(t));
    r.svgs.emplace_back("h0.svg", line_plot_svg(plot));
    return r;
}

// ---------------------------------------------------------------------------
// Increment functional

ExperimentResult run_increment_functional(const Scenario& sc, unsigned threads) {
    if (sc.mode != GMode::EnvExact)
        throw ConfigError("the increment functional needs env_exact mode", "/mode");
    ExperimentResult r;
    r.experiment = "increments";
    double T = sc.horizon;
    std::int64_t M = sc.replicates;
    Table t{"increments.csv", {"N", "k", "ell", "paths", "mean_sup", "stderr"}, {}};
    std::vector<Summary> sums(sc.tests.size());
    for (std::size_t ti = 0; ti < sc.tests.size(); ++ti) {
        sums[ti].j = sc.tests[ti].k;
        sums[ti].ell = sc.tests[ti].ell;
    }
    for (std::size_t ni = 0; ni < sc.N_list.size(); ++ni) {
        std::int64_t N = sc.N_list[ni];
        double nd = static_cast<double>(N);
        double v = time_scale(sc, N);
        WFModel wf = sc.model == ModelKind::WF ? sc.wf_model(N) : WFModel{};
        BPModel bp = sc.model == ModelKind::BP ? sc.bp_model(N) : BPModel{};

        // Paths as lattice counts; -1 marks the cemetery.
        std::vector<std::vector<std::int64_t>> paths(static_cast<std::size_t>(M));
        parallel_for(paths.size(), threads, [&](std::size_t p) {
            Philox rng(sc.seed, task_stream(kIncTag, ni, p));
            std::vector<double> zs = sc.model == ModelKind::WF ? simulate_wf(wf, T, {}, rng).z
                                                               : simulate_bp(bp, T, {}, rng).z;
            auto& out = paths[p];
            out.reserve(zs.size());
            for (double z : zs)
                out.push_back(std::isfinite(z) ? std::llround(z * nd) : -1);
        });
        std::vector<std::int64_t> states;
        for (const auto& p : paths)
            states.insert(states.end(), p.begin(), p.end());
        std::sort(states.begin(), states.end());
        states.erase(std::unique(states.begin(), states.end()), states.end());
        states.erase(std::remove(states.begin(), states.end(), -1), states.end());

        for (std::size_t ti = 0; ti < sc.tests.size(); ++ti) {
            const TestSpec& ts = sc.tests[ti];
            TestFunction H = sc.model == ModelKind::WF ? TestFunction::wf(ts.k, ts.ell)
                                                       : TestFunction::csbp_kl(ts.k, ts.ell);
            std::vector<double> gN(states.size()), gL(states.size());
            parallel_for(states.size(), threads, [&](std::size_t i) {
                double z = static_cast<double>(states[i]) / nd;
                Philox unused(sc.seed, 0);
                if (sc.model == ModelKind::WF) {
                    gN[i] = G_N_wf(z, H, wf, GMode::EnvExact, 0, unused).value;
                    gL[i] = G_limit_wf(z, H, sc.env.target(), sc.selection);
                } else {
                    gN[i] = G_N_csbp(z, H, bp, GMode::EnvExact, 0, unused).est.value;
                    gL[i] = G_limit_csbp(z, H, sc.env.target(), sc.demo, sc.g);
                }
            });
            auto lookup = [&](std::int64_t c, const std::vector<double>& g) {
                if (c < 0)
                    return 0.0;
                auto it = std::lower_bound(states.begin(), states.end(), c);
                return g[static_cast<std::size_t>(it - states.begin())];
            };
            RunningStats acc;
            for (const auto& path : paths) {
                double d = 0;
                double sup = 0;
                for (std::size_t m = 0; m < path.size(); ++m) {
                    double width = std::min(1.0 / v, T - static_cast<double>(m) / v);
                    double limit = lookup(path[m], gL);
                    sup = std::max({sup, std::fabs(d), std::fabs(d - std::max(width, 0.0) * limit)});
                    d += (lookup(path[m], gN) - limit) / v;
                }
                acc.add(sup);
            }
            Estimate e = acc.estimate();
            t.add({N, std::int64_t{ts.k}, ts.ell, M, e.value, e.stderr_});
            sums[ti].N.push_back(nd);
            sums[ti].sup.push_back(e.value);
            sums[ti].bands.push_back({e.value - 3 * e.stderr_, e.value + 3 * e.stderr_});
        }
    }
    r.tables.push_back(std::move(t));
    LinePlot plot{"increment functional discrepancy", "N", "mean sup discrepancy", true, true, {}};
    for (const auto& s : sums) {
        std::string label = "k=" + std::to_string(s.j) + " l=" + fmt(s.ell);
        r.flags.push_back({"decreasing " + label, decreasing_within_bands(s.sup, s.bands, kFloor)});
        plot.series.push_back({label, s.N, s.sup});
    }
    r.svgs.emplace_back("increments.svg", line_plot_svg(plot));
    return r;
}

// ---------------------------------------------------------------------------
// Law convergence

CoupledMarginals coupled_marginals(const Scenario& sc, std::int64_t N, std::int64_t M,
                                   std::uint64_t stream, unsigned threads) {
    double nd = static_cast<double>(N);
    double v = time_scale(sc, N);
    double dt = 1 / v;
    auto gens = generations(v, sc.t_grid);
    std::size_t last = gens.empty() ? 0 : gens.back();
    SdeSpec spec = sc.limit_spec();
    EnvLaw law = sc.env.law(nd);
    WFModel wf = sc.model == ModelKind::WF ? sc.wf_model(N) : WFModel{};
    BPModel bp = sc.model == ModelKind::BP ? sc.bp_model(N) : BPModel{};
    std::int64_t start = sc.model == ModelKind::WF ? wf.initial_count() : bp.initial_count();

    std::size_t nt = sc.t_grid.size();
    auto mk = [&] {
        return std::vector<std::vector<double>>(nt, std::vector<double>(static_cast<std::size_t>(M)));
    };
    CoupledMarginals out{mk(), mk(), mk(), mk(), 0, 0};
    std::vector<char> chain_boom(static_cast<std::size_t>(M)), sde_boom(static_cast<std::size_t>(M));

    parallel_for(static_cast<std::size_t>(M), threads, [&](std::size_t p) {
        Philox base(sc.seed, mix64(stream, p));
        Philox normals = base.split(1);
        Philox env_rng = base.split(2);
        Philox repro_rng = base.split(3);
        Philox jump_rng = base.split(4);
        State x0{};
        x0[0] = static_cast<double>(start) / nd;
        Stepper st(spec, x0);
        std::int64_t count = start;
        bool exploded = false;
        double walk = 0;
        std::size_t gi = 0;
        auto record = [&](std::size_t k) {
            while (gi < nt && gens[gi] == k) {
                double zc = exploded ? std::numeric_limits<double>::infinity()
                                     : static_cast<double>(count) / nd;
                double zs = st.in_cemetery() ? std::numeric_limits<double>::infinity()
                                             : st.state()[0];
                bool wfm = sc.model == ModelKind::WF;
                out.chain[gi][p] = wfm ? zc : compactify(zc);
                out.sde[gi][p] = wfm ? zs : compactify(zs);
                out.chain_env[gi][p] = walk;
                out.sde_env[gi][p] = st.in_cemetery() ? 0.0 : st.state()[1];
                ++gi;
            }
        };
        record(0);
        for (std::size_t k = 1; k <= last; ++k) {
            double xi[2] = {std_normal(normals), std_normal(normals)};
            double e = sc.env.sample_coupled(law, xi[1], env_rng);
            if (sc.model == ModelKind::WF) {
                double p_sel = checked_probability(wf.p(static_cast<double>(count) / nd, e));
                count = binomial_coupled(N, p_sel, xi[0]);
            } else if (!exploded && count > 0) {
                count = bp.repro->sample_sum_coupled(count, e, N, xi[0], repro_rng);
                if (count == kCountOverflow || static_cast<double>(count) / nd > bp.z_max)
                    exploded = true;
            }
            walk += e;
            st.step(dt, xi, jump_rng);
            record(k);
        }
        chain_boom[p] = exploded;
        sde_boom[p] = st.in_cemetery();
    });
    out.chain_explosions = std::count(chain_boom.begin(), chain_boom.end(), 1);
    out.sde_explosions = std::count(sde_boom.begin(), sde_boom.end(), 1);
    return out;
}

namespace {

struct SdeRun {
    std::vector<State> at;
    bool cemetery = false;
    std::vector<JumpRecord> jumps;
};

SdeRun run_sde(const Scenario& sc, const SdeSpec& spec, double dt, Philox& base, bool log_jumps) {
    std::size_t steps = step_count(sc.horizon, dt);
    double h = sc.horizon / static_cast<double>(steps);
    std::vector<std::size_t> marks;
    for (double t : sc.t_grid)
        marks.push_back(static_cast<std::size_t>(std::llround(t / h)));
    State x0{};
    x0[0] = sc.z0;
    Philox normals = base.split(1);
    Philox jump_rng = base.split(4);
    Stepper st(spec, x0, log_jumps);
    SdeRun run;
    std::size_t gi = 0;
    auto record = [&](std::size_t k) {
        while (gi < marks.size() && marks[gi] == k) {
            State s = st.state();
            if (st.in_cemetery())
                s[0] = std::numeric_limits<double>::infinity();
            run.at.push_back(s);
            ++gi;
        }
    };
    record(0);
    for (std::size_t k = 1; k <= steps; ++k) {
        double xi[kMaxDim];
        for (std::size_t d = 0; d < spec.dim; ++d)
            xi[d] = std_normal(normals);
        st.step(h, std::span<const double>(xi, spec.dim), jump_rng);
        record(k);
    }
    run.cemetery = st.in_cemetery();
    if (log_jumps)
        run.jumps = std::move(st.jump_log());
    return run;
}

} // namespace

std::vector<std::vector<double>> sde_marginals(const Scenario& sc, double dt, std::int64_t M,
                                               std::uint64_t stream, unsigned threads) {
    SdeSpec spec = sc.limit_spec();
    std::vector<std::vector<double>> out(sc.t_grid.size(),
                                         std::vector<double>(static_cast<std::size_t>(M)));
    parallel_for(static_cast<std::size_t>(M), threads, [&](std::size_t p) {
        Philox base(sc.seed, mix64(stream, p));
        SdeRun run = run_sde(sc, spec, dt, base, false);
        for (std::size_t i = 0; i < run.at.size(); ++i)
            out[i][p] = sc.model == ModelKind::WF ? run.at[i][0] : compactify(run.at[i][0]);
    });
    return out;
}

ExperimentResult run_law_convergence(const Scenario& sc, unsigned threads) {
    ExperimentResult r;
    r.experiment = "law";
    std::int64_t M = sc.replicates;
    std::size_t nt = sc.t_grid.size();
    auto floor_a = sde_marginals(sc, sc.dt, M, task_stream(kFloorTag, 0), threads);
    auto floor_b = sde_marginals(sc, sc.dt, M, task_stream(kFloorTag, 1), threads);
    std::vector<double> floors(nt);
    for (std::size_t ti = 0; ti < nt; ++ti)
        floors[ti] = wasserstein1(floor_a[ti], floor_b[ti]);

    Table t{"law.csv",
            {"N", "t", "w1", "band_lo", "band_hi", "w1_env", "floor", "chain_explosions",
             "sde_explosions", "paths"},
            {}};
    std::vector<std::vector<double>> w1(nt);
    std::vector<std::vector<Band>> bands(nt);
    std::int64_t explosions = 0;
    CoupledMarginals last;
    for (std::size_t ni = 0; ni < sc.N_list.size(); ++ni) {
        std::int64_t N = sc.N_list[ni];
        CoupledMarginals cm = coupled_marginals(sc, N, M, task_stream(kLawTag, ni), threads);
        explosions += cm.chain_explosions + cm.sde_explosions;
        for (std::size_t ti = 0; ti < nt; ++ti) {
            double d = wasserstein1(cm.chain[ti], cm.sde[ti]);
            Band b = bootstrap_w1_band(cm.chain[ti], cm.sde[ti], sc.bootstrap,
                                       mix64(sc.seed, task_stream(kBootTag, ni, ti)));
            double de = wasserstein1(cm.chain_env[ti], cm.sde_env[ti]);
            t.add({N, sc.t_grid[ti], d, b.lo, b.hi, de, floors[ti], cm.chain_explosions,
                   cm.sde_explosions, M});
            w1[ti].push_back(d);
            bands[ti].push_back(b);
        }
        if (ni + 1 == sc.N_list.size())
            last = std::move(cm);
    }
    std::vector<double> Ns(sc.N_list.begin(), sc.N_list.end());
    LinePlot plot{"W1 between chain and limit marginals", "N", "W1", true, true, {}};
    for (std::size_t ti = 0; ti < nt; ++ti) {
        std::string label = "t=" + fmt(sc.t_grid[ti]);
        r.flags.push_back({"decreasing " + label, decreasing_within_bands(w1[ti], bands[ti], kFloor)});
        r.flags.push_back({"within 3x floor " + label, w1[ti].back() <= 3 * floors[ti]});
        plot.series.push_back({label, Ns, w1[ti]});
    }
    if (sc.model == ModelKind::BP && sc.conservative)
        r.flags.push_back({"no explosions", explosions == 0});
    r.tables.push_back(std::move(t));
    r.svgs.emplace_back("law.svg", line_plot_svg(plot));
    Histogram hist{"marginals at t=" + fmt(sc.t_grid.back()) + ", N=" +
                       std::to_string(sc.N_list.back()),
                   sc.model == ModelKind::WF ? "z" : "exp(-z)",
                   40,
                   {{"chain", last.chain.back()}, {"sde", last.sde.back()}}};
    r.svgs.emplace_back("law_marginals.svg", histogram_svg(hist));
    return r;
}

// ---------------------------------------------------------------------------
// Explosion study

ExperimentResult run_explosion_study(const Scenario& sc, unsigned threads) {
    if (sc.model != ModelKind::BP)
        throw ConfigError("the explosion study needs a bp model", "/model");
    ExperimentResult r;
    r.experiment = "explosion";
    std::int64_t M = sc.replicates;
    double T = sc.horizon;
    double Mf = static_cast<double>(M);

    SdeSpec spec = sc.limit_spec();
    std::vector<char> sde(static_cast<std::size_t>(M));
    parallel_for(sde.size(), threads, [&](std::size_t p) {
        Philox base(sc.seed, task_stream(kExplTag, 0, p));
        Philox normals = base.split(1);
        Philox jump_rng = base.split(4);
        State x0{};
        x0[0] = sc.z0;
        Stepper st(spec, x0);
        std::size_t steps = step_count(T, sc.dt);
        double h = T / static_cast<double>(steps);
        for (std::size_t k = 0; k < steps && !st.in_cemetery(); ++k) {
            double xi[2] = {std_normal(normals), std_normal(normals)};
            st.step(h, xi, jump_rng);
        }
        sde[p] = st.in_cemetery();
    });
    std::int64_t sde_k = std::count(sde.begin(), sde.end(), 1);
    double f2 = static_cast<double>(sde_k) / Mf;
    Band w2 = wilson_interval(sde_k, M);

    Table t{"explosion.csv",
            {"N", "paths", "chain_exploded", "chain_fraction", "chain_lo", "chain_hi",
             "sde_exploded", "sde_fraction", "sde_lo", "sde_hi"},
            {}};
    std::vector<double> Ns, fc, fs;
    double grid[1] = {T};
    for (std::size_t ni = 0; ni < sc.N_list.size(); ++ni) {
        std::int64_t N = sc.N_list[ni];
        BPModel m = sc.bp_model(N);
        std::vector<char> boom(static_cast<std::size_t>(M));
        parallel_for(boom.size(), threads, [&](std::size_t p) {
            Philox rng(sc.seed, task_stream(kExplTag, ni + 1, p));
            boom[p] = simulate_bp(m, T, grid, rng).explosion_time.has_value();
        });
        std::int64_t k = std::count(boom.begin(), boom.end(), 1);
        double f1 = static_cast<double>(k) / Mf;
        Band w1 = wilson_interval(k, M);
        t.add({N, M, k, f1, w1.lo, w1.hi, sde_k, f2, w2.lo, w2.hi});
        double se = std::sqrt((f1 * (1 - f1) + f2 * (1 - f2)) / Mf);
        bool agree = se > 0 ? std::fabs(f1 - f2) <= 3 * se : f1 == f2;
        r.flags.push_back({"fractions agree N=" + std::to_string(N), agree});
        Ns.push_back(static_cast<double>(N));
        fc.push_back(f1);
        fs.push_back(f2);
    }
    r.tables.push_back(std::move(t));
    LinePlot plot{"explosion fraction by T=" + fmt(T), "N", "fraction", true, false,
                  {{"chain", Ns, fc}, {"sde", Ns, fs}}};
    r.svgs.emplace_back("explosion.svg", line_plot_svg(plot));
    return r;
}

// ---------------------------------------------------------------------------
// Paths

ExperimentResult run_simulate(const Scenario& sc, unsigned threads, bool limit) {
    ExperimentResult r;
    r.experiment = "simulate";
    std::int64_t M = sc.replicates;
    std::vector<double> grid{0.0};
    grid.insert(grid.end(), sc.t_grid.begin(), sc.t_grid.end());
    bool wfm = sc.model == ModelKind::WF;

    std::vector<std::vector<Cell>> rows(static_cast<std::size_t>(M) * grid.size());
    WFModel wf = wfm ? sc.wf_model(sc.N) : WFModel{};
    BPModel bp = wfm ? BPModel{} : sc.bp_model(sc.N);
    parallel_for(static_cast<std::size_t>(M), threads, [&](std::size_t p) {
        Philox rng(sc.seed, task_stream(kSimTag, 0, p));
        auto id = static_cast<std::int64_t>(p);
        if (wfm) {
            WFPath path = simulate_wf(wf, sc.horizon, grid, rng);
            for (std::size_t i = 0; i < grid.size(); ++i)
                rows[p * grid.size() + i] = {path.t[i], path.z[i], path.s[i], id};
        } else {
            BPPath path = simulate_bp(bp, sc.horizon, grid, rng);
            for (std::size_t i = 0; i < grid.size(); ++i)
                rows[p * grid.size() + i] = {path.t[i], path.z[i], path.s[i],
                                             std::int64_t{std::isfinite(path.z[i]) ? 0 : 1}, id};
        }
    });
    Table paths{"paths.csv",
                wfm ? std::vector<std::string>{"t", "z", "s", "path_id"}
                    : std::vector<std::string>{"t", "z", "s", "exploded", "path_id"},
                std::move(rows)};
    r.tables.push_back(std::move(paths));

    if (limit) {
        SdeSpec spec = sc.limit_spec();
        Scenario s2 = sc;
        s2.t_grid = grid;
        std::vector<SdeRun> runs(static_cast<std::size_t>(M));
        parallel_for(runs.size(), threads, [&](std::size_t p) {
            Philox base(sc.seed, task_stream(kSimTag, 1, p));
            runs[p] = run_sde(s2, spec, sc.dt, base, true);
        });
        Table sp{"sde_paths.csv", {"t", "z", "y", "exploded", "path_id"}, {}};
        Table jl{"jumps.csv", {"path_id", "t", "source", "mark", "dz"}, {}};
        for (std::size_t p = 0; p < runs.size(); ++p) {
            auto id = static_cast<std::int64_t>(p);
            for (std::size_t i = 0; i < runs[p].at.size(); ++i) {
                const State& x = runs[p].at[i];
                bool dead = !std::isfinite(x[0]);
                sp.add({grid[i], x[0], dead ? 0.0 : x[1], std::int64_t{dead ? 1 : 0}, id});
            }
            for (const auto& j : runs[p].jumps)
                jl.add({id, j.t, spec.jumps[static_cast<std::size_t>(j.source)].name, j.mark,
                        j.post[0] - j.pre[0]});
        }
        r.tables.push_back(std::move(sp));
        r.tables.push_back(std::move(jl));
    }
    return r;
}

} // namespace jumplim
