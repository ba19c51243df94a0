#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "jumplim/errors.hpp"
#include "jumplim/harness/cli.hpp"
#include "jumplim/harness/config.hpp"
#include "jumplim/harness/experiments.hpp"
#include "jumplim/harness/report.hpp"
#include "jumplim/stats.hpp"

using namespace jumplim;
namespace fs = std::filesystem;

namespace {

Json base_wf() {
    return Json::parse(R"({
      "name": "tiny-wf", "model": "wf", "N_list": [50, 200], "z0": 0.5, "horizon": 0.5,
      "env": {"alpha": 0.2, "sigma": 0.3, "nu": [{"kind": "atom", "w": 0.5, "mass": 0.4}]},
      "grid": [0.25, 0.5], "tests": [{"k": 1, "ell": 0}], "replicates": 200,
      "b_grid": [0.1, 0.5, 1.0], "seed": 5
    })");
}

Json base_bp() {
    return Json::parse(R"({
      "name": "tiny-bp", "model": "bp", "N_list": [100, 400], "z0": 1, "horizon": 0.5,
      "repro": {"kind": "logistic_feller", "sigma_D": 0.8, "alpha_D": 0, "c": 1},
      "env": {"alpha": 0, "sigma": 0.5}, "grid": [0.5], "tests": [{"k": 1, "ell": 0}],
      "z_grid": [0.5, 1, 2], "replicates": 200, "conservative": true, "seed": 6
    })");
}

std::string config_pointer(const Json& j) {
    try {
        scenario_from_json(j);
    } catch (const ConfigError& e) {
        return e.pointer();
    }
    return "<accepted>";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(JUMPLIM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("jumplim_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("valid scenarios parse") {
    Scenario wf = scenario_from_json(base_wf());
    CHECK(wf.model == ModelKind::WF);
    CHECK(wf.N_list.size() == 2);
    CHECK(wf.seed == 5);
    CHECK(wf.output == "out/tiny-wf");
    Scenario bp = scenario_from_json(base_bp());
    CHECK(bp.model == ModelKind::BP);
    CHECK(bp.conservative);
    CHECK(bp.repro->kind() == ReproKind::LogisticFeller);
    CHECK(bp.z_grid.size() == 3);
}

TEST_CASE("configuration errors carry the offending pointer") {
    auto j = base_wf();
    j["bogus"] = 1;
    CHECK(config_pointer(j) == "/bogus");

    j = base_wf();
    j.erase("seed");
    CHECK(config_pointer(j) == "/seed");

    j = base_wf();
    j["N_list"] = {100, 50};
    CHECK(config_pointer(j) == "/N_list/1");

    j = base_wf();
    j["env"]["nu"][0]["w"] = -2.0;
    CHECK(config_pointer(j).rfind("/env", 0) == 0);

    j = base_wf();
    j["env"]["sigma"] = -1;
    CHECK(config_pointer(j) == "/env/sigma");

    j = base_wf();
    j["z0"] = 1.5;
    CHECK(config_pointer(j) == "/z0");

    j = base_wf();
    j["tests"][0]["k"] = 20;
    CHECK(config_pointer(j).rfind("/tests/0", 0) == 0);

    j = base_bp();
    j["repro"]["kind"] = "mystery";
    CHECK(config_pointer(j).rfind("/repro", 0) == 0);

    j = base_bp();
    j["vN"] = {{"kind", "power"}, {"scale", 1}, {"exponent", 2}};
    CHECK(config_pointer(j) == "/vN");

    j = base_wf();
    j["model"] = "moran";
    CHECK(config_pointer(j) == "/model");
}

TEST_CASE("csv output is stable and special-cases non-finite values") {
    Table t{"x.csv", {"a", "b", "c"}, {}};
    t.add({std::int64_t{3}, 0.1, std::string("s")});
    t.add({std::int64_t{-1}, std::numeric_limits<double>::infinity(), std::string("t")});
    t.add({std::int64_t{0}, 0.0, std::string("u")});
    std::string csv = to_csv(t);
    CHECK(csv == "a,b,c\n3,0.1,s\n-1,inf,t\n0,0,u\n");
    auto col = t.column("a");
    CHECK(col == std::vector<double>{3, -1, 0});
}

TEST_CASE("svg plots are well formed") {
    LinePlot p{"t", "N", "r", true, true, {{"s", {100, 1000}, {1e-2, 1e-3}}}};
    std::string svg = line_plot_svg(p);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    Histogram h{"h", "z", 10, {{"a", {0.1, 0.2, 0.3}}, {"b", {0.2, 0.4}}}};
    CHECK(histogram_svg(h).find("</svg>") != std::string::npos);
}

TEST_CASE("compactified coordinate and band helpers") {
    CHECK(compactify(0) == 1);
    CHECK(compactify(std::numeric_limits<double>::infinity()) == 0);
    std::vector<double> flat{0.5, 0.5, 0.4};
    std::vector<Band> bands{{0.4, 0.6}, {0.4, 0.6}, {0.3, 0.5}};
    CHECK(nonincreasing_within_bands(flat, bands));
    std::vector<double> up{0.1, 0.9};
    std::vector<Band> apart{{0.0, 0.2}, {0.8, 1.0}};
    CHECK_FALSE(nonincreasing_within_bands(up, apart));
}

TEST_CASE("characteristics of the constant law are exactly zero") {
    Scenario sc = load_scenario(fs::path(JUMPLIM_SCENARIO_DIR) / "constant-one.json");
    auto r = run_characteristic_convergence(sc, 2);
    CHECK(r.passed());
    for (double x : r.table("characteristics.csv").column("abs_residual"))
        CHECK(x == 0);
}

TEST_CASE("flags are recomputable from the emitted summary") {
    Scenario sc = scenario_from_json(base_wf());
    auto r = run_characteristic_convergence(sc, 1);
    const Table& s = r.table("characteristics_summary.csv");
    auto sup = s.column("sup_residual");
    auto lo = s.column("band_lo");
    auto hi = s.column("band_hi");
    std::vector<Band> bands;
    for (std::size_t i = 0; i < sup.size(); ++i)
        bands.push_back({lo[i], hi[i]});
    REQUIRE(r.flags.size() == 1);
    CHECK(r.flags[0].passed == decreasing_within_bands(sup, bands, 1e-12));
}

TEST_CASE("serial and parallel runs give identical tables") {
    for (const Json& j : {base_wf(), base_bp()}) {
        Scenario sc = scenario_from_json(j);
        auto check = [](const ExperimentResult& a, const ExperimentResult& b) {
            REQUIRE(a.tables.size() == b.tables.size());
            for (std::size_t i = 0; i < a.tables.size(); ++i)
                CHECK(to_csv(a.tables[i]) == to_csv(b.tables[i]));
        };
        check(run_h0_check(sc, 1), run_h0_check(sc, 3));
        check(run_law_convergence(sc, 1), run_law_convergence(sc, 3));
        check(run_simulate(sc, 1, true), run_simulate(sc, 3, true));
        if (sc.model == ModelKind::BP)
            check(run_explosion_study(sc, 1), run_explosion_study(sc, 3));
        else
            check(run_increment_functional(sc, 1), run_increment_functional(sc, 3));
    }
}

TEST_CASE("cli exit codes") {
    fs::path dir = scratch("cli");
    fs::path scen(JUMPLIM_SCENARIO_DIR);
    for (const char* name : {"wf-example-p", "bpile-appendix", "logistic-feller", "constant-one",
                             "coop-explosion"})
        CHECK(run_cli("validate-config " + (scen / (std::string(name) + ".json")).string()) == kExitPass);

    CHECK(run_cli("characteristics " + (scen / "constant-one.json").string() + " -o " +
                  (dir / "c1").string() + " --no-svg") == kExitPass);
    CHECK(fs::exists(dir / "c1" / "characteristics.csv"));
    CHECK(fs::exists(dir / "c1" / "characteristics_flags.csv"));

    std::ofstream(dir / "broken.json") << "{\"name\": \"x\", ";
    CHECK(run_cli("validate-config " + (dir / "broken.json").string()) == kExitConfig);
    auto j = base_wf();
    j["extra"] = true;
    std::ofstream(dir / "extra.json") << j.dump();
    CHECK(run_cli("validate-config " + (dir / "extra.json").string()) == kExitConfig);
    CHECK(run_cli("validate-config " + (dir / "missing.json").string()) == kExitConfig);
    CHECK(run_cli("no-such-command") == kExitConfig);
    CHECK(run_cli("--help") == kExitPass);
}

TEST_CASE("cli output is byte-identical across thread counts") {
    fs::path dir = scratch("det");
    auto j = base_bp();
    std::ofstream(dir / "bp.json") << j.dump();
    std::string scen = (dir / "bp.json").string();
    REQUIRE(run_cli("simulate " + scen + " --limit -j 1 -o " + (dir / "a").string()) == kExitPass);
    REQUIRE(run_cli("simulate " + scen + " --limit -j 4 -o " + (dir / "b").string()) == kExitPass);
    for (const char* f : {"paths.csv", "sde_paths.csv", "jumps.csv"})
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
}
