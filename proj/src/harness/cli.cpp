#include "jumplim/harness/cli.hpp"

#include <chrono>
#include <functional>
#include <iostream>

#include <CLI11.hpp>

#include "jumplim/errors.hpp"
#include "jumplim/harness/experiments.hpp"
#include "jumplim/parallel.hpp"

namespace jumplim {

namespace {

struct Options {
    std::string scenario;
    std::string out;
    unsigned threads = 1;
    bool no_svg = false;
    bool limit = false;
};

void add_common(CLI::App* cmd, Options& o, bool outputs) {
    cmd->add_option("scenario", o.scenario, "scenario JSON file")->required();
    if (!outputs)
        return;
    cmd->add_option("-o,--out", o.out, "output directory (default: the scenario's output key)");
    cmd->add_option("-j,--threads", o.threads, "worker threads (0 = all cores)");
    cmd->add_flag("--no-svg", o.no_svg, "skip SVG plots");
}

int run(const std::string& name, const Options& o) {
    Scenario sc = load_scenario(o.scenario);
    if (name == "validate-config") {
        std::cout << "ok: " << sc.name << "\n";
        return kExitPass;
    }
    unsigned threads = o.threads == 0 ? default_threads() : o.threads;
    auto start = std::chrono::steady_clock::now();
    ExperimentResult r;
    if (name == "characteristics")
        r = run_characteristic_convergence(sc, threads);
    else if (name == "h0")
        r = run_h0_check(sc, threads);
    else if (name == "increments")
        r = run_increment_functional(sc, threads);
    else if (name == "law")
        r = run_law_convergence(sc, threads);
    else if (name == "explosion")
        r = run_explosion_study(sc, threads);
    else
        r = run_simulate(sc, threads, o.limit);
    double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::filesystem::path dir(o.out.empty() ? sc.output : o.out);
    write_result(r, dir, !o.no_svg);
    Json meta{{"scenario", sc.name},
              {"experiment", r.experiment},
              {"seed", sc.seed},
              {"threads", threads},
              {"seconds", seconds},
              {"passed", r.passed()}};
    if (sc.model == ModelKind::BP || name == "law" || name == "simulate")
        meta["discarded_quadratic_mass"] = sc.limit_spec().discarded_quadratic_mass;
    write_text(meta.dump(2) + "\n", dir / (r.experiment + "_run.json"));

    for (const auto& f : r.flags)
        std::cout << (f.passed ? "PASS " : "FAIL ") << f.name << "\n";
    std::cout << "wrote " << dir.string() << "\n";
    return r.passed() ? kExitPass : kExitFlagFailed;
}

} // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"Scaling-limit experiments for population chains"};
    app.require_subcommand(1);
    Options o;
    std::vector<std::pair<std::string, CLI::App*>> cmds;
    auto sub = [&](const std::string& name, const std::string& help, bool outputs) {
        CLI::App* cmd = app.add_subcommand(name, help);
        add_common(cmd, o, outputs);
        cmds.emplace_back(name, cmd);
        return cmd;
    };
    sub("characteristics", "grid-sup residuals of the characteristics across N", true);
    sub("h0", "tail check sup_z G^N(1{|x| > b}) across b", true);
    sub("increments", "increment-functional discrepancy along paths", true);
    sub("law", "W1 between chain and limit marginals", true);
    sub("explosion", "explosion fractions, chain against the SDE", true);
    sub("simulate", "write chain paths (and SDE paths with --limit)", true)
        ->add_flag("--limit", o.limit, "also integrate the limit SDE");
    sub("validate-config", "parse and check a scenario", false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitPass : kExitConfig;
    }

    std::string name;
    for (const auto& [n, cmd] : cmds)
        if (cmd->parsed())
            name = n;
    try {
        return run(name, o);
    } catch (const ConfigError& e) {
        std::cerr << "config error at " << (e.pointer().empty() ? "/" : e.pointer()) << ": "
                  << e.what() << "\n";
        return kExitConfig;
    } catch (const ModelContractError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace jumplim
