#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "jumplim/branching.hpp"
#include "jumplim/levy.hpp"
#include "jumplim/wright_fisher.hpp"

namespace jumplim {

using Json = nlohmann::json;

//! Parse a triplet block; `pointer` locates it for error messages.
LevyTriplet triplet_from_json(const Json& j, const std::string& pointer, Support support);
Json triplet_to_json(const LevyTriplet& t);

enum class ModelKind { WF, BP };

struct TestSpec {
    int k = 1;
    double ell = 0;
};

struct Scenario {
    std::string name;
    ModelKind model = ModelKind::WF;
    std::int64_t N = 1000;
    std::vector<std::int64_t> N_list;
    VRule v;
    double z0 = 0.5;
    double horizon = 1;

    EnvFamily env = EnvFamily::deterministic(0);

    // Wright-Fisher
    SelectionFn selection = SelectionFn::example();
    DriftConvention convention = DriftConvention::Lemma;

    // Branching
    std::string repro_kind;
    ReproPtr repro;
    LevyTriplet demo;
    Interaction g;
    double z_max = 1e6;
    bool conservative = false;

    std::vector<double> t_grid;
    std::vector<double> z_grid;
    std::vector<double> b_grid;
    std::vector<TestSpec> tests;
    std::int64_t replicates = 1000;
    std::int64_t inner_replicates = 10000;
    GMode mode = GMode::EnvExact;
    double dt = 1e-3;
    double eps = 1e-3;
    int bootstrap = 500;
    std::uint64_t seed = 0;
    std::string output;

    WFModel wf_model(std::int64_t n) const;
    BPModel bp_model(std::int64_t n) const;
    //! Limit SDE in (Z, Y) coordinates.
    SdeSpec limit_spec() const;
};

//! Throws ConfigError with a JSON pointer on any invalid or unknown key.
Scenario scenario_from_json(const Json& j);
Scenario load_scenario(const std::filesystem::path& path);

} // namespace jumplim
