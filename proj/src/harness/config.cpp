#include "jumplim/harness/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "jumplim/errors.hpp"

namespace jumplim {

namespace {

std::string escape_key(const std::string& key) {
    std::string out;
    for (char c : key) {
        if (c == '~')
            out += "~0";
        else if (c == '/')
            out += "~1";
        else
            out += c;
    }
    return out;
}

std::string child(const std::string& ptr, const std::string& key) {
    return ptr + "/" + escape_key(key);
}

std::string child(const std::string& ptr, std::size_t index) {
    return ptr + "/" + std::to_string(index);
}

// Object reader that remembers which keys were consumed.
class Obj {
  public:
    Obj(const Json& j, std::string ptr) : j_(j), ptr_(std::move(ptr)) {
        if (!j.is_object())
            throw ConfigError("expected an object", ptr_.empty() ? "/" : ptr_);
    }

    const std::string& ptr() const { return ptr_; }
    std::string at(const std::string& key) const { return child(ptr_, key); }
    bool has(const std::string& key) const { return j_.contains(key); }

    const Json& raw(const std::string& key) {
        if (!j_.contains(key))
            throw ConfigError("missing required key '" + key + "'", at(key));
        seen_.insert(key);
        return j_.at(key);
    }

    double number(const std::string& key) {
        const Json& v = raw(key);
        if (!v.is_number())
            throw ConfigError("expected a number", at(key));
        double x = v.get<double>();
        if (!std::isfinite(x))
            throw ConfigError("expected a finite number", at(key));
        return x;
    }
    double number(const std::string& key, double def) { return has(key) ? number(key) : def; }

    std::int64_t integer(const std::string& key) {
        const Json& v = raw(key);
        if (!v.is_number_integer())
            throw ConfigError("expected an integer", at(key));
        return v.get<std::int64_t>();
    }
    std::int64_t integer(const std::string& key, std::int64_t def) {
        return has(key) ? integer(key) : def;
    }

    std::string string(const std::string& key) {
        const Json& v = raw(key);
        if (!v.is_string())
            throw ConfigError("expected a string", at(key));
        return v.get<std::string>();
    }
    std::string string(const std::string& key, const std::string& def) {
        return has(key) ? string(key) : def;
    }

    bool boolean(const std::string& key, bool def) {
        if (!has(key))
            return def;
        const Json& v = raw(key);
        if (!v.is_boolean())
            throw ConfigError("expected true or false", at(key));
        return v.get<bool>();
    }

    Obj object(const std::string& key) { return Obj(raw(key), at(key)); }

    std::vector<double> numbers(const std::string& key) {
        const Json& v = raw(key);
        if (!v.is_array())
            throw ConfigError("expected an array of numbers", at(key));
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number() || !std::isfinite(v[i].get<double>()))
                throw ConfigError("expected a finite number", child(at(key), i));
            out.push_back(v[i].get<double>());
        }
        return out;
    }

    //! Reject keys that were never read.
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError("unknown key '" + it.key() + "'", at(it.key()));
    }

    void skip(const std::string& key) { seen_.insert(key); }

  private:
    const Json& j_;
    std::string ptr_;
    std::set<std::string> seen_;
};

// Re-throw library configuration errors with the block's pointer attached.
template <class F>
auto located(const std::string& ptr, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError& e) {
        if (!e.pointer().empty())
            throw;
        throw ConfigError(e.what(), ptr);
    }
}

TruncationFn truncation_from_json(Obj o) {
    std::string kind = o.string("kind", "clamp");
    TruncationFn h = TruncationFn::clamp(1.0);
    if (kind == "clamp") {
        double bound = o.number("bound", 1.0);
        if (!(bound > 0))
            throw ConfigError("clamp bound must be positive", o.at("bound"));
        h = TruncationFn::clamp(bound);
    } else if (kind == "smooth") {
        double radius = o.number("radius");
        double bound = o.number("bound");
        h = located(o.ptr(), [&] { return TruncationFn::smooth(radius, bound); });
    } else {
        throw ConfigError("truncation kind must be \"clamp\" or \"smooth\"", o.at("kind"));
    }
    o.finish();
    return h;
}

void add_component(JumpMeasure& nu, Obj o) {
    std::string kind = o.string("kind");
    if (kind == "atom") {
        double w = o.number("w");
        double mass = o.number("mass");
        if (!(mass >= 0))
            throw ConfigError("mass must be nonnegative", o.at("mass"));
        nu.add_atom(w, mass);
    } else if (kind == "slab") {
        Slab s;
        std::string family = o.string("family");
        if (family == "uniform")
            s.family = SlabFamily::Uniform;
        else if (family == "power")
            s.family = SlabFamily::Power;
        else if (family == "exponential")
            s.family = SlabFamily::Exponential;
        else
            throw ConfigError("slab family must be uniform, power or exponential",
                              o.at("family"));
        std::vector<double> support = o.numbers("support");
        if (support.size() != 2 || !(support[0] < support[1]))
            throw ConfigError("support must be [lo, hi] with lo < hi", o.at("support"));
        s.lo = support[0];
        s.hi = support[1];
        if (s.family != SlabFamily::Uniform) {
            const Json& p = o.raw("params");
            if (p.is_number()) {
                s.param = p.get<double>();
            } else if (p.is_array() && p.size() == 1 && p[0].is_number()) {
                s.param = p[0].get<double>();
            } else {
                throw ConfigError("params must be a number or a one-element array",
                                  o.at("params"));
            }
        } else if (o.has("params")) {
            const Json& p = o.raw("params");
            if (!(p.is_array() && p.empty()))
                throw ConfigError("uniform slabs take no parameters", o.at("params"));
        }
        s.mass = o.number("mass");
        if (!(s.mass >= 0))
            throw ConfigError("mass must be nonnegative", o.at("mass"));
        nu.add_slab(s);
    } else {
        throw ConfigError("component kind must be \"atom\" or \"slab\"", o.at("kind"));
    }
    o.finish();
}

LevyTriplet triplet_body(Obj& o, Support support) {
    LevyTriplet t;
    t.alpha = o.number("alpha", 0.0);
    t.sigma = o.number("sigma", 0.0);
    if (!(t.sigma >= 0))
        throw ConfigError("sigma must be nonnegative", o.at("sigma"));
    if (o.has("truncation"))
        t.h = truncation_from_json(o.object("truncation"));
    if (o.has("nu")) {
        const Json& arr = o.raw("nu");
        if (!arr.is_array())
            throw ConfigError("nu must be an array of components", o.at("nu"));
        for (std::size_t i = 0; i < arr.size(); ++i)
            add_component(t.nu, Obj(arr[i], child(o.at("nu"), i)));
    }
    located(o.at("nu"), [&] {
        t.nu.validate(support);
        return 0;
    });
    located(o.ptr(), [&] {
        validate(t, support);
        return 0;
    });
    return t;
}

const char* family_name(SlabFamily f) {
    switch (f) {
    case SlabFamily::Uniform:
        return "uniform";
    case SlabFamily::Power:
        return "power";
    case SlabFamily::Exponential:
        return "exponential";
    }
    return "uniform";
}

std::vector<double> default_wf_grid() {
    std::vector<double> g;
    for (int k = 1; k <= 19; ++k)
        g.push_back(0.05 * k);
    return g;
}

std::vector<double> default_bp_grid() {
    std::vector<double> g;
    for (int k = 1; k <= 50; ++k)
        g.push_back(0.1 * k);
    return g;
}

void require_increasing(const std::vector<double>& xs, const std::string& ptr, bool strict) {
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (strict ? !(xs[i] > xs[i - 1]) : !(xs[i] >= xs[i - 1]))
            throw ConfigError("values must be increasing", child(ptr, i));
}

Interaction interaction_from_json(Obj o) {
    std::string kind = o.string("kind");
    Interaction g;
    if (kind == "zero") {
        g = Interaction::zero();
    } else if (kind == "poly") {
        double c = o.number("c");
        double alpha = o.number("alpha");
        g = located(o.at("alpha"), [&] { return Interaction::poly(c, alpha); });
    } else if (kind == "bounded") {
        double c = o.number("c", 0.0);
        double b = o.number("b");
        g = Interaction::bounded(c, b);
    } else {
        throw ConfigError("interaction kind must be zero, poly or bounded", o.at("kind"));
    }
    o.finish();
    located(o.ptr(), [&] {
        g.check_decay();
        return 0;
    });
    return g;
}

} // namespace

LevyTriplet triplet_from_json(const Json& j, const std::string& pointer, Support support) {
    Obj o(j, pointer);
    LevyTriplet t = triplet_body(o, support);
    o.finish();
    return t;
}

Json triplet_to_json(const LevyTriplet& t) {
    Json j;
    j["alpha"] = t.alpha;
    j["sigma"] = t.sigma;
    Json h;
    if (t.h.kind() == TruncationKind::Clamp) {
        h["kind"] = "clamp";
        h["bound"] = t.h.bound();
    } else {
        h["kind"] = "smooth";
        h["radius"] = t.h.radius();
        h["bound"] = t.h.bound();
    }
    j["truncation"] = h;
    Json nu = Json::array();
    for (const Atom& a : t.nu.atoms())
        nu.push_back({{"kind", "atom"}, {"w", a.w}, {"mass", a.mass}});
    for (const Slab& s : t.nu.slabs()) {
        Json c{{"kind", "slab"},
               {"family", family_name(s.family)},
               {"support", {s.lo, s.hi}},
               {"mass", s.mass}};
        if (s.family != SlabFamily::Uniform)
            c["params"] = Json::array({s.param});
        nu.push_back(c);
    }
    j["nu"] = nu;
    return j;
}

Scenario scenario_from_json(const Json& j) {
    Obj root(j, "");
    Scenario sc;
    sc.name = root.string("name");
    if (sc.name.empty())
        throw ConfigError("name must not be empty", "/name");
    std::string model = root.string("model");
    if (model == "wf")
        sc.model = ModelKind::WF;
    else if (model == "bp")
        sc.model = ModelKind::BP;
    else
        throw ConfigError("model must be \"wf\" or \"bp\"", "/model");

    if (!root.has("seed"))
        throw ConfigError("missing required key 'seed'", "/seed");
    {
        const Json& s = root.raw("seed");
        if (!s.is_number_unsigned())
            throw ConfigError("seed must be a nonnegative integer", "/seed");
        sc.seed = s.get<std::uint64_t>();
    }

    sc.N = root.integer("N", 1000);
    if (sc.N < 1)
        throw ConfigError("N must be at least 1", "/N");
    if (root.has("N_list")) {
        const Json& arr = root.raw("N_list");
        if (!arr.is_array() || arr.empty())
            throw ConfigError("N_list must be a nonempty array of integers", "/N_list");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            if (!arr[i].is_number_integer() || arr[i].get<std::int64_t>() < 1)
                throw ConfigError("N_list entries must be positive integers", child("/N_list", i));
            std::int64_t n = arr[i].get<std::int64_t>();
            if (!sc.N_list.empty() && n <= sc.N_list.back())
                throw ConfigError("N_list must be strictly increasing", child("/N_list", i));
            sc.N_list.push_back(n);
        }
    } else {
        sc.N_list = {sc.N};
    }

    if (root.has("vN")) {
        Obj v = root.object("vN");
        std::string kind = v.string("kind");
        if (kind == "N") {
            sc.v = VRule{};
        } else if (kind == "power" || kind == "custom") {
            sc.v.scale = v.number("scale", 1.0);
            sc.v.exponent = v.number("exponent");
            if (!(sc.v.scale > 0))
                throw ConfigError("scale must be positive", v.at("scale"));
            if (!(sc.v.exponent > 0))
                throw ConfigError("exponent must be positive", v.at("exponent"));
        } else {
            throw ConfigError("vN kind must be \"N\", \"power\" or \"custom\"", v.at("kind"));
        }
        v.finish();
    }

    sc.horizon = root.number("horizon", 1.0);
    if (!(sc.horizon > 0))
        throw ConfigError("horizon must be positive", "/horizon");
    sc.z0 = root.number("z0", sc.model == ModelKind::WF ? 0.5 : 1.0);
    if (sc.model == ModelKind::WF ? !(sc.z0 >= 0 && sc.z0 <= 1) : !(sc.z0 >= 0))
        throw ConfigError(sc.model == ModelKind::WF ? "z0 must lie in [0, 1]"
                                                    : "z0 must be nonnegative",
                          "/z0");

    {
        Obj env = root.object("env");
        std::string family = env.string("family", "constructed");
        env.skip("family");
        LevyTriplet t = triplet_body(env, Support::Environment);
        env.finish();
        if (family == "deterministic") {
            if (t.sigma != 0 || !t.nu.empty())
                throw ConfigError("a deterministic environment takes only alpha", "/env");
            sc.env = located("/env", [&] { return EnvFamily::deterministic(t.alpha, sc.v, t.h); });
        } else if (family == "constructed") {
            sc.env = located("/env", [&] { return EnvFamily::constructed(t, sc.v); });
        } else {
            throw ConfigError("env family must be \"constructed\" or \"deterministic\"",
                              "/env/family");
        }
    }

    if (sc.model == ModelKind::WF) {
        for (const char* key : {"demo", "repro", "interaction", "z_max", "conservative"})
            if (root.has(key))
                throw ConfigError(std::string("key '") + key + "' applies to bp models only",
                                  root.at(key));
        if (!sc.v.identity())
            throw ConfigError("Wright-Fisher generations use v_N = N", "/vN");
        if (root.has("selection")) {
            Obj sel = root.object("selection");
            std::string kind = sel.string("kind");
            if (kind == "example")
                sc.selection = SelectionFn::example();
            else if (kind == "tanh")
                sc.selection = SelectionFn::tanh_form();
            else
                throw ConfigError("selection kind must be \"example\" or \"tanh\"",
                                  sel.at("kind"));
            sel.finish();
        }
        std::string conv = root.string("drift_convention", "lemma");
        if (conv == "lemma")
            sc.convention = DriftConvention::Lemma;
        else if (conv == "paper_literal")
            sc.convention = DriftConvention::PaperLiteral;
        else
            throw ConfigError("drift_convention must be \"lemma\" or \"paper_literal\"",
                              "/drift_convention");
    } else {
        for (const char* key : {"selection", "drift_convention"})
            if (root.has(key))
                throw ConfigError(std::string("key '") + key + "' applies to wf models only",
                                  root.at(key));
        sc.z_max = root.number("z_max", 1e6);
        if (!(sc.z_max > 0))
            throw ConfigError("z_max must be positive", "/z_max");
        sc.conservative = root.boolean("conservative", false);

        Obj repro = root.object("repro");
        sc.repro_kind = repro.string("kind");
        if (!sc.v.identity() && sc.repro_kind != "constant_one")
            throw ConfigError("this reproduction law is scaled for v_N = N", "/vN");
        if (sc.repro_kind == "logistic_feller" || sc.repro_kind == "constant_one") {
            for (const char* key : {"demo", "interaction"})
                if (root.has(key))
                    throw ConfigError(std::string("key '") + key + "' is implied by repro kind " +
                                          sc.repro_kind,
                                      root.at(key));
        }
        if (sc.repro_kind == "logistic_feller") {
            double sigma = repro.number("sigma_D");
            double alpha = repro.number("alpha_D", 0.0);
            double c = repro.number("c", 0.0);
            auto law = located("/repro", [&] {
                return std::make_shared<const LogisticFellerRepro>(sigma, alpha, c);
            });
            sc.repro = law;
            sc.demo = law->limit_demo();
            sc.g = law->limit_g();
        } else if (sc.repro_kind == "constant_one") {
            sc.repro = make_constant_one();
        } else if (sc.repro_kind == "appendix" || sc.repro_kind == "coop_gw") {
            sc.demo = triplet_from_json(root.raw("demo"), "/demo", Support::Demographic);
            if (root.has("interaction"))
                sc.g = interaction_from_json(root.object("interaction"));
            if (sc.repro_kind == "appendix") {
                sc.repro = located("/demo", [&] { return AppendixRepro::from_triplet(sc.demo, sc.g); });
            } else {
                sc.repro = located("/demo", [&] { return CoopGWRepro::from_triplet(sc.demo, sc.g); });
            }
        } else {
            throw ConfigError(
                "repro kind must be appendix, coop_gw, logistic_feller or constant_one",
                "/repro/kind");
        }
        repro.finish();
    }

    sc.t_grid = root.has("grid") ? root.numbers("grid") : std::vector<double>{sc.horizon};
    if (sc.t_grid.empty())
        throw ConfigError("grid must not be empty", "/grid");
    require_increasing(sc.t_grid, "/grid", true);
    for (std::size_t i = 0; i < sc.t_grid.size(); ++i)
        if (!(sc.t_grid[i] > 0 && sc.t_grid[i] <= sc.horizon))
            throw ConfigError("grid times must lie in (0, horizon]", child("/grid", i));

    sc.z_grid = root.has("z_grid") ? root.numbers("z_grid")
                                   : (sc.model == ModelKind::WF ? default_wf_grid()
                                                                : default_bp_grid());
    if (sc.z_grid.empty())
        throw ConfigError("z_grid must not be empty", "/z_grid");
    require_increasing(sc.z_grid, "/z_grid", true);
    for (std::size_t i = 0; i < sc.z_grid.size(); ++i) {
        double z = sc.z_grid[i];
        if (sc.model == ModelKind::WF ? !(z >= 0 && z <= 1) : !(z >= 0))
            throw ConfigError("z_grid value outside the state space", child("/z_grid", i));
    }

    sc.b_grid = root.has("b_grid") ? root.numbers("b_grid")
                                   : std::vector<double>{0.05, 0.1, 0.2, 0.5, 1, 1.5, 2, 3};
    require_increasing(sc.b_grid, "/b_grid", true);
    for (std::size_t i = 0; i < sc.b_grid.size(); ++i)
        if (!(sc.b_grid[i] > 0))
            throw ConfigError("b_grid values must be positive", child("/b_grid", i));

    if (root.has("tests")) {
        const Json& arr = root.raw("tests");
        if (!arr.is_array() || arr.empty())
            throw ConfigError("tests must be a nonempty array of {k, ell}", "/tests");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            Obj t(arr[i], child("/tests", i));
            TestSpec spec;
            spec.k = static_cast<int>(t.integer("k"));
            spec.ell = t.number("ell", 0.0);
            if (spec.k < 1 || spec.k > kMaxDefaultK)
                throw ConfigError("k must lie in [1, 12]", t.at("k"));
            if (!(spec.ell >= 0))
                throw ConfigError("ell must be nonnegative", t.at("ell"));
            t.finish();
            sc.tests.push_back(spec);
        }
    } else {
        sc.tests = {{1, 0.0}};
    }

    sc.replicates = root.integer("replicates", 1000);
    if (sc.replicates < 100)
        throw ConfigError("replicates must be at least 100", "/replicates");
    sc.inner_replicates = root.integer("inner_replicates", 10000);
    if (sc.inner_replicates < 100)
        throw ConfigError("inner_replicates must be at least 100", "/inner_replicates");
    std::string mode = root.string("mode", "env_exact");
    if (mode == "env_exact")
        sc.mode = GMode::EnvExact;
    else if (mode == "env_only")
        sc.mode = GMode::EnvOnly;
    else if (mode == "full_mc")
        sc.mode = GMode::FullMC;
    else
        throw ConfigError("mode must be env_exact, env_only or full_mc", "/mode");
    if (sc.model == ModelKind::BP && sc.mode == GMode::EnvExact && !sc.repro->has_laplace())
        throw ConfigError("env_exact mode needs a reproduction law with atom-only jumps", "/mode");

    sc.dt = root.number("dt", 1e-3);
    if (!(sc.dt > 0 && sc.dt <= sc.horizon))
        throw ConfigError("dt must lie in (0, horizon]", "/dt");
    sc.eps = root.number("eps", 1e-3);
    if (!(sc.eps > 0 && sc.eps <= 1))
        throw ConfigError("eps must lie in (0, 1]", "/eps");
    sc.bootstrap = static_cast<int>(root.integer("bootstrap", 500));
    if (sc.bootstrap < 10)
        throw ConfigError("bootstrap must be at least 10", "/bootstrap");
    sc.output = root.string("output", "out/" + sc.name);

    root.finish();

    // Build the limit spec once so coefficient problems surface as config errors.
    located("", [&] {
        sc.limit_spec();
        return 0;
    });
    return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open scenario file " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        std::ostringstream os;
        os << "malformed JSON at byte " << e.byte << ": " << e.what();
        throw ConfigError(os.str(), "/");
    }
    return scenario_from_json(j);
}

WFModel Scenario::wf_model(std::int64_t n) const {
    WFModel m;
    m.N = n;
    m.p = selection;
    m.env = env;
    m.z0 = z0;
    return m;
}

BPModel Scenario::bp_model(std::int64_t n) const {
    BPModel m;
    m.N = n;
    m.repro = repro;
    m.env = env;
    m.demo = demo;
    m.g = g;
    m.z0 = z0;
    m.z_max = z_max;
    return m;
}

SdeSpec Scenario::limit_spec() const {
    if (model == ModelKind::WF)
        return wf_limit_sde_spec(env.target(), selection, eps, convention);
    return bpile_z_spec(env.target(), demo, g, eps, z_max);
}

} // namespace jumplim
