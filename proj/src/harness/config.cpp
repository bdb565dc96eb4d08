#include "filterlab/harness/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "filterlab/errors.hpp"

namespace filterlab {

namespace {

std::string where(const YAML::Mark& m) {
    if (m.is_null()) return "";
    return "line " + std::to_string(m.line + 1) + ", column " + std::to_string(m.column + 1) + ": ";
}

[[noreturn]] void fail(const YAML::Node& n, const std::string& msg) { throw ConfigurationError(where(n.Mark()) + msg); }

template <class T>
T scalar(const YAML::Node& n, const std::string& key, const char* type) {
    if (!n.IsScalar()) fail(n, "'" + key + "' must be " + type);
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        fail(n, "'" + key + "' must be " + type + ", got '" + n.Scalar() + "'");
    }
}

std::size_t count(const YAML::Node& n, const std::string& key) {
    const auto s = n.IsScalar() ? n.Scalar() : std::string();
    if (!s.empty() && s.front() == '-') fail(n, "'" + key + "' must be a non-negative integer");
    return scalar<std::size_t>(n, key, "a non-negative integer");
}

double positive(const YAML::Node& n, const std::string& key) {
    const double v = scalar<double>(n, key, "a number");
    if (!(v > 0.0) || !std::isfinite(v)) fail(n, "'" + key + "' must be a positive finite number");
    return v;
}

void check_keys(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& where_in) {
    for (const auto& kv : map) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.count(key)) fail(kv.first, "unknown key '" + key + "'" + where_in);
    }
}

std::vector<std::string> names(const YAML::Node& n, const std::string& key) {
    if (!n.IsSequence()) fail(n, "'" + key + "' must be a list of names");
    std::vector<std::string> out;
    for (const auto& e : n) out.push_back(scalar<std::string>(e, key, "a name"));
    return out;
}

template <class T>
void set_once(std::optional<T>& slot, T v, const YAML::Node& n, const std::string& key) {
    if (slot) fail(n, "'" + key + "' is given both at top level and in the scenario table");
    slot = v;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigurationError(where(e.mark) + "malformed YAML: " + e.msg);
    }
    ExperimentConfig c;
    if (root.IsNull()) return c;
    if (!root.IsMap()) fail(root, "top level must be a key-value table");
    check_keys(root, {"scenario", "solver", "dt", "T", "N", "replicas", "seed", "grid", "probes", "output", "resample"},
               "");

    if (auto s = root["scenario"]) {
        if (s.IsScalar()) {
            c.scenario = s.Scalar();
        } else if (s.IsMap()) {
            check_keys(s, {"name", "dt", "T", "N", "replicas", "seed"}, " in scenario table");
            if (!s["name"]) fail(s, "scenario table needs 'name'");
            c.scenario = scalar<std::string>(s["name"], "name", "a name");
            if (s["dt"]) c.dt = positive(s["dt"], "dt");
            if (s["T"]) c.horizon = positive(s["T"], "T");
            if (s["N"]) c.particles = count(s["N"], "N");
            if (s["replicas"]) c.replicas = count(s["replicas"], "replicas");
            if (s["seed"]) c.seed = scalar<std::uint64_t>(s["seed"], "seed", "an unsigned 64-bit integer");
        } else {
            fail(s, "'scenario' must be a name or a table");
        }
        if (!find_scenario(c.scenario)) fail(s, "unknown scenario '" + c.scenario + "'");
    }
    if (auto n = root["dt"]) set_once(c.dt, positive(n, "dt"), n, "dt");
    if (auto n = root["T"]) set_once(c.horizon, positive(n, "T"), n, "T");
    if (auto n = root["N"]) set_once(c.particles, count(n, "N"), n, "N");
    if (auto n = root["replicas"]) set_once(c.replicas, count(n, "replicas"), n, "replicas");
    if (auto n = root["seed"])
        set_once(c.seed, scalar<std::uint64_t>(n, "seed", "an unsigned 64-bit integer"), n, "seed");
    if (auto n = root["solver"]) {
        c.solver = scalar<std::string>(n, "solver", "a name");
        if (c.solver != "particle" && c.solver != "grid" && c.solver != "both")
            fail(n, "'solver' must be particle, grid or both");
    }
    if (auto g = root["grid"]) {
        if (!g.IsMap()) fail(g, "'grid' must be a table");
        check_keys(g, {"x_min", "x_max", "n_points"}, " in grid table");
        if (g["x_min"]) c.grid.x_min = scalar<double>(g["x_min"], "x_min", "a number");
        if (g["x_max"]) c.grid.x_max = scalar<double>(g["x_max"], "x_max", "a number");
        if (g["n_points"]) c.grid.n_points = count(g["n_points"], "n_points");
        try {
            c.grid.validate();
        } catch (const ConfigurationError& e) {
            fail(g, e.what());
        }
    }
    if (auto p = root["probes"]) {
        if (!p.IsMap()) fail(p, "'probes' must be a table");
        check_keys(p, {"phi", "r"}, " in probes table");
        if (p["phi"]) {
            c.phi_probes = names(p["phi"], "phi");
            for (std::size_t i = 0; i < c.phi_probes.size(); ++i)
                if (!test_functions::by_name(c.phi_probes[i]))
                    fail(p["phi"][i], "unknown test function '" + c.phi_probes[i] + "'");
        }
        if (p["r"]) {
            c.r_probes = names(p["r"], "r");
            const auto known = probe_frequencies(1, 1.0);
            for (std::size_t i = 0; i < c.r_probes.size(); ++i)
                if (!find_frequency(known, c.r_probes[i]))
                    fail(p["r"][i], "unknown frequency label '" + c.r_probes[i] + "'");
        }
    }
    if (auto n = root["output"]) c.output = scalar<std::string>(n, "output", "a path");
    if (auto n = root["resample"]) c.resample = scalar<bool>(n, "resample", "true or false");
    // Cross-field checks such as dt dividing T, anchored at the dt entry.
    try {
        (void)resolve_scenario(c);
    } catch (const ConfigurationError& e) {
        const YAML::Node& cr = root;
        YAML::Mark m = cr.Mark();
        if (cr["dt"])
            m = cr["dt"].Mark();
        else if (cr["scenario"].IsMap() && cr["scenario"]["dt"])
            m = cr["scenario"]["dt"].Mark();
        else if (cr["T"])
            m = cr["T"].Mark();
        throw ConfigurationError(where(m) + e.what());
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_yaml(const ExperimentConfig& c) {
    YAML::Emitter e;
    e.SetDoublePrecision(17);
    e << YAML::BeginMap;
    e << YAML::Key << "scenario" << YAML::Value << c.scenario;
    e << YAML::Key << "solver" << YAML::Value << c.solver;
    if (c.dt) e << YAML::Key << "dt" << YAML::Value << *c.dt;
    if (c.horizon) e << YAML::Key << "T" << YAML::Value << *c.horizon;
    if (c.particles) e << YAML::Key << "N" << YAML::Value << static_cast<unsigned long long>(*c.particles);
    if (c.replicas) e << YAML::Key << "replicas" << YAML::Value << static_cast<unsigned long long>(*c.replicas);
    if (c.seed) e << YAML::Key << "seed" << YAML::Value << static_cast<unsigned long long>(*c.seed);
    e << YAML::Key << "grid" << YAML::Value << YAML::Flow << YAML::BeginMap;
    e << YAML::Key << "x_min" << YAML::Value << c.grid.x_min;
    e << YAML::Key << "x_max" << YAML::Value << c.grid.x_max;
    e << YAML::Key << "n_points" << YAML::Value << static_cast<unsigned long long>(c.grid.n_points);
    e << YAML::EndMap;
    e << YAML::Key << "probes" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "phi" << YAML::Value << YAML::Flow << c.phi_probes;
    e << YAML::Key << "r" << YAML::Value << YAML::Flow << c.r_probes;
    e << YAML::EndMap;
    e << YAML::Key << "output" << YAML::Value << c.output;
    e << YAML::Key << "resample" << YAML::Value << c.resample;
    e << YAML::EndMap;
    return std::string(e.c_str()) + "\n";
}

void write_config(const ExperimentConfig& c, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << to_yaml(c);
}

ScenarioSpec resolve_scenario(const ExperimentConfig& c) {
    auto s = find_scenario(c.scenario);
    if (!s) throw ConfigurationError("unknown scenario '" + c.scenario + "'");
    if (c.dt) s->dt = *c.dt;
    if (c.horizon) s->horizon = *c.horizon;
    if (c.particles) s->n_particles = *c.particles;
    if (c.replicas) s->n_replicas = *c.replicas;
    if (c.seed) s->seed = *c.seed;
    s->validate();
    (void)s->time_grid();
    return *s;
}

std::vector<TestFunction> resolve_phis(const ExperimentConfig& c) {
    std::vector<TestFunction> out;
    for (const auto& n : c.phi_probes) {
        auto f = test_functions::by_name(n);
        if (!f) throw ConfigurationError("unknown test function '" + n + "'");
        out.push_back(*f);
    }
    return out;
}

std::vector<FrequencyChoice> resolve_frequencies(const ExperimentConfig& c, std::size_t l_obs, double T) {
    const auto all = probe_frequencies(l_obs, T);
    std::vector<FrequencyChoice> out;
    for (const auto& n : c.r_probes) {
        const auto* f = find_frequency(all, n);
        if (!f) throw ConfigurationError("unknown frequency label '" + n + "'");
        out.push_back(*f);
    }
    return out;
}

std::string config_hash(const ExperimentConfig& c) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : to_yaml(c)) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace filterlab
