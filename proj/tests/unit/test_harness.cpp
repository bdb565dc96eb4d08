#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "filterlab/errors.hpp"
#include "filterlab/harness/acceptance.hpp"
#include "filterlab/harness/cli.hpp"
#include "filterlab/harness/config.hpp"
#include "filterlab/harness/report.hpp"

using namespace filterlab;

namespace {

struct CliResult {
    int code;
    std::string out, err;
};

CliResult run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "filterlab");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::filesystem::path scratch(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("filterlab_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("empty config gives the defaults") {
    CHECK(parse_config("") == ExperimentConfig{});
    CHECK(parse_config("{}") == ExperimentConfig{});
}

TEST_CASE("config round trip") {
    const auto c = parse_config(
        "scenario: {name: linear_gaussian, dt: 0.002, T: 0.5, N: 300, replicas: 3, seed: 7}\n"
        "solver: both\n"
        "grid: {x_min: -5, x_max: 5, n_points: 101}\n"
        "probes: {phi: [sin, tanh], r: [zero, steps_b]}\n"
        "output: somewhere\n"
        "resample: true\n");
    CHECK(c.scenario == "linear_gaussian");
    CHECK(c.dt.value() == 0.002);
    CHECK(c.particles.value() == 300);
    CHECK(c.seed.value() == 7);
    CHECK(c.grid.n_points == 101);
    CHECK(c.resample);
    CHECK(parse_config(to_yaml(c)) == c);
    CHECK(config_hash(c) == config_hash(parse_config(to_yaml(c))));
    CHECK(config_hash(c).size() == 16);
    CHECK(config_hash(c) != config_hash(ExperimentConfig{}));
}

TEST_CASE("schema errors carry a position") {
    try {
        parse_config("scenario: linear_gaussian\nbogus: 1\n");
        FAIL("accepted an unknown key");
    } catch (const ConfigurationError& e) {
        CHECK(std::string(e.what()).rfind("line 2, column 1:", 0) == 0);
    }
    CHECK_THROWS_AS(parse_config("dt: fast\n"), ConfigurationError);
    CHECK_THROWS_AS(parse_config("solver: magic\n"), ConfigurationError);
    CHECK_THROWS_AS(resolve_scenario(parse_config("dt: 0.003\nT: 1\n")), ConfigurationError);
    CHECK_THROWS_AS(resolve_scenario(parse_config("scenario: nowhere\n")), ConfigurationError);
    CHECK_NOTHROW(resolve_scenario(parse_config("dt: 0.002\nT: 1\n")));
}

TEST_CASE("summary json is deterministic and parseable") {
    RunReport r;
    r.command = "filter";
    r.seed = 42;
    r.verdicts.push_back({"t", "op", "anchor", true, {{"x", 0.1}, {"y", 1e-300}}, "note \"quoted\""});
    r.files = {"a.csv"};
    const auto a = summary_json(r), b = summary_json(r);
    CHECK(a == b);
    const auto j = nlohmann::json::parse(a);
    CHECK(j["verdicts"][0]["pass"] == true);
    CHECK(j["verdicts"][0]["metrics"]["x"].get<double>() == 0.1);
    CHECK(a.find("time") == std::string::npos);
    CHECK(json_number(0.1) == "0.10000000000000001");
    CHECK(json_escape("a\"b\n") == "\"a\\\"b\\n\"");
}

TEST_CASE("sub seeds differ per tag") {
    CHECK(sub_seed(42, "a") != sub_seed(42, "b"));
    CHECK(sub_seed(42, "a") == sub_seed(42, "a"));
    CHECK(sub_seed(42, "") == (42 ^ 0xcbf29ce484222325ull));
}

TEST_CASE("cli exit codes") {
    const auto dir = scratch("cli");
    CHECK(run_cli({"pinv-test", "--trials", "50", "--out", dir.string()}).code == 0);
    CHECK(std::filesystem::exists(dir / "summary.json"));
    CHECK(std::filesystem::exists(dir / "config.yaml"));

    std::ofstream(dir / "bad.yaml") << "nonsense_key: 3\n";
    const auto bad = run_cli({"--config", (dir / "bad.yaml").string(), "pinv-test"});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("line 1, column 1:") != std::string::npos);

    CHECK(run_cli({"no-such-command"}).code == 2);
    CHECK(run_cli({"filter", "--scenario", "nowhere"}).code == 2);
}

TEST_CASE("cli filter on the degenerate scenario") {
    const auto dir = scratch("filter");
    std::ofstream(dir / "c.yaml") << "scenario: {name: degenerate_k0, T: 0.1, N: 200}\n";
    const auto r = run_cli({"--config", (dir / "c.yaml").string(), "--out", dir.string(), "filter"});
    CHECK(r.code == 0);
    const auto j = nlohmann::json::parse(std::ifstream(dir / "summary.json"));
    bool saw = false;
    for (const auto& v : j["verdicts"])
        if (v["test"] == "degenerate stochastic term") {
            saw = true;
            CHECK(v["pass"] == true);
        }
    CHECK(saw);
    CHECK(std::filesystem::exists(dir / "filter.csv"));
    CHECK(std::filesystem::exists(dir / "zakai_residual.csv"));
}

TEST_CASE("cli zakai-grid and simulate") {
    const auto dir = scratch("grid");
    std::ofstream(dir / "c.yaml") << "scenario: {name: decoupled_classical, dt: 0.0005, T: 0.05}\n"
                                     "grid: {x_min: -6, x_max: 6, n_points: 121}\n";
    CHECK(run_cli({"--config", (dir / "c.yaml").string(), "--out", dir.string(), "zakai-grid"}).code == 0);
    CHECK(std::filesystem::exists(dir / "zakai_grid.csv"));
    CHECK(run_cli({"--config", (dir / "c.yaml").string(), "--out", dir.string(), "simulate"}).code == 0);
}
