#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "filterlab/frequency.hpp"
#include "filterlab/gridpde.hpp"
#include "filterlab/model.hpp"

namespace filterlab {

// YAML experiment configuration. Every key is optional; unset scenario
// parameters fall back to the built-in scenario's values.
//
//   scenario: correlated_bounded     # or a table: {name: ..., dt: ..., T: ..., N: ..., replicas: ..., seed: ...}
//   solver: particle                 # particle | grid | both
//   dt: 0.001
//   T: 1
//   N: 1000
//   replicas: 1
//   seed: 42
//   grid: {x_min: -8, x_max: 8, n_points: 401}
//   probes: {phi: [bump, tanh], r: [zero, plus1]}
//   output: out
//   resample: false
struct ExperimentConfig {
    std::string scenario = "correlated_bounded";
    std::optional<double> dt;
    std::optional<double> horizon;
    std::optional<std::size_t> particles;
    std::optional<std::size_t> replicas;
    std::optional<std::uint64_t> seed;
    std::string solver = "particle";
    Grid1D grid{};
    std::vector<std::string> phi_probes{"bump", "bump_right", "tanh", "xsq_clipped", "sin"};
    std::vector<std::string> r_probes{"zero", "plus1", "minus1", "steps_a", "steps_b"};
    std::string output = "out";
    bool resample = false;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Throws ConfigurationError; schema messages start with "line L, column C:".
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text);

// Canonical YAML with 17 significant digits; parse_config(to_yaml(c)) == c.
std::string to_yaml(const ExperimentConfig& c);
void write_config(const ExperimentConfig& c, const std::filesystem::path& path);

// Built-in scenario with the config overrides applied and validated
// (including dt dividing T).
ScenarioSpec resolve_scenario(const ExperimentConfig& c);
std::vector<TestFunction> resolve_phis(const ExperimentConfig& c);
std::vector<FrequencyChoice> resolve_frequencies(const ExperimentConfig& c, std::size_t l_obs, double T);

// FNV-1a of the canonical YAML, as 16 hex digits.
std::string config_hash(const ExperimentConfig& c);

}  // namespace filterlab
