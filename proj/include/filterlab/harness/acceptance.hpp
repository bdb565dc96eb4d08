#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "filterlab/harness/report.hpp"

namespace filterlab {

// Workload sizes of the acceptance run. The defaults are the sizes the
// verdicts are calibrated for; tests shrink them for smoke runs.
struct AcceptOptions {
    std::uint64_t seed = 42;
    std::filesystem::path out = "accept_out";

    std::size_t penrose_trials = 1000;
    std::size_t degenerate_particles = 10000;
    std::size_t kb_particles = 10000;
    std::size_t kb_bootstrap = 200;
    std::size_t refine_replicas = 50;
    std::size_t refine_n0 = 1000;  // particles at dt = 1e-3; scaled as 1/dt
    std::size_t dual_ito_replicas = 50;
    std::size_t duality_replicas = 10000;
    std::size_t duality_particles = 8;
    std::size_t kolmogorov_pairs = 20000;
    std::size_t ortho_replicas = 10000;
    std::size_t unique_replicas = 1000;
    std::size_t unique_particles = 100;
    std::size_t determinism_replicas = 200;
};

struct CriterionResult {
    int id = 0;
    Verdict verdict;
    double seconds = 0.0;  // wall-clock to produce the verdict, shared work included
    double budget = 0.0;   // allowed seconds, 0 = none
};

struct AcceptanceRun {
    RunReport report;
    std::vector<CriterionResult> criteria;
    std::vector<std::pair<std::string, double>> timings;
};

// Runs criteria 1 to 10 and writes summary.json, timings.json and the CSV
// tables into opts.out.
AcceptanceRun run_acceptance(const AcceptOptions& opts, const ExperimentConfig& config);

// seed xor FNV-1a(tag): each sub-experiment draws from its own seed so it can
// be rerun alone.
std::uint64_t sub_seed(std::uint64_t seed, const std::string& tag);

}  // namespace filterlab
