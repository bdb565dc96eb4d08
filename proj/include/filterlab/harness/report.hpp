#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "filterlab/harness/config.hpp"

namespace filterlab {

inline constexpr const char* kSoftwareVersion = "filterlab 0.1.0";

struct Metric {
    std::string name;
    double value = 0.0;
};

// One row of a run report: which operation produced it, the source anchor it
// checks, and the statistics behind the verdict.
struct Verdict {
    std::string test;
    std::string operation;
    std::string anchor;
    bool pass = false;
    std::vector<Metric> metrics;
    std::string note;
};

struct RunReport {
    std::string command;
    ExperimentConfig config;
    std::uint64_t seed = 0;
    std::vector<Verdict> verdicts;
    std::vector<std::string> files;  // relative to the output directory

    bool all_pass() const;
};

// summary.json: deterministic key order, floats with 17 significant digits,
// no timings and nothing that depends on the worker count.
std::string summary_json(const RunReport& r);
std::filesystem::path write_summary(const RunReport& r, const std::filesystem::path& dir);

// timings.json, kept apart from the summary because wall-clock varies.
std::filesystem::path write_timings(const std::vector<std::pair<std::string, double>>& seconds,
                                    const std::filesystem::path& dir);

std::string json_escape(const std::string& s);
std::string json_number(double v);

}  // namespace filterlab
