#include "filterlab/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "filterlab/csv.hpp"
#include "filterlab/errors.hpp"

namespace filterlab {

bool RunReport::all_pass() const {
    return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

std::string json_escape(const std::string& s) {
    std::string out = "\"";
    for (unsigned char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default:
                if (c < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out += static_cast<char>(c);
                }
        }
    }
    return out + "\"";
}

// JSON has no inf or nan; those go out as strings.
std::string json_number(double v) {
    if (std::isfinite(v)) return fmt17(v);
    return json_escape(std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf"));
}

std::string summary_json(const RunReport& r) {
    std::string o = "{\n";
    o += "  \"software\": " + json_escape(kSoftwareVersion) + ",\n";
    o += "  \"command\": " + json_escape(r.command) + ",\n";
    o += "  \"seed\": " + std::to_string(r.seed) + ",\n";
    o += "  \"config_hash\": " + json_escape(config_hash(r.config)) + ",\n";
    o += "  \"config\": " + json_escape(to_yaml(r.config)) + ",\n";
    o += "  \"all_pass\": " + std::string(r.all_pass() ? "true" : "false") + ",\n";
    o += "  \"verdicts\": [";
    for (std::size_t i = 0; i < r.verdicts.size(); ++i) {
        const auto& v = r.verdicts[i];
        o += i ? ",\n    {" : "\n    {";
        o += "\"test\": " + json_escape(v.test);
        o += ", \"operation\": " + json_escape(v.operation);
        o += ", \"anchor\": " + json_escape(v.anchor);
        o += ", \"pass\": " + std::string(v.pass ? "true" : "false");
        o += ", \"metrics\": {";
        for (std::size_t m = 0; m < v.metrics.size(); ++m)
            o += (m ? ", " : "") + json_escape(v.metrics[m].name) + ": " + json_number(v.metrics[m].value);
        o += "}";
        if (!v.note.empty()) o += ", \"note\": " + json_escape(v.note);
        o += "}";
    }
    o += r.verdicts.empty() ? "],\n" : "\n  ],\n";
    auto files = r.files;
    std::sort(files.begin(), files.end());
    o += "  \"files\": [";
    for (std::size_t i = 0; i < files.size(); ++i) o += (i ? ", " : "") + json_escape(files[i]);
    o += "]\n}\n";
    return o;
}

std::filesystem::path write_summary(const RunReport& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto p = dir / "summary.json";
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << summary_json(r);
    return p;
}

std::filesystem::path write_timings(const std::vector<std::pair<std::string, double>>& seconds,
                                    const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto p = dir / "timings.json";
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << "{";
    for (std::size_t i = 0; i < seconds.size(); ++i)
        out << (i ? ",\n  " : "\n  ") << json_escape(seconds[i].first) << ": " << json_number(seconds[i].second);
    out << "\n}\n";
    return p;
}

}  // namespace filterlab
