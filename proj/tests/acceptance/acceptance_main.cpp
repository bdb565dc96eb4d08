// Runs `filterlab accept` as a separate process at two worker counts and
// prints one line per criterion. Criterion 10 additionally requires the two
// summary.json files to be byte-identical.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_accept(const fs::path& out, int workers) {
    std::ostringstream cmd;
    cmd << '"' << FILTERLAB_CLI_PATH << "\" accept --seed 42 --workers " << workers << " --out \"" << out.string()
        << "\" > \"" << (out.parent_path() / ("accept_w" + std::to_string(workers) + ".log")).string() << "\" 2>&1";
    return std::system(cmd.str().c_str());
}

}  // namespace

int main() {
    const fs::path base = fs::temp_directory_path() / "filterlab_acceptance";
    fs::remove_all(base);
    fs::create_directories(base);
    // The output path is part of the hashed config, so both runs share it.
    const fs::path out = base / "out";

    const int rc1 = run_accept(out, 1);
    const std::string first = slurp(out / "summary.json");
    const std::string timings = slurp(out / "timings.json");
    const int rc4 = run_accept(out, 4);
    const std::string second = slurp(out / "summary.json");

    if (first.empty()) {
        std::cout << "FAIL accept produced no summary (exit " << rc1 << ")\n";
        return 1;
    }
    const auto j = nlohmann::json::parse(first);
    const auto t = nlohmann::json::parse(timings);
    bool all = true;
    for (const auto& v : j["verdicts"]) {
        const std::string test = v["test"];
        bool pass = v["pass"].get<bool>();
        std::string extra;
        if (test.rfind("C10", 0) == 0) {
            const bool same = first == second;
            pass = pass && same && rc4 == rc1;
            extra = same ? "  summary.json identical at 1 and 4 workers" : "  summary.json differs between 1 and 4 workers";
        }
        const std::string id = test.substr(0, test.find(' '));
        if (t.contains(id)) {
            std::ostringstream s;
            s << "  (" << t[id].get<double>() << " s)";
            extra += s.str();
        }
        std::cout << (pass ? "PASS " : "FAIL ") << test << extra << '\n';
        all = all && pass;
    }
    return all ? 0 : 1;
}
