#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

namespace filterlab {

// %.17g: enough digits for every written double to read back bit-exact.
std::string fmt17(double v);

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
    void row(const std::vector<double>& values);
    // Mixed rows: strings are written verbatim, no quoting.
    void raw(const std::vector<std::string>& cells);

private:
    std::ofstream out_;
    std::size_t width_;
};

}  // namespace filterlab
