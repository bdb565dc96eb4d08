#include "filterlab/csv.hpp"

#include <cstdio>

#include "filterlab/errors.hpp"

namespace filterlab {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path, std::ios::binary), width_(header.size()) {
    if (!out_) throw Error("cannot open " + path.string() + " for writing");
    raw(header);
}

void CsvWriter::row(const std::vector<double>& values) {
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) cells.push_back(fmt17(v));
    raw(cells);
}

void CsvWriter::raw(const std::vector<std::string>& cells) {
    if (cells.size() != width_) throw InvalidInputError("CSV row width does not match header");
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
}

}  // namespace filterlab
