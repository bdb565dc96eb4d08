#include "filterlab/frequency.hpp"

#include <algorithm>
#include <cmath>

#include "filterlab/errors.hpp"

namespace filterlab {

void FrequencyChoice::value_at(double t, std::span<double> out) const {
    const std::size_t m = pieces();
    std::size_t piece = static_cast<std::size_t>(std::floor(t / T * static_cast<double>(m) + 1e-9));
    piece = std::min(piece, m - 1);
    for (std::size_t j = 0; j < l_obs; ++j) out[j] = levels[piece * l_obs + j];
}

double FrequencyChoice::sup_norm() const {
    double best = 0.0;
    for (std::size_t p = 0; p < pieces(); ++p) {
        double s = 0.0;
        for (std::size_t j = 0; j < l_obs; ++j) s += levels[p * l_obs + j] * levels[p * l_obs + j];
        best = std::max(best, std::sqrt(s));
    }
    return best;
}

FrequencyChoice FrequencyChoice::constant(std::string label, std::vector<double> r, double T) {
    if (r.empty()) throw InvalidInputError("frequency vector is empty");
    const std::size_t l = r.size();
    return FrequencyChoice{std::move(label), l, T, std::move(r)};
}

FrequencyChoice FrequencyChoice::steps(std::string label, std::size_t l_obs, double T, std::vector<double> levels) {
    if (l_obs == 0 || levels.empty() || levels.size() % l_obs != 0)
        throw InvalidInputError("frequency levels do not fill whole pieces");
    for (double v : levels)
        if (!std::isfinite(v)) throw InvalidInputError("frequency level is not finite");
    return FrequencyChoice{std::move(label), l_obs, T, std::move(levels)};
}

std::vector<FrequencyChoice> probe_frequencies(std::size_t l_obs, double T) {
    auto fill = [&](std::vector<double> pattern) {
        std::vector<double> lv;
        for (double v : pattern)
            for (std::size_t j = 0; j < l_obs; ++j) lv.push_back(v);
        return lv;
    };
    return {FrequencyChoice::steps("zero", l_obs, T, fill({0.0})),
            FrequencyChoice::steps("plus1", l_obs, T, fill({1.0})),
            FrequencyChoice::steps("minus1", l_obs, T, fill({-1.0})),
            FrequencyChoice::steps("steps_a", l_obs, T, fill({2.0, -1.0, 0.0, 1.0})),
            FrequencyChoice::steps("steps_b", l_obs, T, fill({-2.0, 1.0, 2.0, -1.0}))};
}

const FrequencyChoice* find_frequency(const std::vector<FrequencyChoice>& set, const std::string& label) {
    for (const auto& f : set)
        if (f.label == label) return &f;
    return nullptr;
}

}  // namespace filterlab
