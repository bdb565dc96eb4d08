#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace filterlab {

// Piecewise-constant r : [0, T] -> R^{l_obs} on `pieces` equal subintervals.
struct FrequencyChoice {
    std::string label;
    std::size_t l_obs = 1;
    double T = 1.0;
    std::vector<double> levels;  // pieces x l_obs, row per subinterval

    std::size_t pieces() const { return levels.size() / l_obs; }
    // Value on the subinterval containing t (right-continuous; t = T uses the last piece).
    void value_at(double t, std::span<double> out) const;
    double sup_norm() const;

    static FrequencyChoice constant(std::string label, std::vector<double> r, double T);
    static FrequencyChoice steps(std::string label, std::size_t l_obs, double T, std::vector<double> levels);
};

// Standard probe family: r = 0, +1, -1 and two four-piece patterns with levels
// in {-2..2}. All components of r share the pattern.
std::vector<FrequencyChoice> probe_frequencies(std::size_t l_obs, double T);
const FrequencyChoice* find_frequency(const std::vector<FrequencyChoice>& set, const std::string& label);

}  // namespace filterlab
