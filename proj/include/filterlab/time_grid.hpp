#pragma once

#include <cstddef>

namespace filterlab {

// Uniform grid t_n = n * dt on [0, T].
struct TimeGrid {
    double T = 1.0;
    std::size_t n_steps = 1000;

    double dt() const { return T / static_cast<double>(n_steps); }
    double time(std::size_t n) const { return n == n_steps ? T : static_cast<double>(n) * dt(); }

    // Throws ConfigurationError unless dt divides T to within 1e-9 relative.
    static TimeGrid from_step(double T, double dt);

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

}  // namespace filterlab
