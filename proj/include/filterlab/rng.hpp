#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace filterlab {

// What a stream is used for. Part of the seed key so that, for example, the
// observation path of replica r never shares draws with its particles.
enum class StreamRole : std::uint32_t {
    Observation = 1,  // joint or reference path that produces Y
    Particle = 2,     // initial draw, dV and the orthogonal part of dW~ for one particle
    Prior = 3,        // independent prior Monte Carlo
    Resample = 4,
    Bootstrap = 5,
    Assumption = 6,
    Matrix = 7,
};

// Substream keyed by (seed, replica, particle, role). The key is expanded by
// std::seed_seq, so a sub-experiment can be rerun in isolation from its key
// alone and results do not depend on how work is scheduled.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t replica, std::uint64_t particle, StreamRole role) {
        const std::uint32_t words[] = {
            static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
            static_cast<std::uint32_t>(replica), static_cast<std::uint32_t>(replica >> 32),
            static_cast<std::uint32_t>(particle), static_cast<std::uint32_t>(particle >> 32),
            static_cast<std::uint32_t>(role)};
        std::seed_seq seq(std::begin(words), std::end(words));
        engine_.seed(seq);
    }

    double normal() { return normal_(engine_); }
    void normals(std::span<double> out, double scale = 1.0) {
        for (double& v : out) v = scale * normal_(engine_);
    }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    std::mt19937_64& engine() { return engine_; }

    using result_type = std::mt19937_64::result_type;
    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
};

}  // namespace filterlab
