#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "filterlab/measure.hpp"
#include "filterlab/model.hpp"
#include "filterlab/rng.hpp"
#include "filterlab/sde.hpp"

namespace filterlab {

// Identifies the particle substreams of one filter run.
struct StreamKey {
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;
};

// log Z~ over the grid for one particle: sum_j int h2^j dW~^j - 1/2 int |h2|^2,
// left-point sums.
std::vector<double> ztilde_path(const CoefficientSet& c, const TimeGrid& grid, std::span<const double> x_path,
                                std::span<const double> y_path, std::span<const double> w_tilde);

// Particles advanced in lockstep under the reference measure. Each particle
// owns its RNG substream, so a step is a pure function of the particle index.
struct ParticleSystem {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<double> x;     // n x d
    std::vector<double> logw;  // log Z~, -inf once a particle exploded
    std::vector<RngStream> rng;
    std::vector<unsigned char> alive;
    std::size_t exploded = 0;

    ParticleSystem(const ScenarioSpec& spec, std::size_t n_particles, StreamKey key);
};

// Advances every live particle over [t_step, t_step+1). The OpenMP kernel and
// its serial reference produce bitwise identical states.
void advance_particles(ParticleSystem& ps, const CoefficientSet& c, const ObservationTrack& track, std::size_t step);
void advance_particles_serial(ParticleSystem& ps, const CoefficientSet& c, const ObservationTrack& track,
                              std::size_t step);

struct FilterOptions {
    std::size_t n_particles = 0;  // 0: use spec.n_particles
    bool resample = false;        // multinomial when ESS < ess_fraction * N
    double ess_fraction = 0.1;
};

struct FilterDiagnostics {
    std::vector<double> ess;
    std::vector<double> log_weight_sup;  // sup_i log Z~_t^i, monitored only
    std::size_t exploded = 0;
    std::size_t resample_count = 0;
};

struct FilterRun {
    ScenarioSpec spec;
    ObservationTrack track;
    std::vector<WeightedEnsemble> ensembles;  // one per grid time, weights Z~ / N
    MassPath mass;                            // pi_t(1)
    FilterDiagnostics diagnostics;
};

FilterRun ks_filter(const ScenarioSpec& spec, std::span<const double> y_path, StreamKey key,
                    const FilterOptions& opts = {});
FilterRun ks_filter(const ScenarioSpec& spec, ObservationTrack track, StreamKey key, const FilterOptions& opts = {});

struct ResidualPath {
    std::vector<double> residual;    // R(t_n)
    std::vector<double> value;       // mu_n(phi)
    std::vector<double> drift;       // cumulative dt-integral term
    std::vector<double> stochastic;  // cumulative stochastic-integral term
    double max_abs() const;
};

// Zakai weak-form residual of a measure path for several test functions.
std::vector<ResidualPath> zakai_residuals(const ScenarioSpec& spec, const ObservationTrack& track,
                                          std::span<const WeightedEnsemble> path, std::span<const TestFunction> phis);
ResidualPath zakai_residual(const FilterRun& run, const TestFunction& phi);

// sigma_t = normalize(pi_t) at every grid time.
std::vector<WeightedEnsemble> ks_path(const FilterRun& run);

// Kushner-Stratonovich weak-form residual with compensator sigma(h) and the
// sigma(phi) sigma(h2^T) correction.
std::vector<ResidualPath> ks_residuals(const ScenarioSpec& spec, const ObservationTrack& track,
                                       std::span<const WeightedEnsemble> sigma, std::span<const TestFunction> phis);

// j_{n+1} = j_n (1 + sigma_n(h2^T) k+ (dY_n - h1 dt)), j_0 = 1.
MassPath mass_process(std::span<const WeightedEnsemble> sigma, const ObservationTrack& track, const CoefficientSet& c);

std::vector<WeightedEnsemble> reconstruct_pi(std::span<const WeightedEnsemble> sigma, const MassPath& mass);

// Filter report: t, pi_mass, j_mass, ess, est_<phi> (normalised estimates).
void write_filter_report(const FilterRun& run, const MassPath& j, std::span<const TestFunction> phis,
                         const std::filesystem::path& file);

}  // namespace filterlab
