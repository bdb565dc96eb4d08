#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "filterlab/frequency.hpp"
#include "filterlab/gridpde.hpp"
#include "filterlab/model.hpp"
#include "filterlab/sde.hpp"

namespace filterlab {

struct ThetaPath {
    std::vector<std::complex<double>> values;  // theta at t_0 .. t_N
};

// theta_t = exp(i sum r . dW~ + 1/2 sum |r|^2 dt), left-point sums, from the
// increments (n_steps x l_obs) of W~.
ThetaPath theta_path(const FrequencyChoice& r, const TimeGrid& grid, std::span<const double> w_tilde);
// Euler scheme for d theta = i theta r . dW~, for comparison with the closed form.
ThetaPath theta_euler(const FrequencyChoice& r, const TimeGrid& grid, std::span<const double> w_tilde);
// Observation-driven exponential: r takes values in R^{d_obs} and
// theta_t = exp(i sum r . (dY - h1 dt) + 1/2 sum |k^T r|^2 dt).
ThetaPath theta_observation(const FrequencyChoice& r, const ObservationTrack& track);

struct RealEstimate {
    double mean = 0.0;
    double se = 0.0;
};
struct ComplexEstimate {
    std::complex<double> mean;
    double se_re = 0.0;
    double se_im = 0.0;
    double se() const;
};
// Sample mean and standard error with fixed-order sums.
RealEstimate mean_se(std::span<const double> samples);
ComplexEstimate mean_se(std::span<const std::complex<double>> samples);

// z of a mean against 0; 0/0 counts as 0.
double z_score(double mean, double se);

struct MartingaleResult {
    std::vector<double> z_re, z_im;  // per interval
    double max_abs_z = 0.0;
};

// samples: replica-major, n_replicas x n_checkpoints. Interval k compares
// checkpoint k + 1 with checkpoint k.
MartingaleResult martingale_test(std::span<const std::complex<double>> samples, std::size_t n_checkpoints);
MartingaleResult martingale_test(std::span<const double> samples, std::size_t n_checkpoints);

// Checkpoint indices 0, N/m, 2N/m, ..., N for m intervals.
std::vector<std::size_t> checkpoint_steps(std::size_t n_steps, std::size_t n_intervals);

struct DualityOptions {
    std::size_t n_replicas = 10000;
    std::size_t n_particles = 8;
    Grid1D grid{-8.0, 8.0, 401};
    std::uint64_t seed = 42;
    double tolerance = 0.02;
    std::size_t n_intervals = 4;
};

struct DualityRow {
    std::string r_label;
    std::string phi_label;
    std::complex<double> lhs;  // mean theta_T pi_T(phi)
    std::complex<double> rhs;  // mean pi_0(u_0)
    double gap = 0.0;
    double se_lhs = 0.0;
    double se_rhs = 0.0;
    double se_gap = 0.0;  // paired difference
    bool pass = false;
    MartingaleResult martingale;  // theta_t pi_t(u_t) at the checkpoints
};

struct DualityStudy {
    std::vector<DualityRow> rows;
    MartingaleResult mass;         // pi_t(1)
    MartingaleResult mass_drift;   // pi_t(1) + 0.1 t
    std::size_t n_replicas = 0;
};

// One filter run per replica serves every (r, phi) pair.
DualityStudy duality_study(const ScenarioSpec& spec, const std::vector<FrequencyChoice>& freqs,
                           const std::vector<TestFunction>& phis, const DualityOptions& opts);
DualityRow duality_gap(const ScenarioSpec& spec, const FrequencyChoice& freq, const TestFunction& phi_T,
                       const DualityOptions& opts);

void write_duality_csv(const std::vector<DualityRow>& rows, const std::filesystem::path& file);

// kappa(t, x, y, out): l_obs values.
using PathFunctional =
    std::function<void(double t, std::span<const double> x, std::span<const double> y, std::span<double> out)>;

struct OrthogonalityOptions {
    std::size_t n_replicas = 10000;
    std::uint64_t seed = 42;
};

struct OrthogonalityResult {
    ComplexEstimate estimate;
    double z_re = 0.0;
    double z_im = 0.0;
    bool pass = false;
};

// E~[theta_T sum_n kappa_n (I - k+k) dW~_n] with theta from theta_observation.
OrthogonalityResult orthogonality_test(const ScenarioSpec& spec, const PathFunctional& kappa,
                                       const FrequencyChoice& freq, const OrthogonalityOptions& opts);
PathFunctional h2_functional(const ScenarioSpec& spec);

struct UniquenessOptions {
    std::size_t n_replicas = 1000;
    std::size_t n_particles = 100;
    Grid1D grid{-7.0, 7.0, 281};
    std::uint64_t seed = 42;
    double tolerance = 0.02;
};

struct UniquenessRow {
    std::string r_label;
    std::string phi_label;
    std::complex<double> particle;  // mean theta_T pi_T(phi), particle filter
    std::complex<double> grid;      // same with the grid density
    double diff = 0.0;
    double se = 0.0;  // paired difference
    bool pass = false;
};

// Both solvers see the same observation path in every replica; theta uses the
// projected increments so it is observation-measurable.
std::vector<UniquenessRow> uniqueness_probe(const ScenarioSpec& spec, const std::vector<FrequencyChoice>& freqs,
                                            const std::vector<TestFunction>& phis, const UniquenessOptions& opts);

}  // namespace filterlab
