#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "filterlab/model.hpp"
#include "filterlab/rng.hpp"
#include "filterlab/time_grid.hpp"

namespace filterlab {

inline constexpr double kExplosionGuard = 1e12;

// Row n of each array holds the increment over [t_n, t_{n+1}).
struct BrownianPaths {
    std::size_t n_steps = 0;
    std::size_t l = 0;
    std::size_t l_obs = 0;
    std::vector<double> dV;  // n_steps x l
    std::vector<double> dW;  // n_steps x l_obs

    std::span<const double> dv(std::size_t n) const { return {dV.data() + n * l, l}; }
    std::span<const double> dw(std::size_t n) const { return {dW.data() + n * l_obs, l_obs}; }
};

struct PathBundle {
    TimeGrid grid;
    std::size_t d = 0;
    std::size_t d_obs = 0;
    std::vector<double> x_path;  // (n_steps + 1) x d
    std::vector<double> y_path;  // (n_steps + 1) x d_obs
    BrownianPaths noise;
    std::vector<double> w_tilde;  // n_steps x l_obs

    std::span<const double> x(std::size_t n) const { return {x_path.data() + n * d, d}; }
    std::span<const double> y(std::size_t n) const { return {y_path.data() + n * d_obs, d_obs}; }
    std::span<const double> dw_tilde(std::size_t n) const {
        return {w_tilde.data() + n * noise.l_obs, noise.l_obs};
    }
};

// Euler-Maruyama for the joint signal/observation system under P.
PathBundle simulate_joint(const ScenarioSpec& spec, RngStream& rng);

// Same system under the reference measure: W~ is drawn as a Brownian motion,
// Y = Y0 + int h1 + int k dW~, and X has drift f - gbar h2. noise.dW is the
// implied P-Brownian increment dW~ - h2 dt.
PathBundle simulate_reference(const ScenarioSpec& spec, RngStream& rng);

// Observation geometry along a fixed observation path, shared by every
// particle: frame(n) at (t_n, Y_n) for n = 0..n_steps and the projected
// increments k+(t_n, Y_n)(dY_n - h1 dt) for n < n_steps.
struct ObservationTrack {
    TimeGrid grid;
    std::size_t d_obs = 0;
    std::size_t l_obs = 0;
    std::vector<double> y_path;
    std::vector<ObservationFrame> frames;  // a single entry when k and h1 are constant
    std::vector<double> projected;
    bool k_zero = false;  // k vanishes at every grid time

    const ObservationFrame& frame(std::size_t n) const { return frames.size() == 1 ? frames[0] : frames[n]; }
    std::span<const double> y(std::size_t n) const { return {y_path.data() + n * d_obs, d_obs}; }
    std::span<const double> dproj(std::size_t n) const { return {projected.data() + n * l_obs, l_obs}; }
};

ObservationTrack make_track(const ScenarioSpec& spec, std::span<const double> y_path);

// One Euler step of the signal under the reference measure with
// dW~ = dproj + (I - k+k) xi. Draw order per step: dV then xi. Returns the
// log-weight increment h2 . dW~ - |h2|^2 dt / 2 evaluated at the left point.
class ConditionalStepper {
public:
    explicit ConditionalStepper(const CoefficientSet& c);

    double step(double t, double dt, std::span<double> x, std::span<const double> y, const ObservationFrame& fr,
                std::span<const double> dproj, RngStream& rng, std::span<double> dw_tilde);

    ModelEvaluator& evaluator() { return ev_; }

private:
    ModelEvaluator ev_;
    std::vector<double> dv_, xi_;
};

struct SignalDraw {
    std::vector<double> x_path;   // (n_steps + 1) x d
    std::vector<double> w_tilde;  // n_steps x l_obs
};

SignalDraw simulate_signal_given_obs(const ScenarioSpec& spec, std::span<const double> y_path, RngStream& rng);
SignalDraw simulate_signal_given_obs(const ScenarioSpec& spec, const ObservationTrack& track, RngStream& rng);

// paths_<replica>.csv with columns t, x_1..x_d, y_1..y_d'.
std::filesystem::path write_paths_csv(const PathBundle& paths, const std::filesystem::path& dir, std::size_t replica);

bool exceeds_guard(std::span<const double> v);

}  // namespace filterlab
