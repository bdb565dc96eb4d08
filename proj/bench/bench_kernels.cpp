// Serial reference kernels against their OpenMP versions.
//   filterlab_bench [workers] [particles] [grid_points]
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "filterlab/filter.hpp"
#include "filterlab/gridpde.hpp"
#include "filterlab/parallel.hpp"
#include "filterlab/rng.hpp"

using namespace filterlab;

namespace {

template <class F>
double best_of(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

}  // namespace

int main(int argc, char** argv) {
    const int workers = argc > 1 ? std::atoi(argv[1]) : 4;
    const std::size_t N = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 20000;
    const std::size_t G = argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 200001;
    set_worker_count(workers);

    auto s = find_scenario("correlated_bounded").value();
    s.horizon = 0.05;
    RngStream rng(1, 0, 0, StreamRole::Observation);
    const auto b = simulate_reference(s, rng);
    const auto track = make_track(s, b.y_path);
    const std::size_t steps = track.grid.n_steps;

    const double tp = best_of(3, [&] {
        ParticleSystem p(s, N, {1, 1});
        for (std::size_t n = 0; n < steps; ++n) advance_particles(p, s.coeffs, track, n);
    });
    const double ts = best_of(3, [&] {
        ParticleSystem p(s, N, {1, 1});
        for (std::size_t n = 0; n < steps; ++n) advance_particles_serial(p, s.coeffs, track, n);
    });
    std::printf("advance_particles   N=%zu steps=%zu  serial %.4f s  openmp(%d) %.4f s  speedup %.2f\n", N, steps, ts,
                workers, tp, ts / tp);

    ZakaiStencilCoeffs c{std::vector<double>(G), std::vector<double>(G), std::vector<double>(G), std::vector<double>(G)};
    std::vector<double> p(G), q(G);
    for (std::size_t i = 0; i < G; ++i) {
        p[i] = rng.uniform();
        c.f[i] = rng.normal();
        c.a[i] = 1.0 + rng.uniform();
        c.gd[i] = 0.01 * rng.normal();
        c.hd[i] = 0.01 * rng.normal();
    }
    const int sweeps = 200;
    const double gp = best_of(3, [&] {
        for (int k = 0; k < sweeps; ++k) zakai_stencil_step(p, q, c, 0.01, 1e-5);
    });
    const double gs = best_of(3, [&] {
        for (int k = 0; k < sweeps; ++k) zakai_stencil_step_serial(p, q, c, 0.01, 1e-5);
    });
    std::printf("zakai_stencil_step  G=%zu sweeps=%d  serial %.4f s  openmp(%d) %.4f s  speedup %.2f\n", G, sweeps, gs,
                workers, gp, gs / gp);
}
