#include <doctest.h>

#include <cmath>
#include <complex>

#include "filterlab/duality.hpp"
#include "filterlab/errors.hpp"
#include "filterlab/filter.hpp"
#include "filterlab/gridpde.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace filterlab;
using testing::constant;
using testing::scalar_scenario;

namespace {

ObservationTrack track_for(const ScenarioSpec& s, std::uint64_t seed) {
    RngStream rng(seed, 0, 0, StreamRole::Observation);
    return make_track(s, simulate_joint(s, rng).y_path);
}

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

TEST_CASE("grid basics") {
    const Grid1D g{-8.0, 8.0, 401};
    CHECK(g.spacing() == doctest::Approx(0.04).epsilon(1e-15));
    CHECK(g.x(400) == 8.0);
    CHECK_THROWS_AS((Grid1D{0.0, 1.0, 10}.validate()), ConfigurationError);
    CHECK_THROWS_AS((Grid1D{1.0, 0.0, 100}.validate()), ConfigurationError);
    const auto one = GridFunction::sample(g, test_functions::constant());
    CHECK(grid_mass(one) == doctest::Approx(16.04).epsilon(1e-13));
}

TEST_CASE("heat kernel spreading conserves mass") {
    auto s = scalar_scenario(constant(0.0), constant(1.0), constant(0.0), 0.0, constant(0.0), 0.0, 0.0, 0.3, 5e-4, 0.5);
    const Grid1D g{-8.0, 8.0, 401};
    const auto path = zakai_fd_solve(s, track_for(s, 1), g);
    CHECK(std::abs(grid_mass(path.back()) - 1.0) <= 1e-4);
    // Variance grows by t: 0.09 + 0.5.
    double m2 = 0.0;
    for (std::size_t i = 0; i < g.n_points; ++i) m2 += g.spacing() * path.back().re[i] * g.x(i) * g.x(i);
    CHECK(m2 == doctest::Approx(0.59).epsilon(1e-3));
}

TEST_CASE("k = 0 density matches a Crank-Nicolson Fokker-Planck oracle") {
    auto s = scalar_scenario([](double x) { return -x + 0.3; }, constant(1.0), constant(0.5), 0.0,
                             [](double x) { return std::sin(x); }, 0.0, 0.5, 0.6, 5e-4, 0.5);
    const Grid1D g{-8.0, 8.0, 401};
    const auto path = zakai_fd_solve(s, track_for(s, 2), g);
    std::vector<double> p0(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i) p0[i] = path.front().re[i];
    const auto ref = oracle::fokker_planck_cn([](double x) { return -x + 0.3; }, [](double) { return 1.25; }, p0, -8.0,
                                              8.0, 0.5, 1000);
    const double peak = max_abs(ref);
    CHECK(testing::max_abs_diff(path.back().re, ref) <= 2e-3 * peak);
}

TEST_CASE("mass is conserved when h2 = 0 even with observation coupling") {
    auto s = scalar_scenario([](double x) { return -std::tanh(x); }, constant(0.8), [](double x) { return 0.5 * std::cos(x); },
                             0.0, constant(0.0), 1.0, 0.0, 0.5, 5e-4, 0.5);
    const Grid1D g{-8.0, 8.0, 401};
    const auto path = zakai_fd_solve(s, track_for(s, 3), g);
    CHECK(std::abs(grid_mass(path.back()) - 1.0) <= 1e-4);
}

TEST_CASE("explicit step outside the stability bound is refused") {
    auto s = scalar_scenario(constant(0.0), constant(1.0), constant(0.0), 0.0, constant(0.0), 0.0, 0.0, 0.3, 1e-2, 0.1);
    CHECK_THROWS_AS(zakai_fd_solve(s, track_for(s, 1), Grid1D{-8.0, 8.0, 401}), ConfigurationError);
    auto lg = find_scenario("linear_gaussian").value();
    CHECK_THROWS_AS(zakai_fd_solve(lg, track_for(lg, 1), Grid1D{}), UnsupportedConfigurationError);
}

TEST_CASE("grid and particle filters agree on correlated_bounded") {
    auto s = find_scenario("correlated_bounded").value();
    s.dt = 5e-4;
    s.horizon = 0.5;
    RngStream rng(4, 0, 0, StreamRole::Observation);
    const auto b = simulate_joint(s, rng);
    const auto track = make_track(s, b.y_path);
    ZakaiGridOptions zo;
    zo.keep_path = false;
    const Grid1D g{-6.0, 6.0, 241};
    const auto grid = zakai_fd_solve(s, track, g, zo);
    FilterOptions fo;
    fo.n_particles = 20000;
    const auto run = ks_filter(s, track, {4, 0}, fo);
    const auto& e = run.ensembles.back();
    for (const auto& name : {"bump", "tanh", "one"}) {
        const auto phi = *test_functions::by_name(name);
        std::vector<double> vals(g.n_points), samples(e.size());
        for (std::size_t i = 0; i < g.n_points; ++i) vals[i] = phi.value(std::vector<double>{g.x(i)});
        for (std::size_t i = 0; i < e.size(); ++i) samples[i] = double(e.size()) * e.weight(i) * phi.value(e.point(i));
        const auto est = mean_se(samples);
        CHECK_MESSAGE(std::abs(grid_pairing(grid.back(), vals) - est.mean) <= 3 * est.se + 0.02, name);
    }
}

TEST_CASE("discrete adjoint pairing") {
    const auto s = find_scenario("decoupled_classical").value();
    const Grid1D g{-8.0, 8.0, 401};
    std::vector<double> p(g.n_points), phi(g.n_points);
    const auto bp = test_functions::bump(0.4, 0.8), bf = test_functions::bump(-0.5, 1.0);
    for (std::size_t i = 0; i < g.n_points; ++i) {
        p[i] = bp.value(std::vector<double>{g.x(i)});
        phi[i] = bf.value(std::vector<double>{g.x(i)});
    }
    const auto Ap = grid_adjoint_generator(s, g, 0.0, p);
    const auto Aphi = grid_generator(s, g, 0.0, phi);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < g.n_points; ++i) {
        lhs += g.spacing() * Ap[i] * phi[i];
        rhs += g.spacing() * p[i] * Aphi[i];
    }
    CHECK(std::abs(lhs - rhs) <= 1e-6);
    // And A on the grid approximates the generator.
    for (std::size_t i = 150; i < 250; i += 10)
        CHECK(Aphi[i] == doctest::Approx(generator_apply(s.coeffs, 0.0, std::vector<double>{g.x(i)},
                                                         std::vector<double>{0.0}, bf))
                             .epsilon(1e-3)
                             .scale(1.0));
}

TEST_CASE("parallel and serial stencil agree bit for bit") {
    const std::size_t n = 1001;
    RngStream rng(5, 0, 0, StreamRole::Matrix);
    ZakaiStencilCoeffs c{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
    std::vector<double> p(n), a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = rng.uniform();
        c.f[i] = rng.normal();
        c.a[i] = 1.0 + rng.uniform();
        c.gd[i] = 0.01 * rng.normal();
        c.hd[i] = 0.01 * rng.normal();
    }
    zakai_stencil_step(p, a, c, 0.02, 1e-4);
    zakai_stencil_step_serial(p, b, c, 0.02, 1e-4);
    CHECK(a == b);
    CHECK(a.front() == 0.0);
    CHECK(a.back() == 0.0);
}

TEST_CASE("dual solver: constant terminal value stays constant") {
    auto s = scalar_scenario(constant(0.0), constant(0.7), constant(0.0), 0.0, constant(0.0), 1.0, 0.0, 0.5, 1e-3, 1.0);
    const auto r = *find_frequency(probe_frequencies(1, 1.0), "steps_a");
    const auto sol = dual_backward_solve(s, r, test_functions::constant(), Grid1D{-8.0, 8.0, 401}, s.time_grid());
    for (const auto& u : sol.u) {
        for (double v : u.re) CHECK(v == doctest::Approx(1.0).epsilon(1e-13));
        CHECK(max_abs(u.im) <= 1e-13);
    }
}

TEST_CASE("dual solver: imaginary part starts at zero and grows for r != 0") {
    const auto s = find_scenario("decoupled_classical").value();
    const auto r = *find_frequency(probe_frequencies(1, 1.0), "plus1");
    const auto sol = dual_backward_solve(s, r, test_functions::bump(0.0, 0.7), Grid1D{-8.0, 8.0, 401}, s.time_grid());
    CHECK(max_abs(sol.u.back().im) == 0.0);
    CHECK(max_abs(sol.u.front().im) > 1e-3);

    const auto zero = *find_frequency(probe_frequencies(1, 1.0), "zero");
    const auto real = dual_backward_solve(s, zero, test_functions::bump(0.0, 0.7), Grid1D{-8.0, 8.0, 401}, s.time_grid());
    for (const auto& u : real.u) CHECK(max_abs(u.im) == 0.0);
}

TEST_CASE("complex and split dual solvers are identical") {
    const auto s = find_scenario("decoupled_classical").value();
    for (const auto& r : probe_frequencies(1, 1.0)) {
        const auto a = dual_backward_solve(s, r, test_functions::tanh_fn(), Grid1D{-8.0, 8.0, 201}, s.time_grid());
        const auto b = dual_backward_solve_split(s, r, test_functions::tanh_fn(), Grid1D{-8.0, 8.0, 201}, s.time_grid());
        REQUIRE(a.u.size() == b.u.size());
        double d = 0.0;
        for (std::size_t n = 0; n < a.u.size(); ++n) {
            d = std::max(d, testing::max_abs_diff(a.u[n].re, b.u[n].re));
            d = std::max(d, testing::max_abs_diff(a.u[n].im, b.u[n].im));
        }
        CHECK_MESSAGE(d <= 1e-14, r.label);
    }
}

TEST_CASE("backward Kolmogorov solution against Monte Carlo") {
    const auto s = find_scenario("kolmogorov_plain").value();
    const auto phi = test_functions::bump(0.0, 0.7);
    const Grid1D g{-8.0, 8.0, 401};
    const auto sol = dual_backward_solve(s, *find_frequency(probe_frequencies(1, 1.0), "zero"), phi, g, s.time_grid());
    const GridSpline sp(g, sol.u.front().re);
    for (double x0 : {-0.5, 0.5}) {
        const auto mc = oracle::kolmogorov_mc([](double x) { return -std::tanh(x); }, [](double) { return 1.0; },
                                              [&](double x) { return phi.value(std::vector<double>{x}); }, x0, 1.0,
                                              1e-3, 10000, 77);
        double v, d1, d2;
        sp.eval(x0, v, d1, d2);
        CHECK(std::abs(v - mc.mean) <= 3 * mc.se + 0.02);
    }
}

TEST_CASE("dual solver error shrinks under time refinement") {
    const auto s0 = find_scenario("decoupled_classical").value();
    const auto r = *find_frequency(probe_frequencies(1, 1.0), "steps_b");
    const Grid1D g{-8.0, 8.0, 201};
    auto solve = [&](double dt) {
        auto s = s0;
        s.dt = dt;
        return dual_backward_solve(s, r, test_functions::bump(0.0, 0.7), g, s.time_grid()).u.front();
    };
    const auto ref = solve(1.25e-4);
    std::vector<double> err;
    for (double dt : {4e-3, 2e-3, 1e-3, 5e-4}) {
        const auto u = solve(dt);
        err.push_back(std::max(testing::max_abs_diff(u.re, ref.re), testing::max_abs_diff(u.im, ref.im)));
    }
    for (std::size_t i = 0; i + 1 < err.size(); ++i) {
        CHECK(err[i] / err[i + 1] >= 1.5);
        CHECK(err[i] / err[i + 1] <= 3.0);
    }
}

TEST_CASE("dual solver guards") {
    auto s = find_scenario("correlated_bounded").value();
    const auto r3 = *find_frequency(probe_frequencies(3, 1.0), "plus1");
    CHECK_THROWS_AS(dual_backward_solve(s, r3, test_functions::sine(), Grid1D{}, s.time_grid()),
                    UnsupportedConfigurationError);
    auto flat = scalar_scenario(constant(0.0), constant(0.0), constant(1.0), 0.0, constant(0.0), 1.0, 0.0, 0.5);
    const auto r1 = *find_frequency(probe_frequencies(1, 1.0), "plus1");
    CHECK_THROWS_AS(dual_backward_solve(flat, r1, test_functions::sine(), Grid1D{}, flat.time_grid()),
                    ConfigurationError);
}

TEST_CASE("spline interpolation") {
    const Grid1D g{-4.0, 4.0, 201};
    std::vector<double> v(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i) v[i] = std::sin(g.x(i));
    const GridSpline sp(g, v);
    double y, d1, d2;
    sp.eval(g.x(37), y, d1, d2);
    CHECK(y == doctest::Approx(v[37]).epsilon(1e-14));
    for (double x : {-2.013, -0.5, 0.0071, 1.234, 2.9}) {
        sp.eval(x, y, d1, d2);
        CHECK(std::abs(y - std::sin(x)) <= 1e-6);
        CHECK(std::abs(d1 - std::cos(x)) <= 1e-4);
        CHECK(std::abs(d2 + std::sin(x)) <= 1e-2);
    }
    CHECK_THROWS_AS(sp.eval(4.5, y, d1, d2), SupportCoverageError);
}

TEST_CASE("ito_check with static u reproduces the Zakai residual") {
    auto s = find_scenario("correlated_bounded").value();
    s.horizon = 0.2;
    RngStream rng(6, 0, 0, StreamRole::Observation);
    const auto b = simulate_joint(s, rng);
    FilterOptions fo;
    fo.n_particles = 300;
    const auto run = ks_filter(s, b.y_path, {6, 0}, fo);
    const auto phi = test_functions::bump(0.0, 0.7);
    const auto ito = ito_check(s, run.track, run.ensembles, {static_field(phi), nullptr, {}});
    const auto z = zakai_residual(run, phi);
    for (std::size_t n = 0; n < z.residual.size(); ++n) {
        CHECK(ito.residual[n].real() == doctest::Approx(z.residual[n]).epsilon(1e-10).scale(1e-3));
        CHECK(ito.residual[n].imag() == 0.0);
    }
}

TEST_CASE("ito_check with c(t) phi: residual is small and Sigma matters") {
    auto s = find_scenario("decoupled_classical").value();
    s.horizon = 0.5;
    RngStream rng(7, 0, 0, StreamRole::Observation);
    const auto b = simulate_joint(s, rng);
    FilterOptions fo;
    fo.n_particles = 2000;
    const auto run = ks_filter(s, b.y_path, {7, 0}, fo);
    const auto phi = test_functions::bump(0.0, 0.7);
    const auto tg = s.time_grid();
    auto c = [](double t) { return 1.0 + t * t; };
    auto dc = [](double t) { return 2.0 * t; };
    const auto good = ito_check(s, run.track, run.ensembles, {scaled_field(phi, c, tg), scaled_field(phi, dc, tg), {}});
    const auto bad = ito_check(s, run.track, run.ensembles, {scaled_field(phi, c, tg), nullptr, {}});
    CHECK(good.max_abs() < 0.05);
    CHECK(bad.max_abs() > 2.0 * good.max_abs());
}

TEST_CASE("ito_check on grid densities pairs by the node rule") {
    auto s = scalar_scenario(constant(0.0), constant(1.0), constant(0.0), 0.0, constant(0.0), 0.0, 0.0, 0.5, 5e-4, 0.1);
    const Grid1D g{-8.0, 8.0, 401};
    const auto track = track_for(s, 8);
    const auto path = zakai_fd_solve(s, track, g);
    const auto res = ito_check(s, track, path, {static_field(test_functions::bump(0.0, 1.0)), nullptr, {}});
    CHECK(res.max_abs() <= 1e-3);
    CHECK(res.left.front() == std::complex<double>(0.0, 0.0));
}
