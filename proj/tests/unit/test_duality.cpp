#include <doctest.h>

#include <cmath>
#include <complex>
#include <fstream>

#include "filterlab/duality.hpp"
#include "filterlab/errors.hpp"
#include "helpers.hpp"

using namespace filterlab;

namespace {

std::vector<double> brownian(std::size_t n, std::size_t L, double dt, std::uint64_t seed) {
    RngStream rng(seed, 0, 0, StreamRole::Observation);
    std::vector<double> w(n * L);
    rng.normals(w, std::sqrt(dt));
    return w;
}

const FrequencyChoice& probe(const std::string& label) {
    static const auto all = probe_frequencies(1, 1.0);
    return *find_frequency(all, label);
}

}  // namespace

TEST_CASE("frequency choices") {
    const auto& a = probe("steps_a");
    CHECK(a.pieces() == 4);
    double v;
    a.value_at(0.0, std::span<double>(&v, 1));
    CHECK(v == 2.0);
    a.value_at(1.0, std::span<double>(&v, 1));
    CHECK(v == 1.0);
    CHECK(a.sup_norm() == 2.0);
    CHECK(probe_frequencies(1, 1.0).size() == 5);
    CHECK(find_frequency(probe_frequencies(1, 1.0), "nope") == nullptr);
}

TEST_CASE("theta closed form") {
    const TimeGrid g{1.0, 1000};
    const auto w = brownian(1000, 1, g.dt(), 1);
    for (const auto& v : theta_path(probe("zero"), g, w).values) CHECK(v == std::complex<double>(1.0, 0.0));

    // |theta_t| = exp(1/2 int |r|^2) path by path.
    for (const auto& label : {"plus1", "steps_a", "steps_b"}) {
        const auto& r = probe(label);
        const auto th = theta_path(r, g, w);
        double q = 0.0;
        for (std::size_t n = 0; n <= g.n_steps; ++n) {
            CHECK(std::abs(th.values[n]) == doctest::Approx(std::exp(0.5 * q)).epsilon(1e-14));
            if (n < g.n_steps) {
                double rv;
                r.value_at(g.time(n), std::span<double>(&rv, 1));
                q += rv * rv * g.dt();
            }
        }
    }
}

TEST_CASE("theta multiplicativity") {
    const TimeGrid g{1.0, 1000};
    const auto w = brownian(1000, 1, g.dt(), 2);
    const auto& a = probe("steps_a");
    const auto& b = probe("steps_b");
    std::vector<double> sum(a.levels.size());
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = a.levels[i] + b.levels[i];
    const auto ab = FrequencyChoice::steps("sum", 1, 1.0, sum);
    const auto ta = theta_path(a, g, w), tb = theta_path(b, g, w), tab = theta_path(ab, g, w);
    double cross = 0.0;
    for (std::size_t n = 0; n <= g.n_steps; ++n) {
        const auto lhs = ta.values[n] * tb.values[n];
        const auto rhs = tab.values[n] * std::exp(-cross);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(lhs));
        if (n < g.n_steps) {
            double ra, rb;
            a.value_at(g.time(n), std::span<double>(&ra, 1));
            b.value_at(g.time(n), std::span<double>(&rb, 1));
            cross += ra * rb * g.dt();
        }
    }
}

TEST_CASE("theta against the Gaussian characteristic function") {
    const TimeGrid g{1.0, 100};
    const std::size_t R = 10000;
    std::vector<std::complex<double>> s(R);
    for (std::size_t r = 0; r < R; ++r) s[r] = theta_path(probe("plus1"), g, brownian(100, 1, g.dt(), 100 + r)).values.back() * std::exp(-0.5);
    const auto e = mean_se(s);
    // E exp(i W_1) = exp(-1/2).
    CHECK(std::abs(e.mean.real() - std::exp(-0.5)) <= 3 * e.se_re);
    CHECK(std::abs(e.mean.imag()) <= 3 * e.se_im);
}

TEST_CASE("Euler theta approaches the closed form") {
    auto err = [](std::size_t steps) {
        const TimeGrid g{1.0, steps};
        double acc = 0.0;
        for (std::uint64_t p = 0; p < 200; ++p) {
            const auto w = brownian(steps, 1, g.dt(), 500 + p);
            acc += std::abs(theta_path(probe("steps_b"), g, w).values.back() -
                            theta_euler(probe("steps_b"), g, w).values.back()) /
                   200.0;
        }
        return acc;
    };
    const double coarse = err(1000), fine = err(16000);
    CHECK(fine < coarse);
    CHECK(fine < 0.05);
}

TEST_CASE("statistics helpers") {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    const auto e = mean_se(v);
    CHECK(e.mean == 2.5);
    CHECK(e.se == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)).epsilon(1e-14));
    CHECK(z_score(0.0, 0.0) == 0.0);
    CHECK(z_score(1.0, 0.5) == 2.0);
    CHECK(checkpoint_steps(1000, 4) == std::vector<std::size_t>{0, 250, 500, 750, 1000});
}

TEST_CASE("martingale test controls") {
    const std::size_t R = 10000, C = 5;
    std::vector<double> constant(R * C, 1.0);
    const auto c = martingale_test(constant, C);
    CHECK(c.max_abs_z == 0.0);

    std::vector<double> walk(R * C), drift(R * C);
    for (std::size_t r = 0; r < R; ++r) {
        RngStream rng(3, r, 0, StreamRole::Observation);
        double x = 1.0;
        for (std::size_t k = 0; k < C; ++k) {
            if (k) x += 0.5 * rng.normal();
            walk[r * C + k] = x;
            drift[r * C + k] = x + 0.1 * double(k) / double(C - 1);
        }
    }
    CHECK(martingale_test(walk, C).max_abs_z <= 3.0);
    CHECK(martingale_test(drift, C).max_abs_z >= 5.0);
}

TEST_CASE("duality: phi = 1 with no observation coupling") {
    auto s = find_scenario("kolmogorov_plain").value();
    s.horizon = 0.2;
    DualityOptions o;
    o.n_replicas = 100;
    o.n_particles = 4;
    const auto row = duality_gap(s, probe("zero"), test_functions::constant(), o);
    CHECK(std::abs(row.lhs - 1.0) <= 1e-12);
    CHECK(std::abs(row.rhs - 1.0) <= 1e-10);
    CHECK(row.pass);
}

TEST_CASE("duality gap on decoupled_classical at small scale") {
    auto s = find_scenario("decoupled_classical").value();
    s.horizon = 0.5;
    DualityOptions o;
    o.n_replicas = 1000;
    o.n_particles = 8;
    const std::vector<FrequencyChoice> freqs{probe("zero"), probe("steps_a")};
    const std::vector<TestFunction> phis{test_functions::bump(0.0, 0.7), test_functions::tanh_fn()};
    const auto st = duality_study(s, freqs, phis, o);
    CHECK(st.rows.size() == 4);
    CHECK(st.n_replicas == 1000);
    for (const auto& r : st.rows) {
        CHECK_MESSAGE(r.gap <= 3 * r.se_gap + 0.02, (r.r_label + "/" + r.phi_label));
        if (r.r_label == "zero") {
            CHECK(r.lhs.imag() == 0.0);
            CHECK(std::abs(r.rhs.imag()) <= 1e-12);
        }
    }
    CHECK(st.mass.max_abs_z <= 3.0);

    const auto file = std::filesystem::temp_directory_path() / "filterlab_duality_test.csv";
    write_duality_csv(st.rows, file);
    std::ifstream in(file);
    std::string header;
    std::getline(in, header);
    CHECK(header == "r_label,phi_label,lhs_re,lhs_im,rhs_re,rhs_im,gap,se_lhs,se_rhs,verdict");
}

TEST_CASE("duality refuses y-dependent coefficients") {
    const auto s = find_scenario("correlated_bounded").value();
    DualityOptions o;
    o.n_replicas = 100;
    CHECK_THROWS_AS(duality_gap(s, *find_frequency(probe_frequencies(3, 1.0), "plus1"), test_functions::sine(), o),
                    UnsupportedConfigurationError);
}

TEST_CASE("orthogonality statistic") {
    OrthogonalityOptions o;
    o.n_replicas = 200;
    auto inv = find_scenario("decoupled_classical").value();
    inv.horizon = 0.2;
    const auto a = orthogonality_test(inv, h2_functional(inv), FrequencyChoice::constant("c", {1.0}, 0.2), o);
    CHECK(a.estimate.mean == std::complex<double>(0.0, 0.0));

    auto cb = find_scenario("correlated_bounded").value();
    const auto zero_kappa = [](double, std::span<const double>, std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
    };
    const auto rc = FrequencyChoice::constant("c", {1.0, -0.5}, 1.0);
    CHECK(orthogonality_test(cb, zero_kappa, rc, o).estimate.mean == std::complex<double>(0.0, 0.0));

    o.n_replicas = 2000;
    const auto res = orthogonality_test(cb, h2_functional(cb), rc, o);
    CHECK(res.pass);
    CHECK(std::abs(res.estimate.mean) > 0.0);
}

TEST_CASE("uniqueness probe at small scale") {
    auto s = find_scenario("degenerate_k0").value();
    s.horizon = 0.5;
    UniquenessOptions o;
    o.n_replicas = 100;
    o.n_particles = 50;
    const std::vector<FrequencyChoice> freqs{probe("zero"), probe("plus1")};
    const std::vector<TestFunction> phis{test_functions::constant(), test_functions::bump(0.0, 0.7)};
    const auto rows = uniqueness_probe(s, freqs, phis, o);
    CHECK(rows.size() == 4);
    for (const auto& r : rows) CHECK_MESSAGE(r.pass, (r.r_label + "/" + r.phi_label));
}
