#include <doctest.h>

#include <cmath>

#include "filterlab/errors.hpp"
#include "filterlab/model.hpp"
#include "helpers.hpp"

using namespace filterlab;
using testing::constant;
using testing::scalar_scenario;

TEST_CASE("generator_apply examples") {
    const std::vector<double> y{0.0};
    auto s = scalar_scenario(constant(3.0), constant(0.4), constant(0.9), 0.0, constant(0.0), 1.0, 0.0, 1.0);
    const std::vector<double> x{0.3};
    CHECK(generator_apply(s.coeffs, 0.0, x, y, test_functions::coordinate()) == doctest::Approx(3.0).epsilon(1e-15));

    s = scalar_scenario(constant(0.0), constant(1.0), constant(0.0), 0.0, constant(0.0), 1.0, 0.0, 1.0);
    CHECK(generator_apply(s.coeffs, 0.0, x, y, test_functions::square()) == doctest::Approx(1.0).epsilon(1e-15));

    // f = x, g = gbar = 1 gives a = 2 and A sin = x cos x - sin x.
    s = scalar_scenario([](double v) { return v; }, constant(1.0), constant(1.0), 0.0, constant(0.0), 1.0, 0.0, 1.0);
    const double x0 = 0.7;
    CHECK(generator_apply(s.coeffs, 0.0, std::vector<double>{x0}, y, test_functions::sine()) ==
          doctest::Approx(x0 * std::cos(x0) - std::sin(x0)).epsilon(1e-14));
}

TEST_CASE("b_apply examples") {
    const std::vector<double> y{0.0};
    auto s = find_scenario("degenerate_k0").value();
    for (double x : {-1.0, 0.2, 3.0})
        for (const auto& name : test_functions::names())
            CHECK(b_apply(s.coeffs, 0, 0.0, std::vector<double>{x}, y, *test_functions::by_name(name)) == 0.0);

    s = scalar_scenario(constant(0.0), constant(1.0), constant(0.0), 0.0, constant(2.5), 1.0, 0.0, 1.0);
    CHECK(b_apply(s.coeffs, 0, 0.0, std::vector<double>{0.4}, y, test_functions::sine()) ==
          doctest::Approx(2.5 * std::sin(0.4)).epsilon(1e-14));

    // grad(x^2) * 1 + x * x^2 at x = 2.
    s = scalar_scenario(constant(0.0), constant(1.0), constant(1.0), 0.0, [](double v) { return v; }, 1.0, 0.0, 1.0);
    CHECK(b_apply(s.coeffs, 0, 0.0, std::vector<double>{2.0}, y, test_functions::square()) ==
          doctest::Approx(12.0).epsilon(1e-14));

    CHECK_THROWS_AS(b_apply(s.coeffs, 1, 0.0, std::vector<double>{2.0}, y, test_functions::square()),
                    InvalidInputError);
}

TEST_CASE("test function derivatives match finite differences") {
    for (const auto& name : test_functions::names()) {
        const auto phi = *test_functions::by_name(name);
        for (double x : {-1.7, -0.3, 0.0, 0.4, 1.1, 2.5}) {
            const double e = 1e-5;
            std::vector<double> xp{x + e}, xm{x - e}, x0{x};
            double g0, gp, gm, h;
            phi.gradient(x0, std::span<double>(&g0, 1));
            phi.gradient(xp, std::span<double>(&gp, 1));
            phi.gradient(xm, std::span<double>(&gm, 1));
            phi.hessian(x0, std::span<double>(&h, 1));
            const double fd1 = (phi.value(xp) - phi.value(xm)) / (2 * e);
            const double fd2 = (gp - gm) / (2 * e);
            CHECK_MESSAGE(std::abs(fd1 - g0) <= 1e-5 * std::max(1.0, std::abs(g0)), name);
            CHECK_MESSAGE(std::abs(fd2 - h) <= 1e-5 * std::max(1.0, std::abs(h)), name);
        }
    }
}

TEST_CASE("generator is linear in phi and a is positive semidefinite") {
    for (const auto& sc : builtin_scenarios()) {
        const auto& s = sc.spec;
        ModelEvaluator ev(s.coeffs);
        RngStream rng(1, 0, 0, StreamRole::Assumption);
        const auto phi = test_functions::sine(0, 1.3), psi = test_functions::bump(0.2, 0.8);
        const auto mix = test_functions::combine(-0.7, phi, psi);
        const std::size_t d = s.dims().d;
        for (int i = 0; i < 50; ++i) {
            std::vector<double> x(d), y(s.dims().d_obs);
            for (auto& v : x) v = 3.0 * rng.normal();
            for (auto& v : y) v = rng.normal();
            ev.eval(0.3, x, y);
            const double lhs = ev.generator(mix, x);
            const double rhs = -0.7 * ev.generator(phi, x) + ev.generator(psi, x);
            CHECK(std::abs(lhs - rhs) <= 1e-13 * std::max(1.0, std::abs(lhs)));
            // d <= 2 in the built-ins: check diagonal and determinant.
            for (std::size_t a = 0; a < d; ++a) CHECK(ev.a(a, a) >= 0.0);
            CHECK(ev.a(0, d - 1) == ev.a(d - 1, 0));
            if (d == 2) CHECK(ev.a(0, 0) * ev.a(1, 1) - ev.a(0, 1) * ev.a(1, 0) >= -1e-14);
        }
    }
}

TEST_CASE("h is composed from h1 + k h2") {
    const auto s = find_scenario("correlated_bounded").value();
    const std::vector<double> x{0.6}, y{0.3, -0.8};
    std::vector<double> h(2), h1(2), h2(3), k(6);
    eval_h(s.coeffs, 0.0, x, y, h);
    s.coeffs.h1(0.0, y, h1);
    s.coeffs.h2(0.0, x, y, h2);
    s.coeffs.k(0.0, y, k);
    for (std::size_t i = 0; i < 2; ++i) {
        const double ref = h1[i] + k[3 * i] * h2[0] + k[3 * i + 1] * h2[1] + k[3 * i + 2] * h2[2];
        CHECK(h[i] == doctest::Approx(ref).epsilon(1e-15));
    }
}

TEST_CASE("check_assumptions flags") {
    const auto lg = check_assumptions(find_scenario("linear_gaussian").value(), 400);
    CHECK(lg.all_linear_growth);
    CHECK_FALSE(lg.all_bounded);

    const auto cb = check_assumptions(find_scenario("correlated_bounded").value(), 400);
    CHECK(cb.all_bounded);
    CHECK(cb.all_linear_growth);
    CHECK(cb.derivatives_within_bound);
    CHECK(cb.derivative_sup < 4.0);

    auto sq = scalar_scenario([](double v) { return v * v; }, constant(1.0), constant(0.0), 0.0, constant(0.0), 1.0,
                              0.0, 1.0);
    CHECK_FALSE(check_assumptions(sq, 400).all_linear_growth);
    CHECK_THROWS_AS(check_assumptions(sq, 1), InvalidInputError);
}

TEST_CASE("built-in scenario lookup") {
    const auto k0 = find_scenario("degenerate_k0");
    REQUIRE(k0);
    double k = 1.0;
    k0->coeffs.k(0.0, std::vector<double>{0.0}, std::span<double>(&k, 1));
    CHECK(k == 0.0);
    CHECK(find_scenario("linear_gaussian"));
    CHECK(find_scenario("decoupled_classical")->y_free);
    CHECK_FALSE(find_scenario("no_such_scenario"));
    for (const auto& s : builtin_scenarios()) CHECK_NOTHROW(s.spec.validate());
}

TEST_CASE("scenario validation") {
    auto s = find_scenario("decoupled_classical").value();
    s.dt = 0.3;
    CHECK_THROWS_AS(s.validate(), ConfigurationError);
    s.dt = 1e-3;
    s.n_particles = 0;
    CHECK_THROWS_AS(s.validate(), ConfigurationError);
}

TEST_CASE("non-finite coefficient raises a model evaluation error") {
    auto s = scalar_scenario([](double v) { return 1.0 / v; }, constant(1.0), constant(0.0), 0.0, constant(0.0), 1.0,
                             0.0, 1.0);
    CHECK_THROWS_AS(generator_apply(s.coeffs, 0.0, std::vector<double>{0.0}, std::vector<double>{0.0},
                                    test_functions::sine()),
                    ModelEvaluationError);
}
