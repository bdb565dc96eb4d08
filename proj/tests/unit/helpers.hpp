#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "filterlab/model.hpp"

namespace testing {

using filterlab::ScenarioSpec;
using Span = std::span<const double>;
using Out = std::span<double>;
using Scalar = std::function<double(double)>;

// d = d_obs = l = l_obs = 1 scenario from scalar profiles of x.
inline ScenarioSpec scalar_scenario(Scalar f, Scalar g, Scalar gbar, double h1, Scalar h2, double k, double x0,
                                    double sd, double dt = 1e-3, double T = 1.0) {
    ScenarioSpec s;
    s.name = "test";
    auto& c = s.coeffs;
    c.dims = {1, 1, 1, 1};
    c.f = [f](double, Span x, Span, Out o) { o[0] = f(x[0]); };
    c.g = [g](double, Span x, Span, Out o) { o[0] = g(x[0]); };
    c.g_bar = [gbar](double, Span x, Span, Out o) { o[0] = gbar(x[0]); };
    c.h1 = [h1](double, Span, Out o) { o[0] = h1; };
    c.h2 = [h2](double, Span x, Span, Out o) { o[0] = h2(x[0]); };
    c.k = [k](double, Span, Out o) { o[0] = k; };
    s.initial = {{x0}, {sd}, {0.0}};
    s.dt = dt;
    s.horizon = T;
    s.y_free = true;
    return s;
}

inline Scalar constant(double c) {
    return [c](double) { return c; };
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace testing
