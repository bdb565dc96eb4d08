#include "filterlab/gridpde.hpp"

#include <algorithm>
#include <cmath>

#include "filterlab/csv.hpp"
#include "filterlab/errors.hpp"
#include "filterlab/reduce.hpp"

namespace filterlab {

void Grid1D::validate() const {
    if (n_points < 16) throw ConfigurationError("grid needs at least 16 points");
    if (!(x_max > x_min) || !std::isfinite(x_min) || !std::isfinite(x_max))
        throw ConfigurationError("grid bounds must be finite with x_min < x_max");
}

GridFunction GridFunction::real(const Grid1D& g, std::vector<double> values, double t) {
    if (values.size() != g.n_points) throw InvalidInputError("grid values do not match the grid");
    GridFunction u{g, std::move(values), std::vector<double>(g.n_points, 0.0), t};
    return u;
}

GridFunction GridFunction::sample(const Grid1D& g, const TestFunction& phi, double t) {
    std::vector<double> v(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i) {
        const double x = g.x(i);
        v[i] = phi.value(std::span<const double>(&x, 1));
    }
    return real(g, std::move(v), t);
}

double grid_pairing(const GridFunction& p, std::span<const double> phi_values) {
    if (phi_values.size() != p.re.size()) throw InvalidInputError("grid pairing size mismatch");
    return p.grid.spacing() * block_reduce(p.re.size(), [&](std::size_t i) { return p.re[i] * phi_values[i]; });
}

double grid_mass(const GridFunction& p) {
    return p.grid.spacing() * pairwise_sum(p.re);
}

void write_grid_csv(const GridFunction& u, const std::filesystem::path& file) {
    CsvWriter w(file, {"x", "re", "im"});
    for (std::size_t i = 0; i < u.grid.n_points; ++i) w.row({u.grid.x(i), u.re[i], u.im[i]});
}

namespace {

void require_1d(const ScenarioSpec& spec) {
    if (spec.dims().d != 1) throw UnsupportedConfigurationError("grid solvers need a one-dimensional signal");
}

// Coefficients at every node; gbar and h2 rows have l_obs entries.
struct NodeCoeffs {
    std::vector<double> f, a, gbar, h2;
};

NodeCoeffs node_coeffs(const ScenarioSpec& spec, const Grid1D& g, double t, std::span<const double> y) {
    const std::size_t n = g.n_points, L = spec.dims().l_obs;
    NodeCoeffs c{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n * L), std::vector<double>(n * L)};
    ModelEvaluator ev(spec.coeffs);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = g.x(i);
        ev.eval(t, std::span<const double>(&x, 1), y);
        c.f[i] = ev.f()[0];
        c.a[i] = ev.a(0, 0);
        for (std::size_t j = 0; j < L; ++j) {
            c.gbar[i * L + j] = ev.g_bar()[j];
            c.h2[i * L + j] = ev.h2()[j];
        }
    }
    return c;
}

template <bool Parallel>
void stencil(std::span<const double> p, std::span<double> out, const ZakaiStencilCoeffs& c, double h, double dt) {
    const long long n = static_cast<long long>(p.size());
    const double i2h = 1.0 / (2.0 * h), ih2 = 1.0 / (h * h);
#pragma omp parallel for schedule(static) if (Parallel)
    for (long long ii = 1; ii < n - 1; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double adv = -(c.f[i + 1] * p[i + 1] - c.f[i - 1] * p[i - 1]) * i2h;
        const double dif = 0.5 * (c.a[i + 1] * p[i + 1] - 2.0 * c.a[i] * p[i] + c.a[i - 1] * p[i - 1]) * ih2;
        const double noise = -(c.gd[i + 1] * p[i + 1] - c.gd[i - 1] * p[i - 1]) * i2h + c.hd[i] * p[i];
        out[i] = p[i] + dt * (adv + dif) + noise;
    }
    out[0] = 0.0;
    out[static_cast<std::size_t>(n - 1)] = 0.0;
}

}  // namespace

void zakai_stencil_step(std::span<const double> p, std::span<double> out, const ZakaiStencilCoeffs& c, double h,
                        double dt) {
    stencil<true>(p, out, c, h, dt);
}

void zakai_stencil_step_serial(std::span<const double> p, std::span<double> out, const ZakaiStencilCoeffs& c,
                               double h, double dt) {
    stencil<false>(p, out, c, h, dt);
}

std::vector<GridFunction> zakai_fd_solve(const ScenarioSpec& spec, const ObservationTrack& track, const Grid1D& grid,
                                         const ZakaiGridOptions& opts) {
    spec.validate();
    require_1d(spec);
    grid.validate();
    const std::size_t n = grid.n_points, L = spec.dims().l_obs, steps = track.grid.n_steps;
    const double h = grid.spacing(), dt = track.grid.dt();
    const bool constant = spec.y_free && spec.autonomous;

    std::vector<double> p(n), q(n);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double x = grid.x(i);
        p[i] = spec.initial.x_density(std::span<const double>(&x, 1));
    }
    const double m0 = h * pairwise_sum(p);
    for (double& v : p) v /= m0;

    std::vector<GridFunction> path;
    path.push_back(GridFunction::real(grid, p, 0.0));

    NodeCoeffs nc;
    ZakaiStencilCoeffs sc{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
    auto load = [&](std::size_t step) {
        nc = node_coeffs(spec, grid, track.grid.time(step), track.y(step));
        sc.f = nc.f;
        sc.a = nc.a;
        const double amax = *std::max_element(nc.a.begin(), nc.a.end());
        if (dt > h * h / (2.0 * amax))
            throw ConfigurationError("explicit Zakai step violates dt <= h^2 / (2 max a): dt = " + fmt17(dt) +
                                     ", bound = " + fmt17(h * h / (2.0 * amax)));
    };
    if (constant) load(0);
    for (std::size_t s = 0; s < steps; ++s) {
        if (!constant) load(s);
        const auto dproj = track.dproj(s);
        for (std::size_t i = 0; i < n; ++i) {
            double gd = 0.0, hd = 0.0;
            for (std::size_t j = 0; j < L; ++j) {
                gd += nc.gbar[i * L + j] * dproj[j];
                hd += nc.h2[i * L + j] * dproj[j];
            }
            sc.gd[i] = gd;
            sc.hd[i] = hd;
        }
        zakai_stencil_step(p, q, sc, h, dt);
        std::swap(p, q);
        if (opts.keep_path || s + 1 == steps) path.push_back(GridFunction::real(grid, p, track.grid.time(s + 1)));
    }
    return path;
}

std::vector<double> grid_generator(const ScenarioSpec& spec, const Grid1D& g, double t, std::span<const double> phi) {
    require_1d(spec);
    const auto nc = node_coeffs(spec, g, t, spec.initial.y0);
    const std::size_t n = g.n_points;
    const double h = g.spacing();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i)
        out[i] = nc.f[i] * (phi[i + 1] - phi[i - 1]) / (2.0 * h) +
                 0.5 * nc.a[i] * (phi[i + 1] - 2.0 * phi[i] + phi[i - 1]) / (h * h);
    return out;
}

std::vector<double> grid_adjoint_generator(const ScenarioSpec& spec, const Grid1D& g, double t,
                                           std::span<const double> p) {
    require_1d(spec);
    const auto nc = node_coeffs(spec, g, t, spec.initial.y0);
    const std::size_t n = g.n_points;
    const double h = g.spacing();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i)
        out[i] = -(nc.f[i + 1] * p[i + 1] - nc.f[i - 1] * p[i - 1]) / (2.0 * h) +
                 0.5 * (nc.a[i + 1] * p[i + 1] - 2.0 * nc.a[i] * p[i] + nc.a[i - 1] * p[i - 1]) / (h * h);
    return out;
}

// ---------------------------------------------------------------- dual problem

namespace {

constexpr double kCoercivity = 1e-8;

struct DualSetup {
    std::size_t n;
    double h;
    std::vector<double> f, a;
    std::vector<double> gp, hp;  // rows of gbar k+k and h2^T k+k, l_obs each
};

DualSetup dual_setup(const ScenarioSpec& spec, const Grid1D& grid, double t) {
    const std::size_t L = spec.dims().l_obs;
    const auto nc = node_coeffs(spec, grid, t, spec.initial.y0);
    const auto fr = observation_frame(spec.coeffs, t, spec.initial.y0);
    DualSetup s{grid.n_points, grid.spacing(), nc.f, nc.a, std::vector<double>(grid.n_points * L),
                std::vector<double>(grid.n_points * L)};
    ModelEvaluator ev(spec.coeffs);
    for (std::size_t i = 0; i < s.n; ++i) {
        const double x = grid.x(i);
        ev.eval(t, std::span<const double>(&x, 1), spec.initial.y0);
        double ggt = 0.0;
        for (double gv : ev.g()) ggt += gv * gv;
        if (ggt < kCoercivity)
            throw ConfigurationError("dual solver needs g g^T >= kappa I; fails at x = " + fmt17(x));
        for (std::size_t j = 0; j < L; ++j) {
            double gp = 0.0, hp = 0.0;
            for (std::size_t m = 0; m < L; ++m) {
                gp += nc.gbar[i * L + m] * fr.proj(m, j);
                hp += nc.h2[i * L + m] * fr.proj(m, j);
            }
            s.gp[i * L + j] = gp;
            s.hp[i * L + j] = hp;
        }
    }
    return s;
}

void dual_checks(const ScenarioSpec& spec, const FrequencyChoice& r, const Grid1D& grid) {
    spec.validate();
    require_1d(spec);
    grid.validate();
    if (!spec.y_free)
        throw UnsupportedConfigurationError("dual solver handles only coefficients that do not depend on y");
    if (r.l_obs != spec.dims().l_obs) throw InvalidInputError("frequency dimension does not match l_obs");
}

// r-weighted B coefficients: B_r u = c1 u' + c0 u.
void r_coupling(const DualSetup& s, std::span<const double> r, std::vector<double>& c1, std::vector<double>& c0) {
    const std::size_t L = r.size();
    c1.assign(s.n, 0.0);
    c0.assign(s.n, 0.0);
    for (std::size_t i = 0; i < s.n; ++i)
        for (std::size_t j = 0; j < L; ++j) {
            c1[i] += r[j] * s.gp[i * L + j];
            c0[i] += r[j] * s.hp[i * L + j];
        }
}

void stability_check(const DualSetup& s, const std::vector<double>& c1, const std::vector<double>& c0, double dt) {
    double v = 0.0, z = 0.0;
    for (std::size_t i = 0; i < s.n; ++i) {
        v = std::max(v, std::abs(s.f[i]) + std::abs(c1[i]));
        z = std::max(z, std::abs(c0[i]));
    }
    if (dt * v > s.h || dt * z > 1.0)
        throw ConfigurationError("dual step too large for the explicit first-order terms: dt = " + fmt17(dt));
}

// Tridiagonal (I - dt a D2 / 2) with zero-gradient ends.
struct Tridiag {
    std::vector<double> lo, di, up;
};

Tridiag implicit_matrix(const DualSetup& s, double dt) {
    Tridiag m{std::vector<double>(s.n), std::vector<double>(s.n), std::vector<double>(s.n)};
    const double k = dt / (s.h * s.h);
    for (std::size_t i = 0; i < s.n; ++i) {
        m.di[i] = 1.0 + k * s.a[i];
        if (i == 0) {
            m.up[i] = -k * s.a[i];
        } else if (i + 1 == s.n) {
            m.lo[i] = -k * s.a[i];
        } else {
            m.lo[i] = -0.5 * k * s.a[i];
            m.up[i] = -0.5 * k * s.a[i];
        }
    }
    return m;
}

template <class T>
void thomas(const Tridiag& m, std::vector<T>& rhs) {
    const std::size_t n = rhs.size();
    std::vector<double> cp(n);
    std::vector<T> dp(n);
    cp[0] = m.up[0] / m.di[0];
    dp[0] = rhs[0] / m.di[0];
    for (std::size_t i = 1; i < n; ++i) {
        const double den = m.di[i] - m.lo[i] * cp[i - 1];
        cp[i] = m.up[i] / den;
        dp[i] = (rhs[i] - m.lo[i] * dp[i - 1]) / den;
    }
    rhs[n - 1] = dp[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] = dp[i] - cp[i] * rhs[i + 1];
}

template <class T>
T d1(const std::vector<T>& u, std::size_t i, double h) {
    if (i == 0 || i + 1 == u.size()) return T(0.0);
    return (u[i + 1] - u[i - 1]) / (2.0 * h);
}

template <class T>
T d2(const std::vector<T>& u, std::size_t i, double h) {
    const std::size_t n = u.size();
    if (i == 0) return 2.0 * (u[1] - u[0]) / (h * h);
    if (i + 1 == n) return 2.0 * (u[n - 2] - u[n - 1]) / (h * h);
    return (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h);
}

}  // namespace

DualSolution dual_backward_solve(const ScenarioSpec& spec, const FrequencyChoice& r, const TestFunction& phi_T,
                                 const Grid1D& grid, const TimeGrid& tg) {
    dual_checks(spec, r, grid);
    using C = std::complex<double>;
    const C I(0.0, 1.0);
    const std::size_t n = grid.n_points, steps = tg.n_steps;
    const double dt = tg.dt();
    std::vector<C> u(n), rhs(n);
    const auto terminal = GridFunction::sample(grid, phi_T, tg.T);
    for (std::size_t i = 0; i < n; ++i) u[i] = C(terminal.re[i], 0.0);

    DualSolution sol;
    sol.u.resize(steps + 1);
    sol.u[steps] = terminal;
    std::vector<double> rv(r.l_obs), c1, c0;
    DualSetup s = dual_setup(spec, grid, tg.time(0));
    Tridiag m = implicit_matrix(s, dt);
    for (std::size_t k = steps; k-- > 0;) {
        const double t = tg.time(k);
        if (!spec.autonomous) {
            s = dual_setup(spec, grid, t);
            m = implicit_matrix(s, dt);
        }
        r.value_at(t, rv);
        r_coupling(s, rv, c1, c0);
        stability_check(s, c1, c0, dt);
        for (std::size_t i = 0; i < n; ++i) {
            const C du = d1(u, i, s.h);
            rhs[i] = u[i] + dt * (s.f[i] * du + I * (c1[i] * du + c0[i] * u[i]));
        }
        thomas(m, rhs);
        u.swap(rhs);
        GridFunction g{grid, std::vector<double>(n), std::vector<double>(n), t};
        for (std::size_t i = 0; i < n; ++i) {
            g.re[i] = u[i].real();
            g.im[i] = u[i].imag();
        }
        sol.u[k] = std::move(g);
    }
    return sol;
}

DualSolution dual_backward_solve_split(const ScenarioSpec& spec, const FrequencyChoice& r, const TestFunction& phi_T,
                                       const Grid1D& grid, const TimeGrid& tg) {
    dual_checks(spec, r, grid);
    const std::size_t n = grid.n_points, steps = tg.n_steps;
    const double dt = tg.dt();
    const auto terminal = GridFunction::sample(grid, phi_T, tg.T);
    std::vector<double> u1 = terminal.re, u2(n, 0.0), r1(n), r2(n);

    DualSolution sol;
    sol.u.resize(steps + 1);
    sol.u[steps] = terminal;
    std::vector<double> rv(r.l_obs), c1, c0;
    DualSetup s = dual_setup(spec, grid, tg.time(0));
    Tridiag m = implicit_matrix(s, dt);
    for (std::size_t k = steps; k-- > 0;) {
        const double t = tg.time(k);
        if (!spec.autonomous) {
            s = dual_setup(spec, grid, t);
            m = implicit_matrix(s, dt);
        }
        r.value_at(t, rv);
        r_coupling(s, rv, c1, c0);
        stability_check(s, c1, c0, dt);
        for (std::size_t i = 0; i < n; ++i) {
            const double du1 = d1(u1, i, s.h), du2 = d1(u2, i, s.h);
            // u1 picks up -r B u2, u2 picks up +r B u1.
            r1[i] = u1[i] + dt * (s.f[i] * du1 - (c1[i] * du2 + c0[i] * u2[i]));
            r2[i] = u2[i] + dt * (s.f[i] * du2 + (c1[i] * du1 + c0[i] * u1[i]));
        }
        thomas(m, r1);
        thomas(m, r2);
        u1.swap(r1);
        u2.swap(r2);
        sol.u[k] = GridFunction{grid, u1, u2, t};
    }
    return sol;
}

std::vector<GridFunction> implied_sigma(const ScenarioSpec& spec, const FrequencyChoice& r, const DualSolution& sol,
                                        const TimeGrid& tg) {
    if (sol.u.empty()) throw InvalidInputError("empty dual solution");
    const Grid1D grid = sol.u.front().grid;
    dual_checks(spec, r, grid);
    const std::size_t n = grid.n_points;
    std::vector<GridFunction> out;
    out.reserve(sol.u.size());
    std::vector<double> rv(r.l_obs), c1, c0;
    DualSetup s = dual_setup(spec, grid, 0.0);
    for (std::size_t k = 0; k < sol.u.size(); ++k) {
        const double t = tg.time(k);
        if (!spec.autonomous) s = dual_setup(spec, grid, t);
        r.value_at(t, rv);
        r_coupling(s, rv, c1, c0);
        const auto& u = sol.u[k];
        GridFunction g{grid, std::vector<double>(n), std::vector<double>(n), t};
        for (std::size_t i = 0; i < n; ++i) {
            const double a1 = s.f[i] * d1(u.re, i, s.h) + 0.5 * s.a[i] * d2(u.re, i, s.h);
            const double a2 = s.f[i] * d1(u.im, i, s.h) + 0.5 * s.a[i] * d2(u.im, i, s.h);
            const double b1 = c1[i] * d1(u.re, i, s.h) + c0[i] * u.re[i];
            const double b2 = c1[i] * d1(u.im, i, s.h) + c0[i] * u.im[i];
            // -(A u + i B_r u)
            g.re[i] = -(a1 - b2);
            g.im[i] = -(a2 + b1);
        }
        out.push_back(std::move(g));
    }
    return out;
}

// ---------------------------------------------------------------- spline

GridSpline::GridSpline(const Grid1D& g, std::span<const double> values)
    : g_(g), y_(values.begin(), values.end()), m_(values.size(), 0.0) {
    const std::size_t n = y_.size();
    if (n != g.n_points || n < 3) throw InvalidInputError("spline values do not match the grid");
    const double h = g.spacing();
    // Interior system M_{i-1} + 4 M_i + M_{i+1} = 6 (y_{i+1} - 2 y_i + y_{i-1}) / h^2.
    const std::size_t k = n - 2;
    std::vector<double> cp(k), dp(k);
    for (std::size_t j = 0; j < k; ++j) {
        const std::size_t i = j + 1;
        const double rhs = 6.0 * (y_[i + 1] - 2.0 * y_[i] + y_[i - 1]) / (h * h);
        const double den = 4.0 - (j ? cp[j - 1] : 0.0);
        cp[j] = 1.0 / den;
        dp[j] = (rhs - (j ? dp[j - 1] : 0.0)) / den;
    }
    for (std::size_t j = k; j-- > 0;) m_[j + 1] = dp[j] - (j + 1 < k ? cp[j] * m_[j + 2] : 0.0);
}

void GridSpline::eval(double x, double& v, double& d1v, double& d2v) const {
    const double h = g_.spacing();
    const double tol = 1e-9 * h;
    if (!(x >= g_.x_min - tol && x <= g_.x_max + tol))
        throw SupportCoverageError("point " + fmt17(x) + " lies outside the grid [" + fmt17(g_.x_min) + ", " +
                                   fmt17(g_.x_max) + "]");
    const std::size_t n = y_.size();
    std::size_t k = static_cast<std::size_t>(std::clamp(std::floor((x - g_.x_min) / h), 0.0, static_cast<double>(n - 2)));
    const double xk = g_.x(k);
    const double B = (x - xk) / h, A = 1.0 - B;
    v = A * y_[k] + B * y_[k + 1] + ((A * A * A - A) * m_[k] + (B * B * B - B) * m_[k + 1]) * h * h / 6.0;
    d1v = (y_[k + 1] - y_[k]) / h - (3.0 * A * A - 1.0) / 6.0 * h * m_[k] + (3.0 * B * B - 1.0) / 6.0 * h * m_[k + 1];
    d2v = A * m_[k] + B * m_[k + 1];
}

// ---------------------------------------------------------------- fields

namespace {

class FunctionSlice : public FieldPath::Slice {
public:
    FunctionSlice(const TestFunction* phi, double scale) : phi_(phi), scale_(scale) {}
    void jet(std::span<const double> x, Jet& out) const override {
        const std::size_t d = x.size();
        std::vector<double> g(d), hs(d * d);
        phi_->gradient(x, g);
        phi_->hessian(x, hs);
        out.value = scale_ * phi_->value(x);
        out.grad.resize(d);
        out.hess.resize(d * d);
        for (std::size_t i = 0; i < d; ++i) out.grad[i] = scale_ * g[i];
        for (std::size_t i = 0; i < d * d; ++i) out.hess[i] = scale_ * hs[i];
    }

private:
    const TestFunction* phi_;
    double scale_;
};

class StaticField : public FieldPath {
public:
    explicit StaticField(TestFunction phi) : phi_(std::move(phi)) {}
    std::unique_ptr<Slice> at(std::size_t) const override { return std::make_unique<FunctionSlice>(&phi_, 1.0); }

private:
    TestFunction phi_;
};

class ScaledField : public FieldPath {
public:
    ScaledField(TestFunction phi, std::function<double(double)> c, TimeGrid g)
        : phi_(std::move(phi)), c_(std::move(c)), g_(g) {}
    std::unique_ptr<Slice> at(std::size_t n) const override {
        return std::make_unique<FunctionSlice>(&phi_, c_(g_.time(n)));
    }

private:
    TestFunction phi_;
    std::function<double(double)> c_;
    TimeGrid g_;
};

class SplineSlice : public FieldPath::Slice {
public:
    explicit SplineSlice(const GridFunction& u) : re_(u.grid, u.re), im_(u.grid, u.im) {}
    void jet(std::span<const double> x, Jet& out) const override {
        if (x.size() != 1) throw UnsupportedConfigurationError("grid fields are one-dimensional");
        double v1, g1, h1, v2, g2, h2;
        re_.eval(x[0], v1, g1, h1);
        im_.eval(x[0], v2, g2, h2);
        out.value = {v1, v2};
        out.grad.assign(1, {g1, g2});
        out.hess.assign(1, {h1, h2});
    }

private:
    GridSpline re_, im_;
};

class GridField : public FieldPath {
public:
    explicit GridField(std::vector<GridFunction> path) : path_(std::move(path)) {}
    std::unique_ptr<Slice> at(std::size_t n) const override {
        if (n >= path_.size()) throw InvalidInputError("grid field path is shorter than the time grid");
        return std::make_unique<SplineSlice>(path_[n]);
    }

private:
    std::vector<GridFunction> path_;
};

}  // namespace

std::shared_ptr<FieldPath> static_field(TestFunction phi) {
    return std::make_shared<StaticField>(std::move(phi));
}

std::shared_ptr<FieldPath> scaled_field(TestFunction phi, std::function<double(double)> c, TimeGrid grid) {
    return std::make_shared<ScaledField>(std::move(phi), std::move(c), grid);
}

std::shared_ptr<FieldPath> grid_field(std::vector<GridFunction> path) {
    return std::make_shared<GridField>(std::move(path));
}

// ---------------------------------------------------------------- Ito check

double ItoResidual::max_abs() const {
    double m = 0.0;
    for (const auto& r : residual) m = std::max(m, std::abs(r));
    return m;
}

namespace {

// Signed point measure view used by both overloads.
struct PointSet {
    std::size_t d;
    std::span<const double> points;
    std::vector<double> weights;
};

template <class GetPoints>
ItoResidual ito_core(const ScenarioSpec& spec, const ObservationTrack& track, std::size_t n_times,
                     const ItoIntegrands& in, GetPoints&& get) {
    using C = std::complex<double>;
    if (n_times != track.grid.n_steps + 1) throw InvalidInputError("ito_check: measure path does not match the grid");
    if (!in.u) throw InvalidInputError("ito_check needs u");
    const auto& dm = spec.dims();
    const std::size_t L = dm.l_obs, D = dm.d;
    if (!in.lambda.empty() && in.lambda.size() != L) throw InvalidInputError("ito_check: Lambda needs l_obs entries");
    const double dt = track.grid.dt();

    ItoResidual out;
    C base(0.0, 0.0), right(0.0, 0.0);
    for (std::size_t n = 0; n < n_times; ++n) {
        const PointSet ps = get(n);
        const std::size_t N = ps.weights.size();
        const auto u = in.u->at(n);
        const auto sg = in.sigma ? in.sigma->at(n) : nullptr;
        std::vector<std::unique_ptr<FieldPath::Slice>> lam;
        for (const auto& l : in.lambda) lam.push_back(l->at(n));
        const double t = track.grid.time(n);
        const auto y = track.y(n);
        const auto& fr = track.frame(n);
        const bool last = n + 1 == n_times;
        std::vector<double> dproj(L, 0.0);
        if (!last) {
            const auto dp = track.dproj(n);
            dproj.assign(dp.begin(), dp.end());
        }
        // value, drift, stochastic increments (re, im) per point
        std::vector<double> vals(6 * N);
        const long long Nl = static_cast<long long>(N);
        std::exception_ptr err;
        bool failed = false;
#pragma omp parallel
        {
            ModelEvaluator ev(spec.coeffs);
            Jet ju, js, jl;
#pragma omp for schedule(static)
            for (long long ii = 0; ii < Nl; ++ii) {
                const std::size_t i = static_cast<std::size_t>(ii);
                try {
                    const auto x = ps.points.subspan(i * ps.d, ps.d);
                    ev.eval(t, x, y);
                    u->jet(x, ju);
                    const auto f = ev.f(), gb = ev.g_bar(), h2 = ev.h2();
                    C au(0.0, 0.0);
                    for (std::size_t k = 0; k < D; ++k) au += f[k] * ju.grad[k];
                    C second(0.0, 0.0);
                    for (std::size_t k = 0; k < D; ++k)
                        for (std::size_t m = 0; m < D; ++m) second += ev.a(k, m) * ju.hess[k * D + m];
                    au += 0.5 * second;
                    C drift = au, stoch(0.0, 0.0);
                    if (sg) {
                        sg->jet(x, js);
                        drift += js.value;
                    }
                    for (std::size_t j = 0; j < L; ++j) {
                        // weak row of u against the projected increment
                        C row = ju.value * h2[j];
                        for (std::size_t k = 0; k < D; ++k) row += ju.grad[k] * gb[k * L + j];
                        stoch += row * dproj[j];
                    }
                    if (!lam.empty()) {
                        for (std::size_t j = 0; j < L; ++j) {
                            lam[j]->jet(x, jl);
                            stoch += jl.value * dproj[j];
                            // B^j Lambda^j with the projector
                            for (std::size_t m = 0; m < L; ++m) {
                                C row = jl.value * h2[m];
                                for (std::size_t k = 0; k < D; ++k) row += jl.grad[k] * gb[k * L + m];
                                drift += row * fr.proj(m, j);
                            }
                        }
                    }
                    vals[0 * N + i] = ju.value.real();
                    vals[1 * N + i] = ju.value.imag();
                    vals[2 * N + i] = drift.real();
                    vals[3 * N + i] = drift.imag();
                    vals[4 * N + i] = stoch.real();
                    vals[5 * N + i] = stoch.imag();
                } catch (...) {
#pragma omp critical(filterlab_ito_error)
                    {
                        failed = true;
                        err = std::current_exception();
                    }
                }
            }
        }
        if (failed) std::rethrow_exception(err);
        auto pair = [&](std::size_t q) {
            return block_reduce(N, [&](std::size_t i) { return ps.weights[i] * vals[q * N + i]; });
        };
        const C mu_u(pair(0), pair(1));
        if (n == 0) base = mu_u;
        const C left = mu_u - base;
        out.left.push_back(left);
        out.residual.push_back(left - right);
        if (!last) right += C(pair(2), pair(3)) * dt + C(pair(4), pair(5));
    }
    return out;
}

}  // namespace

ItoResidual ito_check(const ScenarioSpec& spec, const ObservationTrack& track, std::span<const WeightedEnsemble> path,
                      const ItoIntegrands& integrands) {
    return ito_core(spec, track, path.size(), integrands, [&](std::size_t n) {
        const auto& e = path[n];
        PointSet ps{e.dim(), e.points(), std::vector<double>(e.size())};
        for (std::size_t i = 0; i < e.size(); ++i) ps.weights[i] = e.weight(i);
        return ps;
    });
}

ItoResidual ito_check(const ScenarioSpec& spec, const ObservationTrack& track, std::span<const GridFunction> path,
                      const ItoIntegrands& integrands) {
    require_1d(spec);
    std::vector<double> nodes;
    if (!path.empty()) {
        const auto& g = path.front().grid;
        for (std::size_t i = 0; i < g.n_points; ++i) nodes.push_back(g.x(i));
    }
    return ito_core(spec, track, path.size(), integrands, [&](std::size_t n) {
        const auto& p = path[n];
        if (!(p.grid == path.front().grid)) throw InvalidInputError("ito_check: grid changes along the path");
        PointSet ps{1, nodes, std::vector<double>(p.re.size())};
        const double h = p.grid.spacing();
        for (std::size_t i = 0; i < p.re.size(); ++i) ps.weights[i] = h * p.re[i];
        return ps;
    });
}

}  // namespace filterlab
