#include "filterlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "filterlab/errors.hpp"
#include "filterlab/pinv.hpp"

namespace filterlab {

TimeGrid TimeGrid::from_step(double T, double dt) {
    if (!(T > 0.0) || !std::isfinite(T)) throw ConfigurationError("horizon T must be positive and finite");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigurationError("dt must be positive and finite");
    const double ratio = T / dt;
    const double n = std::round(ratio);
    if (n < 1.0 || std::abs(ratio - n) > 1e-9 * std::max(1.0, ratio)) {
        std::ostringstream msg;
        msg << "dt = " << dt << " does not divide T = " << T;
        throw ConfigurationError(msg.str());
    }
    return TimeGrid{T, static_cast<std::size_t>(n)};
}

void Dimensions::validate() const {
    if (d == 0 || d_obs == 0 || l == 0 || l_obs == 0)
        throw InvalidInputError("all dimensions must be at least 1");
}

void eval_h(const CoefficientSet& c, double t, std::span<const double> x, std::span<const double> y,
            std::span<double> out) {
    const auto& dm = c.dims;
    std::vector<double> h2(dm.l_obs), k(dm.d_obs * dm.l_obs);
    c.h1(t, y, out);
    c.k(t, y, k);
    c.h2(t, x, y, h2);
    for (std::size_t i = 0; i < dm.d_obs; ++i)
        for (std::size_t j = 0; j < dm.l_obs; ++j) out[i] += k[i * dm.l_obs + j] * h2[j];
}

double InitialLaw::x_density(std::span<const double> x) const {
    double p = 1.0;
    for (std::size_t i = 0; i < x_mean.size(); ++i) {
        const double z = (x[i] - x_mean[i]) / x_sd[i];
        p *= std::exp(-0.5 * z * z) / (x_sd[i] * std::sqrt(2.0 * std::numbers::pi));
    }
    return p;
}

void ScenarioSpec::validate() const {
    coeffs.dims.validate();
    if (!coeffs.f || !coeffs.g || !coeffs.g_bar || !coeffs.h1 || !coeffs.h2 || !coeffs.k)
        throw ConfigurationError("scenario '" + name + "' has a missing coefficient");
    if (initial.x_mean.size() != dims().d || initial.x_sd.size() != dims().d || initial.y0.size() != dims().d_obs)
        throw ConfigurationError("scenario '" + name + "' initial law has the wrong dimension");
    if (n_particles < 1) throw ConfigurationError("n_particles must be at least 1");
    (void)time_grid();
}

// ---------------------------------------------------------------- test functions

namespace test_functions {

namespace {

// Builds a test function that depends on one coordinate through a scalar
// profile with first and second derivatives.
template <class V, class D1, class D2>
TestFunction axis_function(std::string name, std::size_t axis, bool bounded, V v, D1 d1, D2 d2) {
    TestFunction tf;
    tf.name = std::move(name);
    tf.bounded = bounded;
    tf.value = [axis, v](std::span<const double> x) { return v(x[axis]); };
    tf.gradient = [axis, d1](std::span<const double> x, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        out[axis] = d1(x[axis]);
    };
    tf.hessian = [axis, d2](std::span<const double> x, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        out[axis * x.size() + axis] = d2(x[axis]);
    };
    return tf;
}

std::string axis_suffix(std::size_t axis) {
    return axis == 0 ? std::string() : "_" + std::to_string(axis + 1);
}

}  // namespace

TestFunction constant(double c) {
    TestFunction tf;
    tf.name = c == 1.0 ? "one" : "const";
    tf.value = [c](std::span<const double>) { return c; };
    tf.gradient = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
    tf.hessian = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
    return tf;
}

TestFunction coordinate(std::size_t axis) {
    return axis_function("x" + axis_suffix(axis), axis, false, [](double x) { return x; },
                         [](double) { return 1.0; }, [](double) { return 0.0; });
}

TestFunction square(std::size_t axis) {
    return axis_function("x2" + axis_suffix(axis), axis, false, [](double x) { return x * x; },
                         [](double x) { return 2.0 * x; }, [](double) { return 2.0; });
}

TestFunction sine(std::size_t axis, double w) {
    return axis_function("sin" + axis_suffix(axis), axis, true, [w](double x) { return std::sin(w * x); },
                         [w](double x) { return w * std::cos(w * x); },
                         [w](double x) { return -w * w * std::sin(w * x); });
}

TestFunction cosine(std::size_t axis, double w) {
    return axis_function("cos" + axis_suffix(axis), axis, true, [w](double x) { return std::cos(w * x); },
                         [w](double x) { return -w * std::sin(w * x); },
                         [w](double x) { return -w * w * std::cos(w * x); });
}

TestFunction tanh_fn(std::size_t axis, double s) {
    return axis_function(
        "tanh" + axis_suffix(axis), axis, true, [s](double x) { return std::tanh(s * x); },
        [s](double x) {
            const double th = std::tanh(s * x);
            return s * (1.0 - th * th);
        },
        [s](double x) {
            const double th = std::tanh(s * x);
            return -2.0 * s * s * th * (1.0 - th * th);
        });
}

TestFunction bump(double c, double w, std::size_t axis) {
    const double iw2 = 1.0 / (w * w);
    return axis_function(
        "bump" + axis_suffix(axis), axis, true,
        [c, iw2](double x) { return std::exp(-0.5 * (x - c) * (x - c) * iw2); },
        [c, iw2](double x) { return -(x - c) * iw2 * std::exp(-0.5 * (x - c) * (x - c) * iw2); },
        [c, iw2](double x) {
            const double z = (x - c) * (x - c) * iw2;
            return (z - 1.0) * iw2 * std::exp(-0.5 * z);
        });
}

TestFunction clipped_square(std::size_t axis) {
    return axis_function(
        "xsq_clipped" + axis_suffix(axis), axis, true, [](double x) { return x * x / (1.0 + x * x); },
        [](double x) {
            const double q = 1.0 + x * x;
            return 2.0 * x / (q * q);
        },
        [](double x) {
            const double q = 1.0 + x * x;
            return (2.0 - 6.0 * x * x) / (q * q * q);
        });
}

TestFunction combine(double alpha, const TestFunction& phi, const TestFunction& psi) {
    TestFunction tf;
    tf.name = phi.name + "+" + psi.name;
    tf.bounded = phi.bounded && psi.bounded;
    tf.value = [alpha, a = phi.value, b = psi.value](std::span<const double> x) { return alpha * a(x) + b(x); };
    tf.gradient = [alpha, a = phi.gradient, b = psi.gradient](std::span<const double> x, std::span<double> out) {
        std::vector<double> tmp(out.size());
        a(x, out);
        b(x, tmp);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * out[i] + tmp[i];
    };
    tf.hessian = [alpha, a = phi.hessian, b = psi.hessian](std::span<const double> x, std::span<double> out) {
        std::vector<double> tmp(out.size());
        a(x, out);
        b(x, tmp);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * out[i] + tmp[i];
    };
    return tf;
}

std::optional<TestFunction> by_name(const std::string& name) {
    if (name == "one") return constant(1.0);
    if (name == "x") return coordinate(0);
    if (name == "x2") return square(0);
    if (name == "sin") return sine(0);
    if (name == "cos") return cosine(0);
    if (name == "tanh") return tanh_fn(0);
    if (name == "bump") return bump(0.0, 0.7);
    if (name == "bump_right") {
        auto tf = bump(0.8, 0.5);
        tf.name = "bump_right";
        return tf;
    }
    if (name == "xsq_clipped") return clipped_square(0);
    return std::nullopt;
}

std::vector<std::string> names() {
    return {"one", "x", "x2", "sin", "cos", "tanh", "bump", "bump_right", "xsq_clipped"};
}

}  // namespace test_functions

// ---------------------------------------------------------------- operators

ObservationFrame observation_frame(const CoefficientSet& c, double t, std::span<const double> y) {
    const auto& dm = c.dims;
    ObservationFrame fr;
    fr.k = Matrix(dm.d_obs, dm.l_obs);
    c.k(t, y, fr.k.data());
    if (!fr.k.all_finite()) throw ModelEvaluationError("non-finite k at t = " + std::to_string(t));
    fr.h1.assign(dm.d_obs, 0.0);
    c.h1(t, y, fr.h1);
    for (double v : fr.h1)
        if (!std::isfinite(v)) throw ModelEvaluationError("non-finite h1 at t = " + std::to_string(t));
    fr.k_pinv = pinv_oracle(fr.k);
    fr.proj = fr.k_pinv * fr.k;
    return fr;
}

ModelEvaluator::ModelEvaluator(const CoefficientSet& c) : c_(&c) {
    const auto& dm = c.dims;
    f_.resize(dm.d);
    g_.resize(dm.d * dm.l);
    gbar_.resize(dm.d * dm.l_obs);
    h2_.resize(dm.l_obs);
    grad_.resize(dm.d);
    hess_.resize(dm.d * dm.d);
    row_.resize(dm.l_obs);
}

namespace {

[[noreturn]] void evaluation_failure(const char* what, double t, std::span<const double> x,
                                     std::span<const double> y) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "non-finite " << what << " at t = " << t << ", x = (";
    for (std::size_t i = 0; i < x.size(); ++i) msg << (i ? ", " : "") << x[i];
    msg << "), y = (";
    for (std::size_t i = 0; i < y.size(); ++i) msg << (i ? ", " : "") << y[i];
    msg << ")";
    throw ModelEvaluationError(msg.str());
}

bool finite(std::span<const double> v) {
    for (double e : v)
        if (!std::isfinite(e)) return false;
    return true;
}

}  // namespace

void ModelEvaluator::eval(double t, std::span<const double> x, std::span<const double> y) {
    t_ = t;
    c_->f(t, x, y, f_);
    c_->g(t, x, y, g_);
    c_->g_bar(t, x, y, gbar_);
    c_->h2(t, x, y, h2_);
    if (!finite(f_)) evaluation_failure("f", t, x, y);
    if (!finite(g_)) evaluation_failure("g", t, x, y);
    if (!finite(gbar_)) evaluation_failure("g_bar", t, x, y);
    if (!finite(h2_)) evaluation_failure("h2", t, x, y);
}

double ModelEvaluator::a(std::size_t i, std::size_t j) const {
    const auto& dm = c_->dims;
    double s = 0.0;
    for (std::size_t m = 0; m < dm.l; ++m) s += g_[i * dm.l + m] * g_[j * dm.l + m];
    for (std::size_t m = 0; m < dm.l_obs; ++m) s += gbar_[i * dm.l_obs + m] * gbar_[j * dm.l_obs + m];
    return s;
}

double ModelEvaluator::generator(const TestFunction& phi, std::span<const double> x) {
    const std::size_t d = c_->dims.d;
    phi.gradient(x, grad_);
    phi.hessian(x, hess_);
    double out = 0.0;
    for (std::size_t i = 0; i < d; ++i) out += f_[i] * grad_[i];
    double second = 0.0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double hij = hess_[i * d + j];
            if (hij != 0.0) second += a(i, j) * hij;
        }
    return out + 0.5 * second;
}

void ModelEvaluator::weak_row(const TestFunction& phi, std::span<const double> x, std::span<double> out) {
    const auto& dm = c_->dims;
    phi.gradient(x, grad_);
    const double v = phi.value(x);
    for (std::size_t j = 0; j < dm.l_obs; ++j) {
        double s = v * h2_[j];
        for (std::size_t i = 0; i < dm.d; ++i) s += grad_[i] * gbar_[i * dm.l_obs + j];
        out[j] = s;
    }
}

void ModelEvaluator::b_terms(const TestFunction& phi, std::span<const double> x, const Matrix& proj,
                             std::span<double> out) {
    const std::size_t lo = c_->dims.l_obs;
    weak_row(phi, x, row_);
    for (std::size_t j = 0; j < lo; ++j) {
        double s = 0.0;
        for (std::size_t m = 0; m < lo; ++m) s += row_[m] * proj(m, j);
        out[j] = s;
    }
}

double generator_apply(const CoefficientSet& c, double t, std::span<const double> x, std::span<const double> y,
                       const TestFunction& phi) {
    ModelEvaluator ev(c);
    ev.eval(t, x, y);
    return ev.generator(phi, x);
}

double b_apply(const CoefficientSet& c, std::size_t j, double t, std::span<const double> x,
               std::span<const double> y, const TestFunction& phi) {
    if (j >= c.dims.l_obs) throw InvalidInputError("noise index out of range");
    const ObservationFrame fr = observation_frame(c, t, y);
    ModelEvaluator ev(c);
    ev.eval(t, x, y);
    std::vector<double> out(c.dims.l_obs);
    ev.b_terms(phi, x, fr.proj, out);
    return out[j];
}

// ---------------------------------------------------------------- assumption probes

namespace {

struct Channel {
    std::string name;
    std::size_t size;
    std::function<void(double, std::span<const double>, std::span<const double>, std::span<double>)> eval;
};

std::vector<Channel> channels(const CoefficientSet& c) {
    const auto& dm = c.dims;
    auto obs = [](const ObsFn& fn) {
        return [fn](double t, std::span<const double>, std::span<const double> y, std::span<double> out) {
            fn(t, y, out);
        };
    };
    return {{"f", dm.d, c.f},
            {"g", dm.d * dm.l, c.g},
            {"g_bar", dm.d * dm.l_obs, c.g_bar},
            {"h1", dm.d_obs, obs(c.h1)},
            {"h2", dm.l_obs, c.h2},
            {"k", dm.d_obs * dm.l_obs, obs(c.k)}};
}

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    return std::sqrt(s);
}

}  // namespace

AssumptionReport check_assumptions(const ScenarioSpec& spec, std::size_t n_samples) {
    if (n_samples < 2) throw InvalidInputError("check_assumptions needs at least two samples");
    const auto& dm = spec.dims();
    AssumptionReport rep;
    rep.radii = {1.0, 10.0, 100.0, 1000.0};
    rep.declared_smoothness = spec.smoothness_order;
    std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    const std::size_t nx = dm.d, ny = dm.d_obs;
    const double delta = 1e-3, fd = 1e-4;
    for (const auto& ch : channels(spec.coeffs)) {
        CoefficientProbe pr;
        pr.name = ch.name;
        std::vector<double> x(nx), y(ny), x2(nx), y2(ny), v(ch.size), v2(ch.size), vp(ch.size), vm(ch.size);
        for (double R : rep.radii) {
            double sup = 0.0, growth = 0.0, lip = 0.0;
            for (std::size_t s = 0; s < n_samples; ++s) {
                for (auto& e : x) e = R * unit(rng);
                for (auto& e : y) e = R * unit(rng);
                ch.eval(0.0, x, y, v);
                const double nv = norm(v);
                sup = std::max(sup, nv);
                growth = std::max(growth, nv / (1.0 + norm(x) + norm(y)));
                for (std::size_t i = 0; i < nx; ++i) x2[i] = x[i] + delta * unit(rng);
                for (std::size_t i = 0; i < ny; ++i) y2[i] = y[i] + delta * unit(rng);
                ch.eval(0.0, x2, y2, v2);
                double dist = 0.0, dv = 0.0;
                for (std::size_t i = 0; i < nx; ++i) dist += (x2[i] - x[i]) * (x2[i] - x[i]);
                for (std::size_t i = 0; i < ny; ++i) dist += (y2[i] - y[i]) * (y2[i] - y[i]);
                for (std::size_t i = 0; i < ch.size; ++i) dv += (v2[i] - v[i]) * (v2[i] - v[i]);
                if (dist > 0.0) lip = std::max(lip, std::sqrt(dv / dist));
                // Central differences in each x and y direction.
                if (R <= 10.0) {
                    for (std::size_t i = 0; i < nx + ny; ++i) {
                        auto& coord = i < nx ? x[i] : y[i - nx];
                        const double keep = coord;
                        coord = keep + fd;
                        ch.eval(0.0, x, y, vp);
                        coord = keep - fd;
                        ch.eval(0.0, x, y, vm);
                        coord = keep;
                        for (std::size_t m = 0; m < ch.size; ++m) {
                            pr.d1_sup = std::max(pr.d1_sup, std::abs(vp[m] - vm[m]) / (2.0 * fd));
                            pr.d2_sup = std::max(pr.d2_sup, std::abs(vp[m] - 2.0 * v[m] + vm[m]) / (fd * fd));
                        }
                    }
                }
            }
            pr.sup_abs.push_back(sup);
            pr.growth.push_back(growth);
            pr.lipschitz.push_back(lip);
        }
        // A tenfold increase between the small and the large boxes is read
        // as unbounded behaviour.
        const double tiny = 1e-12;
        pr.bounded = pr.sup_abs.back() <= 10.0 * std::max(pr.sup_abs.front(), tiny);
        pr.linear_growth = pr.growth.back() <= 10.0 * std::max({pr.growth[0], pr.growth[1], tiny});
        pr.global_lipschitz = pr.lipschitz.back() <= 10.0 * std::max({pr.lipschitz[0], pr.lipschitz[1], tiny});
        rep.all_bounded = rep.all_bounded && pr.bounded;
        rep.all_linear_growth = rep.all_linear_growth && pr.linear_growth;
        rep.all_global_lipschitz = rep.all_global_lipschitz && pr.global_lipschitz;
        rep.derivative_sup = std::max({rep.derivative_sup, pr.d1_sup, pr.d2_sup, pr.sup_abs.back()});
        rep.probes.push_back(std::move(pr));
    }
    if (spec.declared_bound > 0.0) rep.derivatives_within_bound = rep.derivative_sup < spec.declared_bound;
    return rep;
}

// ---------------------------------------------------------------- scenarios

namespace {

using Span = std::span<const double>;
using Out = std::span<double>;

ScenarioSpec linear_gaussian() {
    ScenarioSpec s;
    s.name = "linear_gaussian";
    auto& c = s.coeffs;
    c.dims = {2, 1, 2, 1};
    c.f = [](double, Span x, Span, Out o) {
        o[0] = -1.0 * x[0] + 0.5 * x[1];
        o[1] = -0.5 * x[0] - 1.0 * x[1];
    };
    c.g = [](double, Span, Span, Out o) {
        o[0] = 0.8;
        o[1] = 0.0;
        o[2] = 0.0;
        o[3] = 0.6;
    };
    c.g_bar = [](double, Span, Span, Out o) {
        o[0] = 0.5;
        o[1] = 0.3;
    };
    c.h1 = [](double, Span, Out o) { o[0] = 0.0; };
    c.h2 = [](double, Span x, Span, Out o) { o[0] = x[0] + 0.5 * x[1]; };
    c.k = [](double, Span, Out o) { o[0] = 1.0; };
    s.initial = {{1.0, -0.5}, {0.7, 0.7}, {0.0}};
    s.y_free = true;
    s.smoothness_order = 3;
    return s;
}

ScenarioSpec degenerate_k0() {
    ScenarioSpec s;
    s.name = "degenerate_k0";
    auto& c = s.coeffs;
    c.dims = {1, 1, 1, 1};
    c.f = [](double, Span x, Span, Out o) { o[0] = -x[0]; };
    c.g = [](double, Span, Span, Out o) { o[0] = 1.0; };
    c.g_bar = [](double, Span, Span, Out o) { o[0] = 0.5; };
    c.h1 = [](double, Span, Out o) { o[0] = 1.0; };
    c.h2 = [](double, Span x, Span, Out o) { o[0] = std::sin(x[0]); };
    c.k = [](double, Span, Out o) { o[0] = 0.0; };
    s.initial = {{0.5}, {0.6}, {0.0}};
    s.y_free = true;
    s.smoothness_order = 3;
    return s;
}

ScenarioSpec correlated_bounded() {
    ScenarioSpec s;
    s.name = "correlated_bounded";
    auto& c = s.coeffs;
    c.dims = {1, 2, 1, 3};
    c.f = [](double, Span x, Span, Out o) { o[0] = -2.0 * std::tanh(x[0]); };
    c.g = [](double, Span x, Span, Out o) { o[0] = 0.8 + 0.2 * std::cos(x[0]); };
    c.g_bar = [](double, Span x, Span, Out o) {
        o[0] = 0.3 * std::cos(x[0]);
        o[1] = 0.2;
        o[2] = 0.4 * std::sin(x[0]);
    };
    c.h1 = [](double, Span y, Out o) {
        o[0] = 0.5 * std::tanh(y[0]);
        o[1] = -0.2 * std::tanh(y[1]);
    };
    c.h2 = [](double, Span x, Span, Out o) {
        o[0] = std::sin(x[0]);
        o[1] = std::cos(x[0]);
        o[2] = 0.5 * std::tanh(x[0]);
    };
    // Rank one: k = s(y) u v^T with u = (1, 0.5), v = (1, 1, 0) / sqrt 2.
    c.k = [](double, Span y, Out o) {
        const double sc = (1.0 + 0.3 * std::tanh(y[0])) / std::numbers::sqrt2;
        o[0] = sc;
        o[1] = sc;
        o[2] = 0.0;
        o[3] = 0.5 * sc;
        o[4] = 0.5 * sc;
        o[5] = 0.0;
    };
    s.initial = {{0.0}, {0.5}, {0.0, 0.0}};
    s.declared_bound = 4.0;
    s.smoothness_order = 3;
    return s;
}

ScenarioSpec decoupled_classical() {
    ScenarioSpec s;
    s.name = "decoupled_classical";
    auto& c = s.coeffs;
    c.dims = {1, 1, 1, 1};
    c.f = [](double, Span x, Span, Out o) { o[0] = -std::tanh(x[0]); };
    c.g = [](double, Span, Span, Out o) { o[0] = 1.0; };
    c.g_bar = [](double, Span, Span, Out o) { o[0] = 0.4; };
    c.h1 = [](double, Span, Out o) { o[0] = 0.0; };
    c.h2 = [](double, Span x, Span, Out o) { o[0] = 0.5 * std::sin(x[0]); };
    c.k = [](double, Span, Out o) { o[0] = 1.0; };
    s.initial = {{0.0}, {0.5}, {0.0}};
    s.y_free = true;
    s.declared_bound = 2.0;
    s.smoothness_order = 3;
    return s;
}

// Pure diffusion with tanh drift and no observation coupling: the dual
// problem becomes a backward Kolmogorov equation.
ScenarioSpec kolmogorov_plain() {
    ScenarioSpec s = decoupled_classical();
    s.name = "kolmogorov_plain";
    s.coeffs.g_bar = [](double, Span, Span, Out o) { o[0] = 0.0; };
    s.coeffs.h2 = [](double, Span, Span, Out o) { o[0] = 0.0; };
    return s;
}

}  // namespace

std::vector<NamedScenario> builtin_scenarios() {
    std::vector<NamedScenario> out;
    for (auto&& s : {linear_gaussian(), degenerate_k0(), correlated_bounded(), decoupled_classical(),
                     kolmogorov_plain()})
        out.push_back({s.name, s});
    return out;
}

std::optional<ScenarioSpec> find_scenario(const std::string& name) {
    for (auto& s : builtin_scenarios())
        if (s.name == name) return s.spec;
    return std::nullopt;
}

}  // namespace filterlab
