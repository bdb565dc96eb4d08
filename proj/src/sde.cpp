#include "filterlab/sde.hpp"

#include <cmath>

#include "filterlab/csv.hpp"
#include "filterlab/errors.hpp"

namespace filterlab {

bool exceeds_guard(std::span<const double> v) {
    for (double e : v)
        if (!(std::abs(e) <= kExplosionGuard)) return true;
    return false;
}

namespace {

PathBundle empty_bundle(const ScenarioSpec& spec) {
    spec.validate();
    const auto& dm = spec.dims();
    PathBundle b;
    b.grid = spec.time_grid();
    b.d = dm.d;
    b.d_obs = dm.d_obs;
    const std::size_t n = b.grid.n_steps;
    b.x_path.assign((n + 1) * dm.d, 0.0);
    b.y_path.assign((n + 1) * dm.d_obs, 0.0);
    b.noise = {n, dm.l, dm.l_obs, std::vector<double>(n * dm.l), std::vector<double>(n * dm.l_obs)};
    b.w_tilde.assign(n * dm.l_obs, 0.0);
    return b;
}

// Shared by both measures. reference = true draws dW~ and derives dW.
PathBundle simulate(const ScenarioSpec& spec, RngStream& rng, bool reference) {
    PathBundle b = empty_bundle(spec);
    const auto& dm = spec.dims();
    const auto& c = spec.coeffs;
    const double dt = b.grid.dt(), sq = std::sqrt(dt);

    std::span<double> x0{b.x_path.data(), dm.d};
    spec.initial.sample_x(rng, x0);
    std::copy(spec.initial.y0.begin(), spec.initial.y0.end(), b.y_path.begin());

    ModelEvaluator ev(c);
    std::vector<double> h1(dm.d_obs), k(dm.d_obs * dm.l_obs);
    for (std::size_t n = 0; n < b.grid.n_steps; ++n) {
        const double t = b.grid.time(n);
        std::span<const double> x{b.x_path.data() + n * dm.d, dm.d};
        std::span<const double> y{b.y_path.data() + n * dm.d_obs, dm.d_obs};
        std::span<double> xn{b.x_path.data() + (n + 1) * dm.d, dm.d};
        std::span<double> yn{b.y_path.data() + (n + 1) * dm.d_obs, dm.d_obs};
        std::span<double> dv{b.noise.dV.data() + n * dm.l, dm.l};
        std::span<double> dw{b.noise.dW.data() + n * dm.l_obs, dm.l_obs};
        std::span<double> dwt{b.w_tilde.data() + n * dm.l_obs, dm.l_obs};

        ev.eval(t, x, y);
        c.h1(t, y, h1);
        c.k(t, y, k);
        rng.normals(dv, sq);
        const auto h2 = ev.h2();
        if (reference) {
            rng.normals(dwt, sq);
            for (std::size_t j = 0; j < dm.l_obs; ++j) dw[j] = dwt[j] - h2[j] * dt;
        } else {
            rng.normals(dw, sq);
            for (std::size_t j = 0; j < dm.l_obs; ++j) dwt[j] = dw[j] + h2[j] * dt;
        }
        const auto f = ev.f(), g = ev.g(), gb = ev.g_bar();
        for (std::size_t i = 0; i < dm.d; ++i) {
            double drift = f[i];
            double diff = 0.0;
            for (std::size_t m = 0; m < dm.l; ++m) diff += g[i * dm.l + m] * dv[m];
            for (std::size_t m = 0; m < dm.l_obs; ++m) diff += gb[i * dm.l_obs + m] * dw[m];
            xn[i] = x[i] + drift * dt + diff;
        }
        for (std::size_t i = 0; i < dm.d_obs; ++i) {
            double kh2 = 0.0, kdw = 0.0;
            for (std::size_t m = 0; m < dm.l_obs; ++m) {
                kh2 += k[i * dm.l_obs + m] * h2[m];
                kdw += k[i * dm.l_obs + m] * dw[m];
            }
            yn[i] = y[i] + (h1[i] + kh2) * dt + kdw;
        }
        if (exceeds_guard(xn) || exceeds_guard(yn)) throw ExplosionError("path left the overflow guard", n + 1);
    }
    return b;
}

}  // namespace

PathBundle simulate_joint(const ScenarioSpec& spec, RngStream& rng) {
    return simulate(spec, rng, false);
}

PathBundle simulate_reference(const ScenarioSpec& spec, RngStream& rng) {
    return simulate(spec, rng, true);
}

ObservationTrack make_track(const ScenarioSpec& spec, std::span<const double> y_path) {
    spec.validate();
    const auto& dm = spec.dims();
    ObservationTrack tr;
    tr.grid = spec.time_grid();
    tr.d_obs = dm.d_obs;
    tr.l_obs = dm.l_obs;
    const std::size_t n = tr.grid.n_steps;
    if (y_path.size() != (n + 1) * dm.d_obs) throw InvalidInputError("observation path does not match the time grid");
    tr.y_path.assign(y_path.begin(), y_path.end());

    const bool constant = spec.y_free && spec.autonomous;
    if (constant) {
        tr.frames.push_back(observation_frame(spec.coeffs, 0.0, tr.y(0)));
    } else {
        tr.frames.reserve(n + 1);
        for (std::size_t i = 0; i <= n; ++i) tr.frames.push_back(observation_frame(spec.coeffs, tr.grid.time(i), tr.y(i)));
    }
    tr.k_zero = true;
    for (const auto& fr : tr.frames) tr.k_zero = tr.k_zero && fr.k.max_abs() == 0.0;

    const double dt = tr.grid.dt();
    tr.projected.assign(n * dm.l_obs, 0.0);
    std::vector<double> dn(dm.d_obs);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& fr = tr.frame(i);
        const auto y0 = tr.y(i), y1 = tr.y(i + 1);
        for (std::size_t m = 0; m < dm.d_obs; ++m) dn[m] = y1[m] - y0[m] - fr.h1[m] * dt;
        matvec(fr.k_pinv, dn, {tr.projected.data() + i * dm.l_obs, dm.l_obs});
    }
    return tr;
}

ConditionalStepper::ConditionalStepper(const CoefficientSet& c)
    : ev_(c), dv_(c.dims.l), xi_(c.dims.l_obs) {}

double ConditionalStepper::step(double t, double dt, std::span<double> x, std::span<const double> y,
                                const ObservationFrame& fr, std::span<const double> dproj, RngStream& rng,
                                std::span<double> dw_tilde) {
    const auto& dm = ev_.coeffs().dims;
    const double sq = std::sqrt(dt);
    ev_.eval(t, x, y);
    rng.normals(dv_, sq);
    rng.normals(xi_, sq);
    // dW~ = dproj + xi - P xi
    for (std::size_t j = 0; j < dm.l_obs; ++j) {
        double pxi = 0.0;
        for (std::size_t m = 0; m < dm.l_obs; ++m) pxi += fr.proj(j, m) * xi_[m];
        dw_tilde[j] = dproj[j] + (xi_[j] - pxi);
    }
    const auto f = ev_.f(), g = ev_.g(), gb = ev_.g_bar(), h2 = ev_.h2();
    double logw = 0.0;
    for (std::size_t j = 0; j < dm.l_obs; ++j) logw += h2[j] * dw_tilde[j] - 0.5 * h2[j] * h2[j] * dt;
    for (std::size_t i = 0; i < dm.d; ++i) {
        double drift = f[i];
        double diff = 0.0;
        for (std::size_t m = 0; m < dm.l; ++m) diff += g[i * dm.l + m] * dv_[m];
        for (std::size_t m = 0; m < dm.l_obs; ++m) {
            drift -= gb[i * dm.l_obs + m] * h2[m];
            diff += gb[i * dm.l_obs + m] * dw_tilde[m];
        }
        x[i] += drift * dt + diff;
    }
    return logw;
}

SignalDraw simulate_signal_given_obs(const ScenarioSpec& spec, std::span<const double> y_path, RngStream& rng) {
    return simulate_signal_given_obs(spec, make_track(spec, y_path), rng);
}

SignalDraw simulate_signal_given_obs(const ScenarioSpec& spec, const ObservationTrack& track, RngStream& rng) {
    const auto& dm = spec.dims();
    if (track.l_obs != dm.l_obs || track.d_obs != dm.d_obs) throw InvalidInputError("observation track dimension mismatch");
    const std::size_t n = track.grid.n_steps;
    SignalDraw out{std::vector<double>((n + 1) * dm.d), std::vector<double>(n * dm.l_obs)};
    std::vector<double> x(dm.d);
    spec.initial.sample_x(rng, x);
    std::copy(x.begin(), x.end(), out.x_path.begin());
    ConditionalStepper stepper(spec.coeffs);
    const double dt = track.grid.dt();
    for (std::size_t i = 0; i < n; ++i) {
        stepper.step(track.grid.time(i), dt, x, track.y(i), track.frame(i), track.dproj(i), rng,
                     {out.w_tilde.data() + i * dm.l_obs, dm.l_obs});
        if (exceeds_guard(x)) throw ExplosionError("signal left the overflow guard", i + 1);
        std::copy(x.begin(), x.end(), out.x_path.begin() + static_cast<std::ptrdiff_t>((i + 1) * dm.d));
    }
    return out;
}

std::filesystem::path write_paths_csv(const PathBundle& paths, const std::filesystem::path& dir, std::size_t replica) {
    std::filesystem::create_directories(dir);
    const auto file = dir / ("paths_" + std::to_string(replica) + ".csv");
    std::vector<std::string> header{"t"};
    for (std::size_t i = 0; i < paths.d; ++i) header.push_back("x_" + std::to_string(i + 1));
    for (std::size_t i = 0; i < paths.d_obs; ++i) header.push_back("y_" + std::to_string(i + 1));
    CsvWriter w(file, header);
    std::vector<double> row(1 + paths.d + paths.d_obs);
    for (std::size_t n = 0; n <= paths.grid.n_steps; ++n) {
        row[0] = paths.grid.time(n);
        const auto x = paths.x(n), y = paths.y(n);
        std::copy(x.begin(), x.end(), row.begin() + 1);
        std::copy(y.begin(), y.end(), row.begin() + 1 + static_cast<std::ptrdiff_t>(paths.d));
        w.row(row);
    }
    return file;
}

}  // namespace filterlab
