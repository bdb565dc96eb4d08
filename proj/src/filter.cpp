#include "filterlab/filter.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <random>

#include "filterlab/csv.hpp"
#include "filterlab/errors.hpp"
#include "filterlab/reduce.hpp"

namespace filterlab {

std::vector<double> ztilde_path(const CoefficientSet& c, const TimeGrid& grid, std::span<const double> x_path,
                                std::span<const double> y_path, std::span<const double> w_tilde) {
    const auto& dm = c.dims;
    const std::size_t n = grid.n_steps;
    if (x_path.size() != (n + 1) * dm.d || y_path.size() != (n + 1) * dm.d_obs || w_tilde.size() != n * dm.l_obs)
        throw InvalidInputError("ztilde_path: paths do not share the grid");
    std::vector<double> out(n + 1, 0.0), h2(dm.l_obs);
    const double dt = grid.dt();
    for (std::size_t i = 0; i < n; ++i) {
        c.h2(grid.time(i), x_path.subspan(i * dm.d, dm.d), y_path.subspan(i * dm.d_obs, dm.d_obs), h2);
        double inc = 0.0;
        for (std::size_t j = 0; j < dm.l_obs; ++j) {
            if (!std::isfinite(h2[j])) throw ModelEvaluationError("non-finite h2 in weight path");
            inc += h2[j] * w_tilde[i * dm.l_obs + j] - 0.5 * h2[j] * h2[j] * dt;
        }
        out[i + 1] = out[i] + inc;
    }
    return out;
}

ParticleSystem::ParticleSystem(const ScenarioSpec& spec, std::size_t n_particles, StreamKey key)
    : n(n_particles), d(spec.dims().d), x(n_particles * spec.dims().d), logw(n_particles, 0.0),
      alive(n_particles, 1) {
    rng.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        rng.emplace_back(key.seed, key.replica, i, StreamRole::Particle);
        spec.initial.sample_x(rng.back(), {x.data() + i * d, d});
    }
}

namespace {

// Runs body(i, stepper) for every particle; the first failing particle (by
// index, not by time) decides which exception propagates.
template <class Body>
void for_each_particle(ParticleSystem& ps, const CoefficientSet& c, bool parallel, Body&& body) {
    const long long n = static_cast<long long>(ps.n);
    std::vector<std::exception_ptr> errors;
    long long first_error = n;
#pragma omp parallel if (parallel)
    {
        ConditionalStepper stepper(c);
        std::vector<double> scratch(c.dims.l_obs);
#pragma omp for schedule(static)
        for (long long i = 0; i < n; ++i) {
            try {
                body(static_cast<std::size_t>(i), stepper, scratch);
            } catch (...) {
#pragma omp critical(filterlab_particle_error)
                {
                    if (i < first_error) {
                        first_error = i;
                        errors.assign(1, std::current_exception());
                    }
                }
            }
        }
    }
    if (!errors.empty()) std::rethrow_exception(errors.front());
}

void advance(ParticleSystem& ps, const CoefficientSet& c, const ObservationTrack& track, std::size_t step,
             bool parallel) {
    const double t = track.grid.time(step), dt = track.grid.dt();
    const auto& fr = track.frame(step);
    const auto y = track.y(step);
    const auto dproj = track.dproj(step);
    for_each_particle(ps, c, parallel, [&](std::size_t i, ConditionalStepper& st, std::vector<double>& dw) {
        if (!ps.alive[i]) return;
        std::span<double> xi{ps.x.data() + i * ps.d, ps.d};
        ps.logw[i] += st.step(t, dt, xi, y, fr, dproj, ps.rng[i], dw);
        if (exceeds_guard(xi) || !std::isfinite(ps.logw[i])) {
            ps.alive[i] = 0;
            ps.logw[i] = -std::numeric_limits<double>::infinity();
        }
    });
    ps.exploded = static_cast<std::size_t>(std::count(ps.alive.begin(), ps.alive.end(), 0));
    if (ps.exploded == ps.n) throw ExplosionError("every particle left the overflow guard", step + 1);
}

double max_log_weight(std::span<const double> logw) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : logw) m = std::max(m, v);
    return m;
}

WeightedEnsemble snapshot(const ParticleSystem& ps, double t) {
    std::vector<double> lw(ps.logw.size());
    const double shift = std::log(static_cast<double>(ps.n));
    for (std::size_t i = 0; i < lw.size(); ++i) lw[i] = ps.logw[i] - shift;
    return WeightedEnsemble::from_log_weights(ps.d, ps.x, lw, t);
}

void resample(ParticleSystem& ps, const WeightedEnsemble& current, StreamKey key, std::size_t step) {
    const double m = current.mass() * static_cast<double>(ps.n);
    std::vector<double> w(current.stored_weights().begin(), current.stored_weights().end());
    RngStream rng(key.seed, key.replica, step, StreamRole::Resample);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    std::vector<double> nx(ps.x.size());
    for (std::size_t i = 0; i < ps.n; ++i) {
        const std::size_t src = pick(rng.engine());
        std::copy_n(ps.x.begin() + static_cast<std::ptrdiff_t>(src * ps.d), ps.d,
                    nx.begin() + static_cast<std::ptrdiff_t>(i * ps.d));
    }
    ps.x = std::move(nx);
    // Every particle carries the mean weight, so pi_t(1) is unchanged.
    const double lw = std::log(m / static_cast<double>(ps.n));
    std::fill(ps.logw.begin(), ps.logw.end(), lw);
    std::fill(ps.alive.begin(), ps.alive.end(), 1);
    ps.exploded = 0;
}

}  // namespace

void advance_particles(ParticleSystem& ps, const CoefficientSet& c, const ObservationTrack& track, std::size_t step) {
    advance(ps, c, track, step, true);
}

void advance_particles_serial(ParticleSystem& ps, const CoefficientSet& c, const ObservationTrack& track,
                              std::size_t step) {
    advance(ps, c, track, step, false);
}

FilterRun ks_filter(const ScenarioSpec& spec, std::span<const double> y_path, StreamKey key, const FilterOptions& opts) {
    return ks_filter(spec, make_track(spec, y_path), key, opts);
}

FilterRun ks_filter(const ScenarioSpec& spec, ObservationTrack track, StreamKey key, const FilterOptions& opts) {
    spec.validate();
    const std::size_t N = opts.n_particles ? opts.n_particles : spec.n_particles;
    if (N == 0) throw ConfigurationError("filter needs at least one particle");
    FilterRun run{spec, std::move(track), {}, {}, {}};
    const auto& grid = run.track.grid;
    if (!(grid == spec.time_grid())) throw InvalidInputError("observation path is not on the scenario grid");

    ParticleSystem ps(spec, N, key);
    run.ensembles.reserve(grid.n_steps + 1);
    auto record = [&](std::size_t n) {
        run.ensembles.push_back(snapshot(ps, grid.time(n)));
        const auto& e = run.ensembles.back();
        run.mass.values.push_back(e.mass());
        run.diagnostics.ess.push_back(effective_sample_size(e));
        run.diagnostics.log_weight_sup.push_back(max_log_weight(ps.logw));
    };
    record(0);
    for (std::size_t n = 0; n < grid.n_steps; ++n) {
        advance_particles(ps, spec.coeffs, run.track, n);
        record(n + 1);
        if (opts.resample && run.diagnostics.ess.back() < opts.ess_fraction * static_cast<double>(N)) {
            resample(ps, run.ensembles.back(), key, n + 1);
            ++run.diagnostics.resample_count;
        }
        if (!(run.mass.values.back() > 0.0))
            throw DegenerateMeasureError("filter mass vanished at step " + std::to_string(n + 1));
    }
    run.diagnostics.exploded = ps.exploded;
    return run;
}

double ResidualPath::max_abs() const {
    double m = 0.0;
    for (double r : residual) m = std::max(m, std::abs(r));
    return m;
}

namespace {

// mu_n(phi), mu_n(A phi), mu_n(grad phi gbar + phi h2^T) and mu_n(h2) for all
// test functions at one grid time.
struct Moments {
    std::vector<double> value, gen;
    std::vector<std::vector<double>> row;  // per phi, l_obs entries
    std::vector<double> h2;
    double mass = 0.0;
};

Moments moments_at(const ScenarioSpec& spec, const ObservationTrack& track, const WeightedEnsemble& mu,
                   std::size_t n, std::span<const TestFunction> phis) {
    const auto& dm = spec.dims();
    const std::size_t N = mu.size(), P = phis.size(), L = dm.l_obs;
    // Per-particle integrands, laid out [quantity][particle].
    const std::size_t per = 2 * P + P * L + L;
    std::vector<double> vals(per * N);
    const double t = track.grid.time(n);
    const auto y = track.y(n);
    const long long Nl = static_cast<long long>(N);
    std::vector<std::exception_ptr> err(1);
    bool failed = false;
#pragma omp parallel
    {
        ModelEvaluator ev(spec.coeffs);
        std::vector<double> row(L);
#pragma omp for schedule(static)
        for (long long ii = 0; ii < Nl; ++ii) {
            const std::size_t i = static_cast<std::size_t>(ii);
            try {
                const auto x = mu.point(i);
                ev.eval(t, x, y);
                for (std::size_t p = 0; p < P; ++p) {
                    vals[(2 * p) * N + i] = phis[p].value(x);
                    vals[(2 * p + 1) * N + i] = ev.generator(phis[p], x);
                    ev.weak_row(phis[p], x, row);
                    for (std::size_t j = 0; j < L; ++j) vals[(2 * P + p * L + j) * N + i] = row[j];
                }
                for (std::size_t j = 0; j < L; ++j) vals[(2 * P + P * L + j) * N + i] = ev.h2()[j];
            } catch (...) {
#pragma omp critical(filterlab_moment_error)
                {
                    failed = true;
                    err[0] = std::current_exception();
                }
            }
        }
    }
    if (failed) std::rethrow_exception(err[0]);
    auto pair = [&](std::size_t q) { return integrate_values(mu, {vals.data() + q * N, N}); };
    Moments m;
    m.mass = mu.mass();
    for (std::size_t p = 0; p < P; ++p) {
        m.value.push_back(pair(2 * p));
        m.gen.push_back(pair(2 * p + 1));
        std::vector<double> r(L);
        for (std::size_t j = 0; j < L; ++j) r[j] = pair(2 * P + p * L + j);
        m.row.push_back(std::move(r));
    }
    for (std::size_t j = 0; j < L; ++j) m.h2.push_back(pair(2 * P + P * L + j));
    return m;
}

void check_path(const ObservationTrack& track, std::span<const WeightedEnsemble> path) {
    if (path.size() != track.grid.n_steps + 1) throw InvalidInputError("measure path does not match the time grid");
}

}  // namespace

std::vector<ResidualPath> zakai_residuals(const ScenarioSpec& spec, const ObservationTrack& track,
                                          std::span<const WeightedEnsemble> path, std::span<const TestFunction> phis) {
    check_path(track, path);
    const std::size_t n_steps = track.grid.n_steps, P = phis.size(), L = spec.dims().l_obs;
    const double dt = track.grid.dt();
    std::vector<ResidualPath> out(P);
    std::vector<double> drift(P, 0.0), stoch(P, 0.0), v0(P, 0.0);
    for (std::size_t n = 0; n <= n_steps; ++n) {
        const Moments m = moments_at(spec, track, path[n], n, phis);
        for (std::size_t p = 0; p < P; ++p) {
            if (n == 0) v0[p] = m.value[p];
            out[p].value.push_back(m.value[p]);
            out[p].drift.push_back(drift[p]);
            out[p].stochastic.push_back(stoch[p]);
            out[p].residual.push_back(m.value[p] - v0[p] - drift[p] - stoch[p]);
            if (n == n_steps) continue;
            const auto dproj = track.dproj(n);
            double s = 0.0;
            for (std::size_t j = 0; j < L; ++j) {
                if (!std::isfinite(m.row[p][j]))
                    throw ModelEvaluationError("non-finite stochastic integrand at step " + std::to_string(n));
                s += m.row[p][j] * dproj[j];
            }
            drift[p] += m.gen[p] * dt;
            stoch[p] += s;
        }
    }
    return out;
}

ResidualPath zakai_residual(const FilterRun& run, const TestFunction& phi) {
    return zakai_residuals(run.spec, run.track, run.ensembles, std::span<const TestFunction>(&phi, 1)).front();
}

std::vector<WeightedEnsemble> ks_path(const FilterRun& run) {
    std::vector<WeightedEnsemble> out;
    out.reserve(run.ensembles.size());
    for (const auto& e : run.ensembles) out.push_back(normalize(e));
    return out;
}

std::vector<ResidualPath> ks_residuals(const ScenarioSpec& spec, const ObservationTrack& track,
                                       std::span<const WeightedEnsemble> sigma, std::span<const TestFunction> phis) {
    check_path(track, sigma);
    const std::size_t n_steps = track.grid.n_steps, P = phis.size(), L = spec.dims().l_obs;
    const double dt = track.grid.dt();
    std::vector<ResidualPath> out(P);
    std::vector<double> drift(P, 0.0), stoch(P, 0.0), v0(P, 0.0), innov(L);
    for (std::size_t n = 0; n <= n_steps; ++n) {
        const Moments m = moments_at(spec, track, sigma[n], n, phis);
        if (n < n_steps) {
            // k+(dY - sigma(h) dt) = dproj - k+k sigma(h2) dt
            const auto& fr = track.frame(n);
            const auto dproj = track.dproj(n);
            for (std::size_t j = 0; j < L; ++j) {
                double ph = 0.0;
                for (std::size_t q = 0; q < L; ++q) ph += fr.proj(j, q) * m.h2[q];
                innov[j] = dproj[j] - ph * dt;
            }
        }
        for (std::size_t p = 0; p < P; ++p) {
            if (n == 0) v0[p] = m.value[p];
            out[p].value.push_back(m.value[p]);
            out[p].drift.push_back(drift[p]);
            out[p].stochastic.push_back(stoch[p]);
            out[p].residual.push_back(m.value[p] - v0[p] - drift[p] - stoch[p]);
            if (n == n_steps) continue;
            double s = 0.0;
            for (std::size_t j = 0; j < L; ++j) s += (m.row[p][j] - m.value[p] * m.h2[j]) * innov[j];
            drift[p] += m.gen[p] * dt;
            stoch[p] += s;
        }
    }
    return out;
}

MassPath mass_process(std::span<const WeightedEnsemble> sigma, const ObservationTrack& track, const CoefficientSet& c) {
    check_path(track, sigma);
    const auto& dm = c.dims;
    MassPath j;
    j.values.reserve(sigma.size());
    j.values.push_back(1.0);
    std::vector<double> h2vals(dm.l_obs);
    for (std::size_t n = 0; n + 1 < sigma.size(); ++n) {
        const auto& mu = sigma[n];
        const double t = track.grid.time(n);
        const auto y = track.y(n);
        const auto dproj = track.dproj(n);
        double factor = 1.0;
        if (!track.k_zero) {
            // sigma_n(h2) . dproj; dproj already carries k+.
            std::vector<double> per(mu.size());
            for (std::size_t i = 0; i < mu.size(); ++i) {
                c.h2(t, mu.point(i), y, h2vals);
                double s = 0.0;
                for (std::size_t q = 0; q < dm.l_obs; ++q) s += h2vals[q] * dproj[q];
                per[i] = s;
            }
            factor += integrate_values(mu, per);
        }
        const double next = j.values.back() * factor;
        if (!(next > 0.0))
            throw PositivityLossError("mass process lost positivity; reduce dt or switch to a log-Euler update", n + 1);
        j.values.push_back(next);
    }
    return j;
}

std::vector<WeightedEnsemble> reconstruct_pi(std::span<const WeightedEnsemble> sigma, const MassPath& mass) {
    if (sigma.size() != mass.values.size()) throw InvalidInputError("mass path and measure path lengths differ");
    std::vector<WeightedEnsemble> out;
    out.reserve(sigma.size());
    for (std::size_t n = 0; n < sigma.size(); ++n)
        out.push_back(mass.values[n] == 1.0 ? sigma[n] : sigma[n].scaled(mass.values[n]));
    return out;
}

void write_filter_report(const FilterRun& run, const MassPath& j, std::span<const TestFunction> phis,
                         const std::filesystem::path& file) {
    std::vector<std::string> header{"t", "pi_mass", "j_mass", "ess"};
    for (const auto& p : phis) header.push_back("est_" + p.name);
    CsvWriter w(file, header);
    for (std::size_t n = 0; n < run.ensembles.size(); ++n) {
        const auto sig = normalize(run.ensembles[n]);
        std::vector<double> row{run.track.grid.time(n), run.mass.values[n], j.values[n], run.diagnostics.ess[n]};
        for (const auto& p : phis) row.push_back(integrate(sig, p));
        w.row(row);
    }
}

}  // namespace filterlab
