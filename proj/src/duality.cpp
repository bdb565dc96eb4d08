#include "filterlab/duality.hpp"

#include <cmath>
#include <limits>

#include "filterlab/csv.hpp"
#include "filterlab/errors.hpp"
#include "filterlab/filter.hpp"
#include "filterlab/parallel.hpp"
#include "filterlab/reduce.hpp"

namespace filterlab {

namespace {

void check_increments(const FrequencyChoice& r, const TimeGrid& grid, std::span<const double> w) {
    if (w.size() != grid.n_steps * r.l_obs) throw InvalidInputError("theta: increments do not match the grid");
}

}  // namespace

ThetaPath theta_path(const FrequencyChoice& r, const TimeGrid& grid, std::span<const double> w_tilde) {
    check_increments(r, grid, w_tilde);
    const std::size_t L = r.l_obs;
    const double dt = grid.dt();
    ThetaPath th;
    th.values.reserve(grid.n_steps + 1);
    th.values.emplace_back(1.0, 0.0);
    std::vector<double> rv(L);
    double phase = 0.0, growth = 0.0;
    for (std::size_t n = 0; n < grid.n_steps; ++n) {
        r.value_at(grid.time(n), rv);
        for (std::size_t j = 0; j < L; ++j) {
            phase += rv[j] * w_tilde[n * L + j];
            growth += 0.5 * rv[j] * rv[j] * dt;
        }
        th.values.push_back(std::polar(std::exp(growth), phase));
    }
    return th;
}

ThetaPath theta_euler(const FrequencyChoice& r, const TimeGrid& grid, std::span<const double> w_tilde) {
    check_increments(r, grid, w_tilde);
    const std::size_t L = r.l_obs;
    ThetaPath th;
    th.values.reserve(grid.n_steps + 1);
    th.values.emplace_back(1.0, 0.0);
    std::vector<double> rv(L);
    for (std::size_t n = 0; n < grid.n_steps; ++n) {
        r.value_at(grid.time(n), rv);
        double s = 0.0;
        for (std::size_t j = 0; j < L; ++j) s += rv[j] * w_tilde[n * L + j];
        th.values.push_back(th.values.back() * std::complex<double>(1.0, s));
    }
    return th;
}

ThetaPath theta_observation(const FrequencyChoice& r, const ObservationTrack& track) {
    if (r.l_obs != track.d_obs) throw InvalidInputError("theta_observation: r needs d_obs components");
    const auto& grid = track.grid;
    const std::size_t D = track.d_obs, L = track.l_obs;
    const double dt = grid.dt();
    ThetaPath th;
    th.values.reserve(grid.n_steps + 1);
    th.values.emplace_back(1.0, 0.0);
    std::vector<double> rv(D);
    double phase = 0.0, growth = 0.0;
    for (std::size_t n = 0; n < grid.n_steps; ++n) {
        r.value_at(grid.time(n), rv);
        const auto& fr = track.frame(n);
        const auto y0 = track.y(n), y1 = track.y(n + 1);
        for (std::size_t m = 0; m < D; ++m) phase += rv[m] * (y1[m] - y0[m] - fr.h1[m] * dt);
        for (std::size_t j = 0; j < L; ++j) {
            double kr = 0.0;
            for (std::size_t m = 0; m < D; ++m) kr += fr.k(m, j) * rv[m];
            growth += 0.5 * kr * kr * dt;
        }
        th.values.push_back(std::polar(std::exp(growth), phase));
    }
    return th;
}

// ---------------------------------------------------------------- statistics

double ComplexEstimate::se() const { return std::hypot(se_re, se_im); }

RealEstimate mean_se(std::span<const double> s) {
    const std::size_t n = s.size();
    if (n == 0) return {};
    const double mean = pairwise_sum(s) / static_cast<double>(n);
    if (n == 1) return {mean, 0.0};
    const double ss = block_reduce(n, [&](std::size_t i) { return (s[i] - mean) * (s[i] - mean); });
    return {mean, std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n))};
}

ComplexEstimate mean_se(std::span<const std::complex<double>> s) {
    std::vector<double> re(s.size()), im(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        re[i] = s[i].real();
        im[i] = s[i].imag();
    }
    const auto a = mean_se(re), b = mean_se(im);
    return {{a.mean, b.mean}, a.se, b.se};
}

double z_score(double mean, double se) {
    if (se > 0.0) return mean / se;
    if (mean == 0.0) return 0.0;
    return std::copysign(std::numeric_limits<double>::infinity(), mean);
}

MartingaleResult martingale_test(std::span<const std::complex<double>> samples, std::size_t m) {
    if (m < 2 || samples.size() % m != 0) throw InvalidInputError("martingale_test: bad sample layout");
    const std::size_t n = samples.size() / m;
    MartingaleResult out;
    std::vector<std::complex<double>> inc(n);
    for (std::size_t k = 0; k + 1 < m; ++k) {
        for (std::size_t i = 0; i < n; ++i) inc[i] = samples[i * m + k + 1] - samples[i * m + k];
        const auto e = mean_se(inc);
        out.z_re.push_back(z_score(e.mean.real(), e.se_re));
        out.z_im.push_back(z_score(e.mean.imag(), e.se_im));
        out.max_abs_z = std::max({out.max_abs_z, std::abs(out.z_re.back()), std::abs(out.z_im.back())});
    }
    return out;
}

MartingaleResult martingale_test(std::span<const double> samples, std::size_t m) {
    std::vector<std::complex<double>> c(samples.begin(), samples.end());
    return martingale_test(c, m);
}

std::vector<std::size_t> checkpoint_steps(std::size_t n_steps, std::size_t m) {
    if (m == 0 || n_steps % m != 0)
        throw ConfigurationError("number of martingale intervals must divide the number of steps");
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k <= m; ++k) out.push_back(k * (n_steps / m));
    return out;
}

// ---------------------------------------------------------------- duality

namespace {

std::complex<double> pair_slice(const WeightedEnsemble& mu, const FieldPath::Slice& u) {
    Jet j;
    std::vector<double> re(mu.size()), im(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        u.jet(mu.point(i), j);
        re[i] = j.value.real();
        im[i] = j.value.imag();
    }
    return {integrate_values(mu, re), integrate_values(mu, im)};
}

}  // namespace

DualityStudy duality_study(const ScenarioSpec& spec, const std::vector<FrequencyChoice>& freqs,
                           const std::vector<TestFunction>& phis, const DualityOptions& opts) {
    spec.validate();
    if (opts.n_replicas < 2) throw ConfigurationError("duality needs at least two replicas");
    const TimeGrid tg = spec.time_grid();
    const auto cps = checkpoint_steps(tg.n_steps, opts.n_intervals);
    const std::size_t M = cps.size();

    struct Pair {
        const FrequencyChoice* r;
        const TestFunction* phi;
        std::vector<std::unique_ptr<FieldPath::Slice>> u_at;  // per checkpoint
    };
    std::vector<Pair> pairs;
    for (const auto& r : freqs)
        for (const auto& phi : phis) {
            const auto sol = dual_backward_solve(spec, r, phi, opts.grid, tg);
            const auto field = grid_field(sol.u);
            Pair p{&r, &phi, {}};
            for (std::size_t c : cps) p.u_at.push_back(field->at(c));
            pairs.push_back(std::move(p));
        }

    const std::size_t R = opts.n_replicas, P = pairs.size();
    std::vector<std::complex<double>> lhs(R * P), rhs(R * P), mart(R * P * M);
    std::vector<double> mass(R * M), drift(R * M);

    parallel_for(R, [&](std::size_t rep) {
        RngStream rng(opts.seed, rep, 0, StreamRole::Observation);
        const PathBundle b = simulate_reference(spec, rng);
        FilterOptions fo;
        fo.n_particles = opts.n_particles;
        const FilterRun run = ks_filter(spec, b.y_path, {opts.seed, rep}, fo);
        for (std::size_t c = 0; c < M; ++c) {
            mass[rep * M + c] = run.mass.values[cps[c]];
            drift[rep * M + c] = run.mass.values[cps[c]] + 0.1 * tg.time(cps[c]);
        }
        const auto& last = run.ensembles.back();
        for (std::size_t p = 0; p < P; ++p) {
            const auto& pr = pairs[p];
            const auto th = theta_path(*pr.r, tg, b.w_tilde);
            lhs[rep * P + p] = th.values.back() * integrate(last, *pr.phi);
            for (std::size_t c = 0; c < M; ++c)
                mart[(rep * P + p) * M + c] = th.values[cps[c]] * pair_slice(run.ensembles[cps[c]], *pr.u_at[c]);
            rhs[rep * P + p] = mart[(rep * P + p) * M];
        }
    });

    DualityStudy st;
    st.n_replicas = R;
    std::vector<std::complex<double>> a(R), b(R), d(R), m(R * M);
    for (std::size_t p = 0; p < P; ++p) {
        for (std::size_t i = 0; i < R; ++i) {
            a[i] = lhs[i * P + p];
            b[i] = rhs[i * P + p];
            d[i] = a[i] - b[i];
            for (std::size_t c = 0; c < M; ++c) m[i * M + c] = mart[(i * P + p) * M + c];
        }
        const auto ea = mean_se(a), eb = mean_se(b), ed = mean_se(d);
        DualityRow row;
        row.r_label = pairs[p].r->label;
        row.phi_label = pairs[p].phi->name;
        row.lhs = ea.mean;
        row.rhs = eb.mean;
        row.gap = std::abs(ed.mean);
        row.se_lhs = ea.se();
        row.se_rhs = eb.se();
        row.se_gap = ed.se();
        row.pass = row.gap <= 3.0 * row.se_gap + opts.tolerance;
        row.martingale = martingale_test(m, M);
        st.rows.push_back(std::move(row));
    }
    st.mass = martingale_test(mass, M);
    st.mass_drift = martingale_test(drift, M);
    return st;
}

DualityRow duality_gap(const ScenarioSpec& spec, const FrequencyChoice& freq, const TestFunction& phi_T,
                       const DualityOptions& opts) {
    return duality_study(spec, {freq}, {phi_T}, opts).rows.front();
}

void write_duality_csv(const std::vector<DualityRow>& rows, const std::filesystem::path& file) {
    CsvWriter w(file, {"r_label", "phi_label", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "gap", "se_lhs", "se_rhs",
                       "verdict"});
    for (const auto& r : rows)
        w.raw({r.r_label, r.phi_label, fmt17(r.lhs.real()), fmt17(r.lhs.imag()), fmt17(r.rhs.real()),
               fmt17(r.rhs.imag()), fmt17(r.gap), fmt17(r.se_lhs), fmt17(r.se_rhs), r.pass ? "pass" : "fail"});
}

// ---------------------------------------------------------------- orthogonality

PathFunctional h2_functional(const ScenarioSpec& spec) {
    return [c = spec.coeffs](double t, std::span<const double> x, std::span<const double> y, std::span<double> out) {
        c.h2(t, x, y, out);
    };
}

OrthogonalityResult orthogonality_test(const ScenarioSpec& spec, const PathFunctional& kappa,
                                       const FrequencyChoice& freq, const OrthogonalityOptions& opts) {
    spec.validate();
    const auto& dm = spec.dims();
    const std::size_t L = dm.l_obs, R = opts.n_replicas;
    std::vector<std::complex<double>> samples(R);
    parallel_for(R, [&](std::size_t rep) {
        RngStream rng(opts.seed, rep, 0, StreamRole::Observation);
        const PathBundle b = simulate_reference(spec, rng);
        const ObservationTrack track = make_track(spec, b.y_path);
        const auto th = theta_observation(freq, track);
        std::vector<double> kv(L), q(L);
        double sum = 0.0;
        for (std::size_t n = 0; n < b.grid.n_steps; ++n) {
            const auto& P = track.frame(n).proj;
            const auto dw = b.dw_tilde(n);
            // (I - P) dW~, taken as exactly zero when P is the identity up to rounding
            Matrix comp = Matrix::identity(L) - P;
            if (comp.max_abs() < 1e-12) continue;
            matvec(comp, dw, q);
            kappa(b.grid.time(n), b.x(n), b.y(n), kv);
            for (std::size_t j = 0; j < L; ++j) sum += kv[j] * q[j];
        }
        samples[rep] = th.values.back() * sum;
    });
    OrthogonalityResult out;
    out.estimate = mean_se(samples);
    out.z_re = z_score(out.estimate.mean.real(), out.estimate.se_re);
    out.z_im = z_score(out.estimate.mean.imag(), out.estimate.se_im);
    out.pass = std::abs(out.z_re) <= 3.0 && std::abs(out.z_im) <= 3.0;
    return out;
}

// ---------------------------------------------------------------- uniqueness

std::vector<UniquenessRow> uniqueness_probe(const ScenarioSpec& spec, const std::vector<FrequencyChoice>& freqs,
                                            const std::vector<TestFunction>& phis, const UniquenessOptions& opts) {
    spec.validate();
    if (opts.n_replicas < 2) throw ConfigurationError("uniqueness probe needs at least two replicas");
    const TimeGrid tg = spec.time_grid();
    const Grid1D& grid = opts.grid;
    std::vector<std::vector<double>> phi_nodes;
    for (const auto& phi : phis) phi_nodes.push_back(GridFunction::sample(grid, phi).re);

    const std::size_t R = opts.n_replicas, F = freqs.size(), Q = phis.size();
    std::vector<std::complex<double>> part(R * F * Q), grd(R * F * Q);
    parallel_for(R, [&](std::size_t rep) {
        RngStream rng(opts.seed, rep, 0, StreamRole::Observation);
        const PathBundle b = simulate_reference(spec, rng);
        ObservationTrack track = make_track(spec, b.y_path);
        const auto density = zakai_fd_solve(spec, track, grid, {false}).back();
        FilterOptions fo;
        fo.n_particles = opts.n_particles;
        const FilterRun run = ks_filter(spec, track, {opts.seed, rep}, fo);
        const auto& last = run.ensembles.back();
        std::vector<double> pp(Q), pg(Q);
        for (std::size_t q = 0; q < Q; ++q) {
            pp[q] = integrate(last, phis[q]);
            pg[q] = grid_pairing(density, phi_nodes[q]);
        }
        for (std::size_t f = 0; f < F; ++f) {
            const auto th = theta_path(freqs[f], tg, run.track.projected).values.back();
            for (std::size_t q = 0; q < Q; ++q) {
                part[(rep * F + f) * Q + q] = th * pp[q];
                grd[(rep * F + f) * Q + q] = th * pg[q];
            }
        }
    });

    std::vector<UniquenessRow> rows;
    std::vector<std::complex<double>> a(R), b(R), d(R);
    for (std::size_t f = 0; f < F; ++f)
        for (std::size_t q = 0; q < Q; ++q) {
            for (std::size_t i = 0; i < R; ++i) {
                a[i] = part[(i * F + f) * Q + q];
                b[i] = grd[(i * F + f) * Q + q];
                d[i] = a[i] - b[i];
            }
            const auto ed = mean_se(d);
            UniquenessRow row;
            row.r_label = freqs[f].label;
            row.phi_label = phis[q].name;
            row.particle = mean_se(a).mean;
            row.grid = mean_se(b).mean;
            row.diff = std::abs(ed.mean);
            row.se = ed.se();
            row.pass = row.diff <= 3.0 * row.se + opts.tolerance;
            rows.push_back(std::move(row));
        }
    return rows;
}

}  // namespace filterlab
