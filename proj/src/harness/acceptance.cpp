#include "filterlab/harness/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "filterlab/csv.hpp"
#include "filterlab/duality.hpp"
#include "filterlab/errors.hpp"
#include "filterlab/filter.hpp"
#include "filterlab/gridpde.hpp"
#include "filterlab/parallel.hpp"
#include "filterlab/pinv.hpp"
#include "oracles.hpp"

namespace filterlab {

std::uint64_t sub_seed(std::uint64_t seed, const std::string& tag) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return seed ^ h;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

TestFunction tf(const std::string& name) {
    auto f = test_functions::by_name(name);
    if (!f) throw ConfigurationError("unknown test function " + name);
    return *f;
}

ScenarioSpec scenario(const std::string& name, double dt, double T = 1.0) {
    auto s = find_scenario(name);
    if (!s) throw ConfigurationError("unknown scenario " + name);
    s->dt = dt;
    s->horizon = T;
    s->validate();
    return *s;
}

std::vector<double> subsample(std::span<const double> y, std::size_t d_obs, std::size_t stride) {
    std::vector<double> out;
    const std::size_t n = y.size() / d_obs;
    for (std::size_t i = 0; i < n; i += stride)
        for (std::size_t m = 0; m < d_obs; ++m) out.push_back(y[i * d_obs + m]);
    return out;
}

double mean_of(const std::vector<double>& v) { return mean_se(v).mean; }

bool within(double v, double lo, double hi) { return v >= lo && v <= hi; }

struct Context {
    const AcceptOptions& opts;
    std::vector<std::string>& files;
    std::filesystem::path path(const std::string& name) {
        files.push_back(name);
        return opts.out / name;
    }
};

// ---------------------------------------------------------------- 1

Verdict penrose(Context& cx) {
    const auto r = penrose_suite(cx.opts.penrose_trials, sub_seed(cx.opts.seed, "penrose"));
    Verdict v{"C1 Penrose suite", "pinv.pinv_minor, pinv.pinv_oracle, pinv.projector",
              "four Penrose identities; k+k bounded by 1", r.passes == r.trials && r.trials > 0, {}, ""};
    v.metrics = {{"trials", double(r.trials)},
                 {"passes", double(r.passes)},
                 {"rank_deficient", double(r.rank_deficient)},
                 {"max_residual_oracle", r.max_residual_oracle},
                 {"max_residual_minor", r.max_residual_minor},
                 {"max_minor_vs_oracle", r.max_minor_vs_oracle},
                 {"max_projector_norm", r.max_projector_norm}};
    return v;
}

// ---------------------------------------------------------------- 2

Verdict degenerate(Context& cx) {
    const auto spec = scenario("degenerate_k0", 1e-3);
    const auto seed = sub_seed(cx.opts.seed, "degenerate");
    const std::size_t N = cx.opts.degenerate_particles;
    RngStream rng(seed, 0, 0, StreamRole::Observation);
    const auto b = simulate_joint(spec, rng);
    FilterOptions fo;
    fo.n_particles = N;
    const auto run = ks_filter(spec, b.y_path, {seed, 0}, fo);

    const std::size_t n = spec.time_grid().n_steps;
    const std::vector<std::size_t> steps{n / 2, n};
    // Prior Monte Carlo under the original measure, no weights.
    std::vector<double> prior(N * steps.size());
    parallel_for(N, [&](std::size_t i) {
        RngStream pr(seed, 0, i, StreamRole::Prior);
        const auto path = simulate_joint(spec, pr);
        for (std::size_t s = 0; s < steps.size(); ++s) prior[i * steps.size() + s] = path.x(steps[s])[0];
    });

    const std::vector<TestFunction> phis{tf("sin"), tf("bump"), tf("tanh")};
    const auto res = zakai_residuals(spec, run.track, run.ensembles, phis);
    double stoch = 0.0;
    for (const auto& r : res)
        for (double s : r.stochastic) stoch = std::max(stoch, std::abs(s));

    CsvWriter w(cx.path("degenerate.csv"), {"t", "phi", "particle", "se_particle", "prior", "se_prior", "z"});
    bool ok = stoch == 0.0;
    double zmax = 0.0;
    for (std::size_t s = 0; s < steps.size(); ++s) {
        const auto& e = run.ensembles[steps[s]];
        for (const auto& phi : phis) {
            std::vector<double> a(N), p(N);
            for (std::size_t i = 0; i < N; ++i) {
                a[i] = static_cast<double>(N) * e.weight(i) * phi.value(e.point(i));
                const double x = prior[i * steps.size() + s];
                p[i] = phi.value(std::span<const double>(&x, 1));
            }
            const auto ea = mean_se(a), ep = mean_se(p);
            const double z = (ea.mean - ep.mean) / std::hypot(ea.se, ep.se);
            zmax = std::max(zmax, std::abs(z));
            ok = ok && std::abs(z) <= 3.0;
            w.raw({fmt17(spec.time_grid().time(steps[s])), phi.name, fmt17(ea.mean), fmt17(ea.se), fmt17(ep.mean),
                   fmt17(ep.se), fmt17(z)});
        }
    }
    return {"C2 Degenerate collapse k = 0", "filter.ks_filter, filter.zakai_residual",
            "degenerate case k = 0 coincides with the prior distribution", ok,
            {{"particles", double(N)}, {"max_abs_z", zmax}, {"max_abs_stochastic_term", stoch}}, ""};
}

// ---------------------------------------------------------------- 3

Verdict kalman(Context& cx) {
    const auto spec = scenario("linear_gaussian", 1e-3);
    const auto seed = sub_seed(cx.opts.seed, "kalman");
    const std::size_t N = cx.opts.kb_particles;
    RngStream rng(seed, 0, 0, StreamRole::Observation);
    const auto b = simulate_joint(spec, rng);
    FilterOptions fo;
    fo.n_particles = N;
    const auto run = ks_filter(spec, b.y_path, {seed, 0}, fo);

    // Linear coefficients read off by probing at 0 and at the unit vectors.
    const auto& dm = spec.dims();
    const auto d = static_cast<Eigen::Index>(dm.d);
    ModelEvaluator ev(spec.coeffs);
    std::vector<double> x(dm.d, 0.0);
    ev.eval(0.0, x, spec.initial.y0);
    const std::vector<double> f0(ev.f().begin(), ev.f().end()), h0(ev.h2().begin(), ev.h2().end());
    oracle::LinearSystem sys;
    sys.G = Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>>(ev.g().data(), d,
                                                                              static_cast<Eigen::Index>(dm.l));
    sys.Gb = Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>>(ev.g_bar().data(), d,
                                                                               static_cast<Eigen::Index>(dm.l_obs));
    sys.F.resize(d, d);
    sys.H.resize(static_cast<Eigen::Index>(dm.l_obs), d);
    for (std::size_t j = 0; j < dm.d; ++j) {
        std::fill(x.begin(), x.end(), 0.0);
        x[j] = 1.0;
        ev.eval(0.0, x, spec.initial.y0);
        for (std::size_t i = 0; i < dm.d; ++i) sys.F(Eigen::Index(i), Eigen::Index(j)) = ev.f()[i] - f0[i];
        for (std::size_t i = 0; i < dm.l_obs; ++i) sys.H(Eigen::Index(i), Eigen::Index(j)) = ev.h2()[i] - h0[i];
    }
    sys.m0 = Eigen::Map<const Eigen::VectorXd>(spec.initial.x_mean.data(), d);
    sys.P0 = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < dm.d; ++i) sys.P0(Eigen::Index(i), Eigen::Index(i)) = std::pow(spec.initial.x_sd[i], 2);
    const auto kb = oracle::kalman_bucy(sys, spec.dt, run.track.projected);

    const auto& e = run.ensembles.back();
    auto moments = [&](const std::vector<std::size_t>* idx) {
        const std::size_t n = idx ? idx->size() : e.size();
        std::vector<double> out(2 * dm.d, 0.0);
        double W = 0.0;
        for (std::size_t q = 0; q < n; ++q) W += e.weight(idx ? (*idx)[q] : q);
        for (std::size_t i = 0; i < dm.d; ++i) {
            double m = 0.0;
            for (std::size_t q = 0; q < n; ++q) {
                const std::size_t p = idx ? (*idx)[q] : q;
                m += e.weight(p) * e.point(p)[i];
            }
            m /= W;
            double v = 0.0;
            for (std::size_t q = 0; q < n; ++q) {
                const std::size_t p = idx ? (*idx)[q] : q;
                v += e.weight(p) * std::pow(e.point(p)[i] - m, 2);
            }
            out[i] = m;
            out[dm.d + i] = v / W;
        }
        return out;
    };
    const auto est = moments(nullptr);
    const std::size_t B = cx.opts.kb_bootstrap;
    std::vector<std::vector<double>> boot(B);
    parallel_for(B, [&](std::size_t bi) {
        RngStream br(seed, 0, bi, StreamRole::Bootstrap);
        std::vector<std::size_t> idx(e.size());
        for (auto& i : idx) i = std::min(e.size() - 1, static_cast<std::size_t>(br.uniform() * double(e.size())));
        boot[bi] = moments(&idx);
    });
    CsvWriter w(cx.path("kalman.csv"), {"quantity", "filter", "oracle", "bootstrap_se", "error"});
    bool ok = true;
    double worst = -1e300;
    std::vector<Metric> metrics{{"particles", double(N)}};
    for (std::size_t q = 0; q < 2 * dm.d; ++q) {
        std::vector<double> s(B);
        for (std::size_t bi = 0; bi < B; ++bi) s[bi] = boot[bi][q];
        const double se = mean_se(s).se * std::sqrt(double(B));  // sample sd of the bootstrap replicates
        const bool is_mean = q < dm.d;
        const auto i = Eigen::Index(q % dm.d);
        const double ref = is_mean ? kb.mean.back()(i) : kb.cov.back()(i, i);
        const double err = std::abs(est[q] - ref);
        ok = ok && err <= 3.0 * se + 0.05;
        worst = std::max(worst, err - 3.0 * se - 0.05);
        const std::string name = (is_mean ? "mean_" : "var_") + std::to_string(q % dm.d + 1);
        w.raw({name, fmt17(est[q]), fmt17(ref), fmt17(se), fmt17(err)});
        metrics.push_back({name + "_error", err});
        metrics.push_back({name + "_bootstrap_se", se});
    }
    metrics.push_back({"worst_margin", worst});
    return {"C3 Kalman-Bucy oracle", "filter.ks_filter, filter.ks_path",
            "Kallianpur-Striebel formula against the Kalman-Bucy filter", ok, metrics, ""};
}

// ---------------------------------------------------------------- 4, 5, 6 shared study

const std::vector<double> kLevels{4e-3, 2e-3, 1e-3};

struct Refinement {
    std::vector<std::size_t> particles;
    // [level][replica]
    std::vector<std::vector<double>> mass_err, ks_err, ito_static, ito_scaled;
    std::vector<std::vector<std::vector<double>>> zakai;  // [level][phi][replica]
    std::vector<std::string> phi_names;
    double seconds = 0.0;
};

std::size_t level_particles(std::size_t n0, double dt) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(double(n0) * 1e-3 / dt)));
}

double c_of_t(double t) { return 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * t); }
double c_prime(double t) { return std::numbers::pi * std::cos(2.0 * std::numbers::pi * t); }

Refinement refinement_study(Context& cx) {
    const auto t0 = Clock::now();
    const auto fine = scenario("correlated_bounded", kLevels.back());
    const auto seed = sub_seed(cx.opts.seed, "refinement");
    const std::size_t R = cx.opts.refine_replicas, Lv = kLevels.size();
    const std::vector<TestFunction> phis{tf("sin"), tf("bump"), tf("tanh")};
    const TestFunction ito_phi = tf("bump");
    Refinement rf;
    for (const auto& p : phis) rf.phi_names.push_back(p.name);
    for (double dt : kLevels) rf.particles.push_back(level_particles(cx.opts.refine_n0, dt));
    auto grid2 = [&](std::size_t n) { return std::vector<std::vector<double>>(Lv, std::vector<double>(n)); };
    rf.mass_err = grid2(R);
    rf.ks_err = grid2(R);
    rf.ito_static = grid2(R);
    rf.ito_scaled = grid2(R);
    rf.zakai.assign(Lv, std::vector<std::vector<double>>(phis.size(), std::vector<double>(R)));

    parallel_for(R, [&](std::size_t rep) {
        RngStream rng(seed, rep, 0, StreamRole::Observation);
        const auto b = simulate_reference(fine, rng);
        for (std::size_t L = 0; L < Lv; ++L) {
            const auto spec = scenario("correlated_bounded", kLevels[L]);
            const auto stride = static_cast<std::size_t>(std::llround(kLevels[L] / kLevels.back()));
            const auto y = subsample(b.y_path, fine.dims().d_obs, stride);
            FilterOptions fo;
            fo.n_particles = rf.particles[L];
            const auto run = ks_filter(spec, y, {sub_seed(seed, "level" + std::to_string(L)), rep}, fo);
            const auto sigma = ks_path(run);
            const auto j = mass_process(sigma, run.track, spec.coeffs);
            double me = 0.0, ke = 0.0;
            for (std::size_t n = 0; n < sigma.size(); ++n) {
                ke = std::max(ke, std::abs(sigma[n].mass() - 1.0));
                me = std::max(me, std::abs(j.values[n] - run.mass.values[n]) / run.mass.values[n]);
            }
            rf.mass_err[L][rep] = me;
            rf.ks_err[L][rep] = ke;
            const auto zr = zakai_residuals(spec, run.track, run.ensembles, phis);
            for (std::size_t p = 0; p < phis.size(); ++p) rf.zakai[L][p][rep] = zr[p].max_abs();
            rf.ito_static[L][rep] = ito_check(spec, run.track, run.ensembles, {static_field(ito_phi), nullptr, {}}).max_abs();
            const auto tg = spec.time_grid();
            rf.ito_scaled[L][rep] =
                ito_check(spec, run.track, run.ensembles,
                          {scaled_field(ito_phi, c_of_t, tg), scaled_field(ito_phi, c_prime, tg), {}})
                    .max_abs();
        }
    });

    std::vector<std::string> header{"dt", "particles", "mass_err", "ks_norm_err"};
    for (const auto& n : rf.phi_names) header.push_back("zakai_" + n);
    header.push_back("ito_static");
    header.push_back("ito_scaled");
    CsvWriter w(cx.path("refinement.csv"), header);
    for (std::size_t L = 0; L < Lv; ++L) {
        std::vector<double> row{kLevels[L], double(rf.particles[L]), mean_of(rf.mass_err[L]), mean_of(rf.ks_err[L])};
        for (std::size_t p = 0; p < phis.size(); ++p) row.push_back(mean_of(rf.zakai[L][p]));
        row.push_back(mean_of(rf.ito_static[L]));
        row.push_back(mean_of(rf.ito_scaled[L]));
        w.row(row);
    }
    rf.seconds = seconds_since(t0);
    return rf;
}

double max_of(const std::vector<std::vector<double>>& v) {
    double m = 0.0;
    for (const auto& r : v)
        for (double x : r) m = std::max(m, x);
    return m;
}

Verdict mass_equivalence(const Refinement& rf) {
    const double coarse = mean_of(rf.mass_err.front()), finest = mean_of(rf.mass_err.back());
    const double ratio = coarse / finest, ks = max_of(rf.ks_err);
    const bool ok = ks <= 1e-12 && finest <= 0.05 && within(ratio, 1.5, 3.0);
    return {"C4 Normalization and mass equivalence", "filter.ks_path, filter.mass_process",
            "mass process j turns the normalized filter into the unnormalized one", ok,
            {{"max_abs_ks_mass_minus_one", ks},
             {"mass_rel_err_dt_4e-3", coarse},
             {"mass_rel_err_dt_2e-3", mean_of(rf.mass_err[1])},
             {"mass_rel_err_dt_1e-3", finest},
             {"ratio_4e-3_over_1e-3", ratio},
             {"particles_at_1e-3", double(rf.particles.back())}},
            "statistic: mean over replicas of max over t"};
}

// Per-halving ratios and their geometric mean across the two halvings.
struct Ratios {
    double first, second, geometric;
};
Ratios ratios(const std::vector<double>& m) { return {m[0] / m[1], m[1] / m[2], std::sqrt(m[0] / m[2])}; }

Verdict zakai_refinement(const Refinement& rf) {
    Verdict v{"C5 Zakai weak-form residual refinement", "filter.zakai_residual",
              "weak form of the Zakai equation", true, {}, ""};
    for (std::size_t p = 0; p < rf.phi_names.size(); ++p) {
        std::vector<double> m;
        for (std::size_t L = 0; L < kLevels.size(); ++L) m.push_back(mean_of(rf.zakai[L][p]));
        const auto r = ratios(m);
        v.pass = v.pass && within(r.geometric, 1.2, 3.0) && m[0] > m[1] && m[1] > m[2];
        const auto& n = rf.phi_names[p];
        v.metrics.push_back({n + "_residual_dt_4e-3", m[0]});
        v.metrics.push_back({n + "_residual_dt_2e-3", m[1]});
        v.metrics.push_back({n + "_residual_dt_1e-3", m[2]});
        v.metrics.push_back({n + "_ratio_first_halving", r.first});
        v.metrics.push_back({n + "_ratio_second_halving", r.second});
        v.metrics.push_back({n + "_ratio_per_halving", r.geometric});
    }
    v.note = "gate: per-halving ratio (geometric mean over the two halvings) in [1.2, 3], residual decreasing";
    return v;
}

struct DualIto {
    std::vector<double> means;
    double seconds = 0.0;
};

DualIto dual_ito_study(Context& cx) {
    const auto t0 = Clock::now();
    const auto fine = scenario("decoupled_classical", kLevels.back());
    const auto seed = sub_seed(cx.opts.seed, "ito-dual");
    const std::size_t R = cx.opts.dual_ito_replicas, Lv = kLevels.size();
    const Grid1D grid{-8.0, 8.0, 401};
    const auto r = *find_frequency(probe_frequencies(1, 1.0), "steps_a");
    const auto phi = tf("bump");
    std::vector<std::shared_ptr<FieldPath>> u(Lv), sig(Lv);
    for (std::size_t L = 0; L < Lv; ++L) {
        const auto spec = scenario("decoupled_classical", kLevels[L]);
        const auto sol = dual_backward_solve(spec, r, phi, grid, spec.time_grid());
        sig[L] = grid_field(implied_sigma(spec, r, sol, spec.time_grid()));
        u[L] = grid_field(sol.u);
    }
    std::vector<std::vector<double>> res(Lv, std::vector<double>(R));
    parallel_for(R, [&](std::size_t rep) {
        RngStream rng(seed, rep, 0, StreamRole::Observation);
        const auto b = simulate_reference(fine, rng);
        for (std::size_t L = 0; L < Lv; ++L) {
            const auto spec = scenario("decoupled_classical", kLevels[L]);
            const auto stride = static_cast<std::size_t>(std::llround(kLevels[L] / kLevels.back()));
            FilterOptions fo;
            fo.n_particles = level_particles(cx.opts.refine_n0, kLevels[L]);
            const auto run =
                ks_filter(spec, subsample(b.y_path, 1, stride), {sub_seed(seed, "level" + std::to_string(L)), rep}, fo);
            res[L][rep] = ito_check(spec, run.track, run.ensembles, {u[L], sig[L], {}}).max_abs();
        }
    });
    DualIto out;
    CsvWriter w(cx.path("refinement_dual.csv"), {"dt", "particles", "ito_dual"});
    for (std::size_t L = 0; L < Lv; ++L) {
        out.means.push_back(mean_of(res[L]));
        w.row({kLevels[L], double(level_particles(cx.opts.refine_n0, kLevels[L])), out.means.back()});
    }
    out.seconds = seconds_since(t0);
    return out;
}

Verdict ito_refinement(const Refinement& rf, const DualIto& dual) {
    Verdict v{"C6 Ito formula check", "gridpde.ito_check, gridpde.dual_backward_solve",
              "Ito formula for measure-valued solutions", true, {}, ""};
    auto family = [&](const std::string& name, const std::vector<double>& m) {
        const auto r = ratios(m);
        v.pass = v.pass && m[2] <= 0.05 && within(r.geometric, 1.2, 3.0);
        v.metrics.push_back({name + "_residual_dt_4e-3", m[0]});
        v.metrics.push_back({name + "_residual_dt_2e-3", m[1]});
        v.metrics.push_back({name + "_residual_dt_1e-3", m[2]});
        v.metrics.push_back({name + "_ratio_first_halving", r.first});
        v.metrics.push_back({name + "_ratio_second_halving", r.second});
        v.metrics.push_back({name + "_ratio_per_halving", r.geometric});
    };
    std::vector<double> a, b;
    for (std::size_t L = 0; L < kLevels.size(); ++L) {
        a.push_back(mean_of(rf.ito_static[L]));
        b.push_back(mean_of(rf.ito_scaled[L]));
    }
    family("static", a);
    family("scaled", b);
    family("dual", dual.means);
    v.note = "families: static phi, c(t) phi, dual solution with implied Sigma";
    return v;
}

// ---------------------------------------------------------------- 7, 8

struct DualityBundle {
    DualityStudy main;
    DualityStudy kolmogorov;
    std::vector<std::pair<double, oracle::McEstimate>> mc;  // x, oracle
    std::vector<double> u0;                                  // grid value at x
    double seconds = 0.0;
};

DualityBundle duality_bundle(Context& cx, const ExperimentConfig& cfg) {
    const auto t0 = Clock::now();
    DualityBundle out;
    const auto spec = scenario("decoupled_classical", 1e-3);
    DualityOptions o;
    o.n_replicas = cx.opts.duality_replicas;
    o.n_particles = cx.opts.duality_particles;
    o.grid = {-8.0, 8.0, 401};
    o.seed = sub_seed(cx.opts.seed, "duality");
    const auto phis = resolve_phis(cfg);
    const auto freqs = resolve_frequencies(cfg, 1, spec.horizon);
    out.main = duality_study(spec, freqs, phis, o);
    write_duality_csv(out.main.rows, cx.path("duality.csv"));

    const auto kol = scenario("kolmogorov_plain", 1e-3);
    o.seed = sub_seed(cx.opts.seed, "duality-kolmogorov");
    out.kolmogorov = duality_study(kol, {*find_frequency(probe_frequencies(1, 1.0), "zero")}, phis, o);
    write_duality_csv(out.kolmogorov.rows, cx.path("duality_kolmogorov.csv"));

    // u_0 of the backward Kolmogorov equation against Monte Carlo.
    const auto phi = tf("bump");
    const auto sol = dual_backward_solve(kol, *find_frequency(probe_frequencies(1, 1.0), "zero"), phi, o.grid,
                                         kol.time_grid());
    const GridSpline sp(o.grid, sol.u.front().re);
    const auto drift = [&kol](double x) {
        double f;
        kol.coeffs.f(0.0, std::span<const double>(&x, 1), kol.initial.y0, std::span<double>(&f, 1));
        return f;
    };
    const auto vol = [&kol](double x) {
        double g, gb;
        kol.coeffs.g(0.0, std::span<const double>(&x, 1), kol.initial.y0, std::span<double>(&g, 1));
        kol.coeffs.g_bar(0.0, std::span<const double>(&x, 1), kol.initial.y0, std::span<double>(&gb, 1));
        return std::sqrt(g * g + gb * gb);
    };
    const auto phiv = [&phi](double x) { return phi.value(std::span<const double>(&x, 1)); };
    const std::vector<double> xs{-1.0, 0.0, 1.0};
    out.mc.resize(xs.size());
    out.u0.resize(xs.size());
    parallel_for(xs.size(), [&](std::size_t i) {
        out.mc[i] = {xs[i], oracle::kolmogorov_mc(drift, vol, phiv, xs[i], kol.horizon, 1e-3, cx.opts.kolmogorov_pairs,
                                                  sub_seed(cx.opts.seed, "kolmogorov-mc") + i)};
        double d1, d2;
        sp.eval(xs[i], out.u0[i], d1, d2);
    });
    out.seconds = seconds_since(t0);
    return out;
}

Verdict duality_verdict(const DualityBundle& d) {
    Verdict v{"C7 Duality identity", "duality.duality_gap, gridpde.dual_backward_solve",
              "E[theta_T pi_T(phi)] = E[pi_0(u_0)] for the complex dual problem", true, {}, ""};
    double worst = -1e300, gap_max = 0.0;
    std::size_t rows = 0, passed = 0;
    for (const auto* st : {&d.main, &d.kolmogorov})
        for (const auto& r : st->rows) {
            ++rows;
            passed += r.pass;
            v.pass = v.pass && r.pass;
            gap_max = std::max(gap_max, r.gap);
            worst = std::max(worst, r.gap - 3.0 * r.se_gap - 0.02);
        }
    double mc_worst = -1e300;
    for (std::size_t i = 0; i < d.mc.size(); ++i) {
        const double err = std::abs(d.u0[i] - d.mc[i].second.mean);
        mc_worst = std::max(mc_worst, err - 3.0 * d.mc[i].second.se - 0.02);
        v.metrics.push_back({"kolmogorov_u0_at_" + fmt17(d.mc[i].first), d.u0[i]});
        v.metrics.push_back({"kolmogorov_mc_at_" + fmt17(d.mc[i].first), d.mc[i].second.mean});
    }
    v.pass = v.pass && mc_worst <= 0.0 && rows >= 15;
    v.metrics.insert(v.metrics.begin(), {{"replicas", double(d.main.n_replicas)},
                                         {"rows", double(rows)},
                                         {"rows_passed", double(passed)},
                                         {"max_gap", gap_max},
                                         {"worst_margin", worst},
                                         {"kolmogorov_mc_worst_margin", mc_worst}});
    v.note = "gate per row: gap <= 3 SE(paired difference) + 0.02";
    return v;
}

Verdict martingale_verdict(Context& cx, const DualityBundle& d, OrthogonalityResult& ortho, double& seconds) {
    const auto t0 = Clock::now();
    const auto spec = scenario("correlated_bounded", 1e-3);
    OrthogonalityOptions oo;
    oo.n_replicas = cx.opts.ortho_replicas;
    oo.seed = sub_seed(cx.opts.seed, "orthogonality");
    const auto r = FrequencyChoice::constant("r_1_-0.5", {1.0, -0.5}, spec.horizon);
    ortho = orthogonality_test(spec, h2_functional(spec), r, oo);
    seconds = seconds_since(t0) + d.seconds;

    const DualityRow* designated = nullptr;
    for (const auto& row : d.main.rows)
        if (row.r_label == "steps_a" && row.phi_label == "bump") designated = &row;
    if (!designated) designated = &d.main.rows.front();

    CsvWriter w(cx.path("martingale.csv"), {"control", "interval", "z_re", "z_im"});
    auto dump = [&](const std::string& name, const MartingaleResult& m) {
        for (std::size_t k = 0; k < m.z_re.size(); ++k)
            w.raw({name, std::to_string(k), fmt17(m.z_re[k]), fmt17(m.z_im[k])});
    };
    dump("mass", d.main.mass);
    dump("mass_plus_0.1t", d.main.mass_drift);
    for (const auto& row : d.main.rows) dump("theta_pi_u/" + row.r_label + "/" + row.phi_label, row.martingale);

    const bool ok = d.main.mass.max_abs_z <= 3.0 && designated->martingale.max_abs_z <= 3.0 &&
                    d.main.mass_drift.max_abs_z >= 5.0 && ortho.pass;
    return {"C8 Martingale and orthogonality tests", "duality.martingale_test, duality.orthogonality_test",
            "theta_t pi_t(u_t) is a martingale; orthogonality of (I - k+k) dW~ to the exponential class", ok,
            {{"replicas", double(d.main.n_replicas)},
             {"mass_max_abs_z", d.main.mass.max_abs_z},
             {"theta_pi_u_max_abs_z", designated->martingale.max_abs_z},
             {"negative_control_max_abs_z", d.main.mass_drift.max_abs_z},
             {"orthogonality_re", ortho.estimate.mean.real()},
             {"orthogonality_im", ortho.estimate.mean.imag()},
             {"orthogonality_se_re", ortho.estimate.se_re},
             {"orthogonality_se_im", ortho.estimate.se_im},
             {"orthogonality_replicas", double(oo.n_replicas)}},
            "positive controls: pi_t(1) and theta pi(u) for r = steps_a, phi = bump"};
}

// ---------------------------------------------------------------- 9

Verdict uniqueness(Context& cx, const ExperimentConfig& cfg) {
    const auto spec = scenario("decoupled_classical", 1e-3);
    UniquenessOptions o;
    o.n_replicas = cx.opts.unique_replicas;
    o.n_particles = cx.opts.unique_particles;
    o.grid = {-7.0, 7.0, 281};
    o.seed = sub_seed(cx.opts.seed, "uniqueness");
    const auto rows = uniqueness_probe(spec, resolve_frequencies(cfg, 1, spec.horizon), resolve_phis(cfg), o);
    CsvWriter w(cx.path("uniqueness.csv"),
                {"r_label", "phi_label", "particle_re", "particle_im", "grid_re", "grid_im", "diff", "se", "verdict"});
    bool ok = !rows.empty();
    double worst = -1e300, dmax = 0.0;
    for (const auto& r : rows) {
        ok = ok && r.pass;
        worst = std::max(worst, r.diff - 3.0 * r.se - o.tolerance);
        dmax = std::max(dmax, r.diff);
        w.raw({r.r_label, r.phi_label, fmt17(r.particle.real()), fmt17(r.particle.imag()), fmt17(r.grid.real()),
               fmt17(r.grid.imag()), fmt17(r.diff), fmt17(r.se), r.pass ? "pass" : "fail"});
    }
    return {"C9 Uniqueness probe", "duality.uniqueness_probe, gridpde.zakai_fd_solve",
            "uniqueness through the total family of exponentials", ok,
            {{"replicas", double(o.n_replicas)}, {"particles", double(o.n_particles)}, {"rows", double(rows.size())},
             {"max_diff", dmax}, {"worst_margin", worst}},
            ""};
}

// ---------------------------------------------------------------- 10

std::string rows_text(const std::vector<DualityRow>& rows, const MartingaleResult& mass) {
    std::ostringstream s;
    for (const auto& r : rows)
        s << r.r_label << ',' << r.phi_label << ',' << fmt17(r.lhs.real()) << ',' << fmt17(r.lhs.imag()) << ','
          << fmt17(r.rhs.real()) << ',' << fmt17(r.rhs.imag()) << ',' << fmt17(r.se_gap) << '\n';
    for (double z : mass.z_re) s << fmt17(z) << '\n';
    return s.str();
}

Verdict determinism(Context& cx, const ExperimentConfig& cfg) {
    const int saved = worker_count();
    const auto spec = scenario("decoupled_classical", 1e-3);
    DualityOptions o;
    o.n_replicas = cx.opts.determinism_replicas;
    o.n_particles = cx.opts.duality_particles;
    o.seed = sub_seed(cx.opts.seed, "determinism");
    const auto phis = resolve_phis(cfg);
    const auto freqs = resolve_frequencies(cfg, 1, spec.horizon);
    std::vector<std::string> text;
    for (int w : {1, 4, 1}) {
        set_worker_count(w);
        const auto st = duality_study(spec, freqs, phis, o);
        text.push_back(rows_text(st.rows, st.mass));
    }

    // Kernel pairs: OpenMP and serial must agree bit for bit.
    set_worker_count(4);
    const auto cb = scenario("correlated_bounded", 1e-3);
    RngStream rng(o.seed, 0, 0, StreamRole::Observation);
    const auto b = simulate_reference(cb, rng);
    const auto track = make_track(cb, b.y_path);
    ParticleSystem p1(cb, 1500, {o.seed, 1}), p2(cb, 1500, {o.seed, 1});
    bool particles_equal = true;
    for (std::size_t n = 0; n < 50; ++n) {
        advance_particles(p1, cb.coeffs, track, n);
        advance_particles_serial(p2, cb.coeffs, track, n);
    }
    particles_equal = p1.x == p2.x && p1.logw == p2.logw;
    const std::size_t G = 2001;
    ZakaiStencilCoeffs c{std::vector<double>(G), std::vector<double>(G), std::vector<double>(G), std::vector<double>(G)};
    std::vector<double> p(G), q1(G), q2(G);
    for (std::size_t i = 0; i < G; ++i) {
        p[i] = rng.uniform();
        c.f[i] = rng.normal();
        c.a[i] = 1.0 + rng.uniform();
        c.gd[i] = 0.01 * rng.normal();
        c.hd[i] = 0.01 * rng.normal();
    }
    zakai_stencil_step(p, q1, c, 0.01, 1e-5);
    zakai_stencil_step_serial(p, q2, c, 0.01, 1e-5);
    set_worker_count(saved);

    const bool ok = text[0] == text[1] && text[0] == text[2] && particles_equal && q1 == q2;
    return {"C10 Reproducibility", "harness.cli_main, filter.advance_particles, gridpde.zakai_stencil_step",
            "determinism contract: same seed, same bytes for any worker count", ok,
            {{"replicas", double(o.n_replicas)},
             {"duality_identical_workers_1_4", text[0] == text[1] ? 1.0 : 0.0},
             {"duality_identical_rerun", text[0] == text[2] ? 1.0 : 0.0},
             {"particle_kernel_bitwise", particles_equal ? 1.0 : 0.0},
             {"stencil_kernel_bitwise", q1 == q2 ? 1.0 : 0.0}},
            "in-process part; the cross-process summary comparison is made by the acceptance test"};
}

}  // namespace

AcceptanceRun run_acceptance(const AcceptOptions& opts, const ExperimentConfig& config) {
    std::filesystem::create_directories(opts.out);
    AcceptanceRun run;
    run.report.command = "accept";
    run.report.config = config;
    run.report.seed = opts.seed;
    std::vector<std::string> files;
    Context cx{opts, files};
    auto add = [&](int id, Verdict v, double sec, double budget) {
        run.criteria.push_back({id, v, sec, budget});
        run.report.verdicts.push_back(std::move(v));
        run.timings.push_back({"C" + std::to_string(id), sec});
    };
    auto timed = [&](int id, double budget, auto&& fn) {
        const auto t0 = Clock::now();
        auto v = fn();
        add(id, std::move(v), seconds_since(t0), budget);
    };

    timed(1, 30.0, [&] { return penrose(cx); });
    timed(2, 120.0, [&] { return degenerate(cx); });
    timed(3, 120.0, [&] { return kalman(cx); });

    const auto rf = refinement_study(cx);
    run.timings.push_back({"refinement_study", rf.seconds});
    add(4, mass_equivalence(rf), rf.seconds, 120.0);
    add(5, zakai_refinement(rf), rf.seconds, 180.0);
    const auto dual = dual_ito_study(cx);
    run.timings.push_back({"dual_ito_study", dual.seconds});
    add(6, ito_refinement(rf, dual), rf.seconds + dual.seconds, 120.0);

    const auto db = duality_bundle(cx, config);
    run.timings.push_back({"duality_study", db.seconds});
    add(7, duality_verdict(db), db.seconds, 600.0);
    OrthogonalityResult ortho;
    double c8 = 0.0;
    auto v8 = martingale_verdict(cx, db, ortho, c8);
    add(8, std::move(v8), c8, 300.0);

    timed(9, 600.0, [&] { return uniqueness(cx, config); });
    timed(10, 0.0, [&] { return determinism(cx, config); });

    files.push_back("timings.json");
    run.report.files = files;
    write_summary(run.report, opts.out);
    write_timings(run.timings, opts.out);
    return run;
}

}  // namespace filterlab
