#include "filterlab/harness/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ostream>

#include "filterlab/csv.hpp"
#include "filterlab/duality.hpp"
#include "filterlab/errors.hpp"
#include "filterlab/filter.hpp"
#include "filterlab/gridpde.hpp"
#include "filterlab/harness/acceptance.hpp"
#include "filterlab/parallel.hpp"
#include "filterlab/pinv.hpp"

namespace filterlab {

namespace {

struct Common {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
    int workers = 0;
    std::string scenario;
};

ExperimentConfig effective_config(const Common& o) {
    ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
    if (!o.scenario.empty()) c.scenario = o.scenario;
    if (o.seed_set) c.seed = o.seed;
    if (!o.out.empty()) c.output = o.out;
    (void)resolve_scenario(c);  // validates overrides before any work starts
    return c;
}

void apply_workers(int flag) {
    int n = flag;
    if (n <= 0)
        if (const char* env = std::getenv("FILTERLAB_WORKERS")) n = std::atoi(env);
    if (n > 0) set_worker_count(n);
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

PathBundle observation_path(const ScenarioSpec& spec, std::uint64_t seed) {
    RngStream rng(seed, 0, 0, StreamRole::Observation);
    return simulate_joint(spec, rng);
}

void cmd_simulate(const ExperimentConfig& c, RunReport& r) {
    const auto spec = resolve_scenario(c);
    const std::uint64_t seed = c.seed.value_or(spec.seed);
    bool finite = true;
    for (std::size_t rep = 0; rep < spec.n_replicas; ++rep) {
        RngStream rng(seed, rep, 0, StreamRole::Observation);
        const auto b = simulate_joint(spec, rng);
        finite = finite && all_finite(b.x_path) && all_finite(b.y_path);
        r.files.push_back(write_paths_csv(b, c.output, rep).filename().string());
    }
    r.verdicts.push_back({"simulate", "sde.simulate_joint", "signal and observation system", finite,
                          {{"replicas", double(spec.n_replicas)}, {"steps", double(spec.time_grid().n_steps)}}, ""});
}

void cmd_filter(const ExperimentConfig& c, RunReport& r) {
    const auto spec = resolve_scenario(c);
    const std::uint64_t seed = c.seed.value_or(spec.seed);
    const auto b = observation_path(spec, seed);
    FilterOptions fo;
    fo.n_particles = spec.n_particles;
    fo.resample = c.resample;
    const auto run = ks_filter(spec, b.y_path, {seed, 0}, fo);
    const auto sigma = ks_path(run);
    const auto j = mass_process(sigma, run.track, spec.coeffs);
    const auto phis = resolve_phis(c);
    write_filter_report(run, j, phis, std::filesystem::path(c.output) / "filter.csv");
    r.files.push_back("filter.csv");

    const auto res = zakai_residuals(spec, run.track, run.ensembles, phis);
    std::vector<std::string> header{"t"};
    for (const auto& p : phis) {
        header.push_back("residual_" + p.name);
        header.push_back("stochastic_" + p.name);
    }
    CsvWriter w(std::filesystem::path(c.output) / "zakai_residual.csv", header);
    r.files.push_back("zakai_residual.csv");
    const auto tg = spec.time_grid();
    double stoch = 0.0;
    for (std::size_t n = 0; n <= tg.n_steps; ++n) {
        std::vector<double> row{tg.time(n)};
        for (const auto& rp : res) {
            row.push_back(rp.residual[n]);
            row.push_back(rp.stochastic[n]);
            stoch = std::max(stoch, std::abs(rp.stochastic[n]));
        }
        w.row(row);
    }

    double ks = 0.0, mass_err = 0.0;
    for (std::size_t n = 0; n < sigma.size(); ++n) {
        ks = std::max(ks, std::abs(sigma[n].mass() - 1.0));
        mass_err = std::max(mass_err, std::abs(j.values[n] - run.mass.values[n]) / run.mass.values[n]);
    }
    Verdict v{"filter normalization", "filter.ks_filter, filter.ks_path", "Kallianpur-Striebel formula", ks <= 1e-12,
              {{"particles", double(fo.n_particles)},
               {"max_abs_ks_mass_minus_one", ks},
               {"max_mass_rel_err", mass_err},
               {"max_abs_stochastic_term", stoch},
               {"exploded", double(run.diagnostics.exploded)},
               {"resample_count", double(run.diagnostics.resample_count)}},
              ""};
    r.verdicts.push_back(v);
    for (std::size_t p = 0; p < phis.size(); ++p)
        r.verdicts.push_back({"zakai residual " + phis[p].name, "filter.zakai_residual",
                              "weak form of the Zakai equation", std::isfinite(res[p].max_abs()),
                              {{"max_abs_residual", res[p].max_abs()}}, "diagnostic"});
    if (run.track.k_zero)
        r.verdicts.push_back({"degenerate stochastic term", "filter.zakai_residual",
                              "degenerate case k = 0 coincides with the prior distribution", stoch == 0.0,
                              {{"max_abs_stochastic_term", stoch}}, "must vanish identically when k = 0"});
}

void cmd_zakai_grid(const ExperimentConfig& c, RunReport& r) {
    const auto spec = resolve_scenario(c);
    const std::uint64_t seed = c.seed.value_or(spec.seed);
    const auto b = observation_path(spec, seed);
    const auto track = make_track(spec, b.y_path);
    ZakaiGridOptions zo;
    zo.keep_path = false;
    const auto sol = zakai_fd_solve(spec, track, c.grid, zo);
    write_grid_csv(sol.back(), std::filesystem::path(c.output) / "zakai_grid.csv");
    r.files.push_back("zakai_grid.csv");
    double lo = 0.0;
    for (double v : sol.back().re) lo = std::min(lo, v);
    const double mass = grid_mass(sol.back());
    r.verdicts.push_back({"zakai grid", "gridpde.zakai_fd_solve", "Zakai equation in density form",
                          std::isfinite(mass) && mass > 0.0,
                          {{"mass_at_T", mass}, {"mass_at_0", grid_mass(sol.front())}, {"min_density", lo}}, ""});
}

void cmd_duality(const ExperimentConfig& c, const std::string& test, RunReport& r) {
    const auto spec = resolve_scenario(c);
    const std::uint64_t seed = c.seed.value_or(spec.seed);
    const auto freqs = resolve_frequencies(c, spec.dims().l_obs, spec.horizon);
    const auto phis = resolve_phis(c);
    const std::filesystem::path dir(c.output);
    const std::size_t replicas = c.replicas.value_or(10000);

    if (test == "gap" || test == "martingale") {
        DualityOptions o;
        o.n_replicas = replicas;
        o.n_particles = c.particles.value_or(8);
        o.grid = c.grid;
        o.seed = seed;
        const auto st = duality_study(spec, freqs, phis, o);
        if (test == "gap") {
            write_duality_csv(st.rows, dir / "duality.csv");
            r.files.push_back("duality.csv");
            for (const auto& row : st.rows)
                r.verdicts.push_back({"duality " + row.r_label + "/" + row.phi_label, "duality.duality_gap",
                                      "E[theta_T pi_T(phi)] = E[pi_0(u_0)]", row.pass,
                                      {{"gap", row.gap}, {"se_gap", row.se_gap}}, ""});
            return;
        }
        CsvWriter w(dir / "martingale.csv", {"control", "interval", "z_re", "z_im"});
        r.files.push_back("martingale.csv");
        auto dump = [&](const std::string& name, const MartingaleResult& m) {
            for (std::size_t k = 0; k < m.z_re.size(); ++k)
                w.raw({name, std::to_string(k), fmt17(m.z_re[k]), fmt17(m.z_im[k])});
        };
        dump("mass", st.mass);
        dump("mass_plus_0.1t", st.mass_drift);
        r.verdicts.push_back({"martingale mass", "duality.martingale_test", "pi_t(1) is a martingale",
                              st.mass.max_abs_z <= 3.0, {{"max_abs_z", st.mass.max_abs_z}}, "positive control"});
        r.verdicts.push_back({"martingale injected drift", "duality.martingale_test", "pi_t(1) + 0.1 t is not",
                              st.mass_drift.max_abs_z >= 5.0, {{"max_abs_z", st.mass_drift.max_abs_z}},
                              "negative control, must be rejected"});
        for (const auto& row : st.rows) {
            dump("theta_pi_u/" + row.r_label + "/" + row.phi_label, row.martingale);
            r.verdicts.push_back({"martingale theta pi(u) " + row.r_label + "/" + row.phi_label,
                                  "duality.martingale_test", "theta_t pi_t(u_t) is a martingale",
                                  row.martingale.max_abs_z <= 3.0, {{"max_abs_z", row.martingale.max_abs_z}}, ""});
        }
        return;
    }
    if (test == "orthogonality") {
        OrthogonalityOptions o;
        o.n_replicas = replicas;
        o.seed = seed;
        const auto kappa = h2_functional(spec);
        CsvWriter w(dir / "orthogonality.csv", {"r_label", "re", "im", "se_re", "se_im", "z_re", "z_im", "verdict"});
        r.files.push_back("orthogonality.csv");
        for (const auto& f : freqs) {
            const auto res = orthogonality_test(spec, kappa, f, o);
            w.raw({f.label, fmt17(res.estimate.mean.real()), fmt17(res.estimate.mean.imag()),
                   fmt17(res.estimate.se_re), fmt17(res.estimate.se_im), fmt17(res.z_re), fmt17(res.z_im),
                   res.pass ? "pass" : "fail"});
            r.verdicts.push_back({"orthogonality " + f.label, "duality.orthogonality_test",
                                  "(I - k+k) dW~ is orthogonal to the exponential class", res.pass,
                                  {{"z_re", res.z_re}, {"z_im", res.z_im}}, ""});
        }
        return;
    }
    if (test == "uniqueness") {
        UniquenessOptions o;
        o.n_replicas = c.replicas.value_or(1000);
        o.n_particles = c.particles.value_or(100);
        o.grid = c.grid;
        o.seed = seed;
        const auto rows = uniqueness_probe(spec, freqs, phis, o);
        CsvWriter w(dir / "uniqueness.csv", {"r_label", "phi_label", "particle_re", "particle_im", "grid_re", "grid_im",
                                             "diff", "se", "verdict"});
        r.files.push_back("uniqueness.csv");
        for (const auto& row : rows) {
            w.raw({row.r_label, row.phi_label, fmt17(row.particle.real()), fmt17(row.particle.imag()),
                   fmt17(row.grid.real()), fmt17(row.grid.imag()), fmt17(row.diff), fmt17(row.se),
                   row.pass ? "pass" : "fail"});
            r.verdicts.push_back({"uniqueness " + row.r_label + "/" + row.phi_label, "duality.uniqueness_probe",
                                  "uniqueness through the total family of exponentials", row.pass,
                                  {{"diff", row.diff}, {"se", row.se}}, ""});
        }
        return;
    }
    throw ConfigurationError("unknown duality test '" + test + "' (gap, martingale, orthogonality, uniqueness)");
}

void cmd_pinv(std::size_t trials, std::uint64_t seed, RunReport& r) {
    const auto s = penrose_suite(trials, seed);
    r.verdicts.push_back({"pinv Penrose suite", "pinv.pinv_minor, pinv.pinv_oracle", "four Penrose identities",
                          s.passes == s.trials,
                          {{"trials", double(s.trials)},
                           {"passes", double(s.passes)},
                           {"rank_deficient", double(s.rank_deficient)},
                           {"max_residual_oracle", s.max_residual_oracle},
                           {"max_residual_minor", s.max_residual_minor},
                           {"max_minor_vs_oracle", s.max_minor_vs_oracle},
                           {"max_projector_norm", s.max_projector_norm}},
                          ""});
}

int finish(const RunReport& r, std::ostream& out, std::ostream& err) {
    for (const auto& v : r.verdicts) out << (v.pass ? "PASS " : "FAIL ") << v.test << '\n';
    if (r.all_pass()) return 0;
    for (const auto& v : r.verdicts)
        if (!v.pass) err << "numerical failure: " << v.test << '\n';
    return 1;
}

}  // namespace

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"filterlab: particle and grid filters for the Zakai equation"};
    app.require_subcommand(1);
    app.fallthrough();
    Common o;
    app.add_option("--config", o.config_path, "YAML experiment config");
    app.add_option_function<std::uint64_t>(
        "--seed", [&o](const std::uint64_t& s) { o.seed = s, o.seed_set = true; }, "master seed");
    app.add_option("--out", o.out, "output directory");
    app.add_option("--workers", o.workers, "OpenMP threads (fallback: FILTERLAB_WORKERS)");
    app.add_option("--scenario", o.scenario, "built-in scenario name");

    auto* sim = app.add_subcommand("simulate", "simulate signal and observation paths");
    auto* fil = app.add_subcommand("filter", "particle filter with reports");
    auto* grid = app.add_subcommand("zakai-grid", "finite-difference Zakai solve (d = 1)");
    auto* dual = app.add_subcommand("duality", "duality, martingale, orthogonality or uniqueness test");
    std::string test = "gap";
    dual->add_option("--test", test, "gap | martingale | orthogonality | uniqueness");
    auto* pinv = app.add_subcommand("pinv-test", "Penrose identity property suite");
    std::size_t trials = 1000;
    pinv->add_option("--trials", trials, "random matrices");
    auto* acc = app.add_subcommand("accept", "full acceptance run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    const auto t0 = std::chrono::steady_clock::now();
    try {
        apply_workers(o.workers);
        const auto cfg = effective_config(o);
        const std::uint64_t seed = cfg.seed.value_or(42);
        RunReport r;
        r.config = cfg;
        r.seed = seed;
        std::filesystem::path dir = cfg.output;

        if (*acc) {
            AcceptOptions ao;
            ao.seed = seed;
            ao.out = o.out.empty() ? std::filesystem::path(ao.out) : dir;
            const auto run = run_acceptance(ao, cfg);
            for (const auto& c : run.criteria) {
                out << (c.verdict.pass ? "PASS " : "FAIL ") << c.verdict.test << "  (" << fmt17(c.seconds) << " s)\n";
            }
            if (run.report.all_pass()) return 0;
            for (const auto& c : run.criteria)
                if (!c.verdict.pass) err << "numerical failure: " << c.verdict.test << '\n';
            return 1;
        }

        std::filesystem::create_directories(dir);
        if (*sim) {
            r.command = "simulate";
            cmd_simulate(cfg, r);
        } else if (*fil) {
            r.command = "filter";
            cmd_filter(cfg, r);
        } else if (*grid) {
            r.command = "zakai-grid";
            cmd_zakai_grid(cfg, r);
        } else if (*dual) {
            r.command = "duality " + test;
            cmd_duality(cfg, test, r);
        } else if (*pinv) {
            r.command = "pinv-test";
            cmd_pinv(trials, seed, r);
        }
        write_config(cfg, dir / "config.yaml");
        r.files.push_back("config.yaml");
        r.files.push_back("timings.json");
        write_summary(r, dir);
        write_timings({{r.command, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}},
                      dir);
        return finish(r, out, err);
    } catch (const ConfigurationError& e) {
        err << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const UnsupportedConfigurationError& e) {
        err << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const InvalidInputError& e) {
        err << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "numerical failure: " << app.get_subcommands().front()->get_name() << ": " << e.what() << '\n';
        return 1;
    }
}

}  // namespace filterlab
