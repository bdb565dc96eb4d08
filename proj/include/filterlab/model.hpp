#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "filterlab/linalg.hpp"
#include "filterlab/rng.hpp"
#include "filterlab/time_grid.hpp"

namespace filterlab {

struct Dimensions {
    std::size_t d = 1;      // signal
    std::size_t d_obs = 1;  // observation
    std::size_t l = 1;      // signal noise V
    std::size_t l_obs = 1;  // observation noise W

    void validate() const;
    friend bool operator==(const Dimensions&, const Dimensions&) = default;
};

// Coefficients write into caller-owned spans so hot loops never allocate.
// Matrix-valued outputs are row-major: g is d x l, g_bar is d x l_obs,
// k is d_obs x l_obs.
using StateFn = std::function<void(double t, std::span<const double> x, std::span<const double> y,
                                   std::span<double> out)>;
using ObsFn = std::function<void(double t, std::span<const double> y, std::span<double> out)>;

struct CoefficientSet {
    Dimensions dims;
    StateFn f;
    StateFn g;
    StateFn g_bar;
    ObsFn h1;
    StateFn h2;
    ObsFn k;
};

// h = h1 + k h2, always derived from the parts.
void eval_h(const CoefficientSet& c, double t, std::span<const double> x, std::span<const double> y,
            std::span<double> out);

struct TestFunction {
    std::string name;
    std::function<double(std::span<const double>)> value;
    std::function<void(std::span<const double>, std::span<double>)> gradient;
    std::function<void(std::span<const double>, std::span<double>)> hessian;  // d x d row-major
    bool bounded = true;
};

namespace test_functions {
TestFunction constant(double c = 1.0);
TestFunction coordinate(std::size_t axis = 0);          // x_i, unbounded
TestFunction square(std::size_t axis = 0);              // x_i^2, unbounded
TestFunction sine(std::size_t axis = 0, double freq = 1.0);
TestFunction cosine(std::size_t axis = 0, double freq = 1.0);
TestFunction tanh_fn(std::size_t axis = 0, double scale = 1.0);
TestFunction bump(double center, double width, std::size_t axis = 0);  // exp(-(x-c)^2 / (2 w^2))
TestFunction clipped_square(std::size_t axis = 0);      // x^2 / (1 + x^2)
TestFunction combine(double alpha, const TestFunction& phi, const TestFunction& psi);  // alpha phi + psi
std::optional<TestFunction> by_name(const std::string& name);
std::vector<std::string> names();
}  // namespace test_functions

// Gaussian X0 with diagonal covariance, deterministic Y0.
struct InitialLaw {
    std::vector<double> x_mean;
    std::vector<double> x_sd;
    std::vector<double> y0;

    void sample_x(RngStream& rng, std::span<double> out) const {
        for (std::size_t i = 0; i < x_mean.size(); ++i) out[i] = x_mean[i] + x_sd[i] * rng.normal();
    }
    // Product Gaussian density; zero sd components are not allowed here.
    double x_density(std::span<const double> x) const;
};

struct ScenarioSpec {
    std::string name;
    CoefficientSet coeffs;
    InitialLaw initial;
    double horizon = 1.0;
    double dt = 1e-3;
    std::size_t n_particles = 1000;
    std::size_t n_replicas = 1;
    std::uint64_t seed = 42;

    bool y_free = false;       // no coefficient reads y
    bool autonomous = true;    // no coefficient reads t
    double declared_bound = 0.0;  // bound K on sampled derivatives; 0 means none declared
    int smoothness_order = 0;     // declared, not verified

    const Dimensions& dims() const { return coeffs.dims; }
    TimeGrid time_grid() const { return TimeGrid::from_step(horizon, dt); }
    void validate() const;
};

// Per-time observation geometry: k, its pseudo-inverse and the projector k+k.
struct ObservationFrame {
    Matrix k;
    Matrix k_pinv;
    Matrix proj;
    std::vector<double> h1;
};

ObservationFrame observation_frame(const CoefficientSet& c, double t, std::span<const double> y);

// Caches one coefficient evaluation at (t, x, y) so several test functions can
// share it. One instance per thread.
class ModelEvaluator {
public:
    explicit ModelEvaluator(const CoefficientSet& c);

    void eval(double t, std::span<const double> x, std::span<const double> y);

    std::span<const double> f() const { return f_; }
    std::span<const double> g() const { return g_; }
    std::span<const double> g_bar() const { return gbar_; }
    std::span<const double> h2() const { return h2_; }

    // a = g g^T + gbar gbar^T entry (i, j) from the cached values.
    double a(std::size_t i, std::size_t j) const;

    // A phi at the cached point.
    double generator(const TestFunction& phi, std::span<const double> x);
    // Row grad(phi) gbar + phi h2^T (length l_obs), no projector applied.
    void weak_row(const TestFunction& phi, std::span<const double> x, std::span<double> out);
    // B^j phi for all j: weak_row times k+k.
    void b_terms(const TestFunction& phi, std::span<const double> x, const Matrix& proj, std::span<double> out);

    const CoefficientSet& coeffs() const { return *c_; }

private:
    const CoefficientSet* c_;
    double t_ = 0.0;
    std::vector<double> x_, y_;
    std::vector<double> f_, g_, gbar_, h2_;
    std::vector<double> grad_, hess_, row_;
};

double generator_apply(const CoefficientSet& c, double t, std::span<const double> x, std::span<const double> y,
                       const TestFunction& phi);
// j is zero-based, j < l_obs.
double b_apply(const CoefficientSet& c, std::size_t j, double t, std::span<const double> x,
               std::span<const double> y, const TestFunction& phi);

struct CoefficientProbe {
    std::string name;
    std::vector<double> sup_abs;      // per radius
    std::vector<double> growth;       // sup |c| / (1 + |x| + |y|), per radius
    std::vector<double> lipschitz;    // sup of local difference quotients, per radius
    double d1_sup = 0.0;              // sup |d c / d x_i| by central differences
    double d2_sup = 0.0;              // sup |d^2 c / d x_i^2|
    bool bounded = true;
    bool linear_growth = true;
    bool global_lipschitz = true;
};

struct AssumptionReport {
    std::vector<double> radii;  // sampled (x, y) boxes are [-R, R]^(d + d_obs)
    std::vector<CoefficientProbe> probes;
    bool all_bounded = true;          // flags Assumption U boundedness
    bool all_linear_growth = true;
    bool all_global_lipschitz = true;
    bool derivatives_within_bound = true;  // only meaningful with a declared bound
    double derivative_sup = 0.0;
    int declared_smoothness = 0;
};

AssumptionReport check_assumptions(const ScenarioSpec& spec, std::size_t n_samples);

struct NamedScenario {
    std::string name;
    ScenarioSpec spec;
};

std::vector<NamedScenario> builtin_scenarios();
std::optional<ScenarioSpec> find_scenario(const std::string& name);

}  // namespace filterlab
