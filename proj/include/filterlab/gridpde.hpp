#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "filterlab/frequency.hpp"
#include "filterlab/measure.hpp"
#include "filterlab/model.hpp"
#include "filterlab/sde.hpp"

namespace filterlab {

struct Grid1D {
    double x_min = -8.0;
    double x_max = 8.0;
    std::size_t n_points = 401;

    double spacing() const { return (x_max - x_min) / static_cast<double>(n_points - 1); }
    double x(std::size_t i) const { return i + 1 == n_points ? x_max : x_min + static_cast<double>(i) * spacing(); }
    void validate() const;
    friend bool operator==(const Grid1D&, const Grid1D&) = default;
};

// Node values as explicit (re, im) pairs; real functions keep im at zero.
struct GridFunction {
    Grid1D grid;
    std::vector<double> re;
    std::vector<double> im;
    double timestamp = 0.0;

    static GridFunction real(const Grid1D& g, std::vector<double> values, double t = 0.0);
    static GridFunction sample(const Grid1D& g, const TestFunction& phi, double t = 0.0);
};

// <p, phi>_grid = h sum_i p_i phi_i (real part of p).
double grid_pairing(const GridFunction& p, std::span<const double> phi_values);
double grid_mass(const GridFunction& p);

void write_grid_csv(const GridFunction& u, const std::filesystem::path& file);

// Zakai equation in density form, explicit Euler-Maruyama in time and central
// differences in space:
//   p_{n+1} = p_n + dt A* p_n + B*^j p_n dW~^j,
//   A* p = -(f p)' + (a p)'' / 2,  B*^j p = -(p [gbar k+k]_j)' + [h2^T k+k]_j p,
// with homogeneous Dirichlet boundaries. dW~ enters only through its
// projected part k+(dY - h1 dt), read from the observation track.
struct ZakaiGridOptions {
    bool keep_path = true;  // false: return only the initial and final densities
};

std::vector<GridFunction> zakai_fd_solve(const ScenarioSpec& spec, const ObservationTrack& track, const Grid1D& grid,
                                         const ZakaiGridOptions& opts = {});

// Node coefficients for one explicit step, and the stencil kernel itself.
struct ZakaiStencilCoeffs {
    std::vector<double> f, a, gd, hd;  // f, a, gbar . dproj, h2 . dproj at the nodes
};
void zakai_stencil_step(std::span<const double> p, std::span<double> out, const ZakaiStencilCoeffs& c, double h,
                        double dt);
void zakai_stencil_step_serial(std::span<const double> p, std::span<double> out, const ZakaiStencilCoeffs& c,
                               double h, double dt);

// Discrete generator on grid values (central differences) and its adjoint;
// the pair satisfies <A*_h p, phi> = <p, A_h phi> exactly when p and phi vanish
// near the boundary.
std::vector<double> grid_generator(const ScenarioSpec& spec, const Grid1D& g, double t, std::span<const double> phi);
std::vector<double> grid_adjoint_generator(const ScenarioSpec& spec, const Grid1D& g, double t,
                                           std::span<const double> p);

// Backward dual problem for y-free coefficients (martingale term v = 0):
//   du = -(A u + i r^j B^j u) dt, u_T = phi.
// Diffusion implicit, first-order terms and the r-coupling explicit; zero
// gradient at both ends.
struct DualSolution {
    std::vector<GridFunction> u;  // u[n] at t_n
};

DualSolution dual_backward_solve(const ScenarioSpec& spec, const FrequencyChoice& r, const TestFunction& phi_T,
                                 const Grid1D& grid, const TimeGrid& time_grid);
// The same scheme written as the real system
//   du1 = -(A u1 - r^j B^j u2) dt,  du2 = -(A u2 + r^j B^j u1) dt,  u2_T = 0.
DualSolution dual_backward_solve_split(const ScenarioSpec& spec, const FrequencyChoice& r, const TestFunction& phi_T,
                                       const Grid1D& grid, const TimeGrid& time_grid);

// Sigma = -(A u + i r^j B^j u) on the grid for a dual solution.
std::vector<GridFunction> implied_sigma(const ScenarioSpec& spec, const FrequencyChoice& r, const DualSolution& sol,
                                        const TimeGrid& time_grid);

// Natural cubic spline through real node values.
class GridSpline {
public:
    GridSpline(const Grid1D& g, std::span<const double> values);
    // value, first and second derivative at x; x outside the grid throws
    // SupportCoverageError.
    void eval(double x, double& v, double& d1, double& d2) const;

private:
    Grid1D g_;
    std::vector<double> y_, m_;
};

// Complex value with gradient and Hessian at one point.
struct Jet {
    std::complex<double> value;
    std::vector<std::complex<double>> grad;
    std::vector<std::complex<double>> hess;
};

// u_n(x) on the time grid; at(n) returns a thread-safe evaluator for one time.
class FieldPath {
public:
    class Slice {
    public:
        virtual ~Slice() = default;
        virtual void jet(std::span<const double> x, Jet& out) const = 0;
    };
    virtual ~FieldPath() = default;
    virtual std::unique_ptr<Slice> at(std::size_t n) const = 0;
};

std::shared_ptr<FieldPath> static_field(TestFunction phi);
// c(t_n) phi(x)
std::shared_ptr<FieldPath> scaled_field(TestFunction phi, std::function<double(double)> c, TimeGrid grid);
std::shared_ptr<FieldPath> grid_field(std::vector<GridFunction> path);

struct ItoIntegrands {
    std::shared_ptr<FieldPath> u;
    std::shared_ptr<FieldPath> sigma;                 // null means 0
    std::vector<std::shared_ptr<FieldPath>> lambda;   // empty means 0, else l_obs entries
};

struct ItoResidual {
    std::vector<std::complex<double>> residual;  // left - right at each grid time
    std::vector<std::complex<double>> left;
    double max_abs() const;
};

// Both sides of the extended Ito formula along a measure path:
//   mu_t(u_t) - mu_0(u_0)
//   = sum_n mu_n(A u + Sigma + B^j Lambda^j) dt + mu_n(B^j u + Lambda^j) dW~^j_n,
// where dW~ is the projected increment on the track.
ItoResidual ito_check(const ScenarioSpec& spec, const ObservationTrack& track, std::span<const WeightedEnsemble> path,
                      const ItoIntegrands& integrands);
// Grid densities are paired by the node rule h sum_i p_i psi(x_i).
ItoResidual ito_check(const ScenarioSpec& spec, const ObservationTrack& track, std::span<const GridFunction> path,
                      const ItoIntegrands& integrands);

}  // namespace filterlab
