#pragma once

// Reference solutions written independently of the library numerics. They use
// Eigen and their own time stepping, and are shared by the unit tests and the
// acceptance run.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Linear system dX = F X dt + G dV + Gb dW, with observation increments
// dN = H X dt + dW (observation already mapped through k^{-1}).
struct LinearSystem {
    Eigen::MatrixXd F, G, Gb, H;
    Eigen::VectorXd m0;
    Eigen::MatrixXd P0;
};

struct KalmanBucyPath {
    std::vector<Eigen::VectorXd> mean;
    std::vector<Eigen::MatrixXd> cov;
};

// Riccati equation by RK4 with `substeps` per observation step, mean by the
// Euler innovation update with the gain at the left point. dN holds n_steps
// rows of size H.rows().
KalmanBucyPath kalman_bucy(const LinearSystem& sys, double dt, std::span<const double> dN, int substeps = 8);

// E[phi(X_T) | X_0 = x0] for dX = b(X) dt + s(X) dB by Euler with `paths`
// antithetic pairs.
struct McEstimate {
    double mean = 0.0;
    double se = 0.0;
};
McEstimate kolmogorov_mc(const std::function<double(double)>& b, const std::function<double(double)>& s,
                         const std::function<double(double)>& phi, double x0, double T, double dt, std::size_t pairs,
                         std::uint64_t seed);

// dp/dt = -(b p)' + (a p)'' / 2 on [x_min, x_max] with p = 0 at both ends,
// Crank-Nicolson in time, flux form in space, sparse LU solve.
std::vector<double> fokker_planck_cn(const std::function<double(double)>& b, const std::function<double(double)>& a,
                                     std::vector<double> p0, double x_min, double x_max, double T, std::size_t steps);

// Moore-Penrose inverse through Eigen's SVD.
Eigen::MatrixXd pinv_svd(const Eigen::MatrixXd& a, double rel_tol = 1e-12);

}  // namespace oracle
