#include "oracles.hpp"

#include <cmath>
#include <random>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace oracle {

namespace {

Eigen::MatrixXd riccati_rhs(const LinearSystem& s, const Eigen::MatrixXd& P) {
    const Eigen::MatrixXd K = P * s.H.transpose() + s.Gb;
    return s.F * P + P * s.F.transpose() + s.G * s.G.transpose() + s.Gb * s.Gb.transpose() - K * K.transpose();
}

}  // namespace

KalmanBucyPath kalman_bucy(const LinearSystem& sys, double dt, std::span<const double> dN, int substeps) {
    const auto m = static_cast<std::size_t>(sys.H.rows());
    const std::size_t n = dN.size() / m;
    KalmanBucyPath out;
    Eigen::VectorXd mean = sys.m0;
    Eigen::MatrixXd P = sys.P0;
    out.mean.push_back(mean);
    out.cov.push_back(P);
    const double h = dt / substeps;
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::MatrixXd K = P * sys.H.transpose() + sys.Gb;
        const Eigen::Map<const Eigen::VectorXd> dn(dN.data() + i * m, static_cast<Eigen::Index>(m));
        mean = mean + sys.F * mean * dt + K * (dn - sys.H * mean * dt);
        for (int s = 0; s < substeps; ++s) {
            const Eigen::MatrixXd k1 = riccati_rhs(sys, P);
            const Eigen::MatrixXd k2 = riccati_rhs(sys, P + 0.5 * h * k1);
            const Eigen::MatrixXd k3 = riccati_rhs(sys, P + 0.5 * h * k2);
            const Eigen::MatrixXd k4 = riccati_rhs(sys, P + h * k3);
            P += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.mean.push_back(mean);
        out.cov.push_back(P);
    }
    return out;
}

McEstimate kolmogorov_mc(const std::function<double(double)>& b, const std::function<double(double)>& s,
                         const std::function<double(double)>& phi, double x0, double T, double dt, std::size_t pairs,
                         std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    const auto steps = static_cast<std::size_t>(std::llround(T / dt));
    const double sq = std::sqrt(dt);
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t p = 0; p < pairs; ++p) {
        double xa = x0, xb = x0;
        for (std::size_t k = 0; k < steps; ++k) {
            const double z = nd(gen) * sq;
            xa += b(xa) * dt + s(xa) * z;
            xb += b(xb) * dt - s(xb) * z;
        }
        const double v = 0.5 * (phi(xa) + phi(xb));
        sum += v;
        sum2 += v * v;
    }
    const double np = static_cast<double>(pairs);
    const double mean = sum / np;
    return {mean, std::sqrt(std::max(0.0, sum2 / np - mean * mean) / (np - 1.0))};
}

std::vector<double> fokker_planck_cn(const std::function<double(double)>& b, const std::function<double(double)>& a,
                                     std::vector<double> p0, double x_min, double x_max, double T, std::size_t steps) {
    const auto n = static_cast<Eigen::Index>(p0.size());
    const double h = (x_max - x_min) / static_cast<double>(n - 1), dt = T / static_cast<double>(steps);
    auto x = [&](double i) { return x_min + i * h; };
    // L p_i = -(F_{i+1/2} - F_{i-1/2}) / h + (a_{i+1} p_{i+1} - 2 a_i p_i + a_{i-1} p_{i-1}) / (2 h^2)
    // with F_{i+1/2} = b(x_{i+1/2}) (p_i + p_{i+1}) / 2.
    std::vector<Eigen::Triplet<double>> trip;
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
        const double di = static_cast<double>(i);
        const double bp = b(x(di + 0.5)), bm = b(x(di - 0.5));
        const double c = 1.0 / (2.0 * h * h);
        trip.emplace_back(i, i - 1, bm / (2.0 * h) + c * a(x(di - 1)));
        trip.emplace_back(i, i, -bp / (2.0 * h) + bm / (2.0 * h) - 2.0 * c * a(x(di)));
        trip.emplace_back(i, i + 1, -bp / (2.0 * h) + c * a(x(di + 1)));
    }
    Eigen::SparseMatrix<double> L(n, n), I(n, n);
    L.setFromTriplets(trip.begin(), trip.end());
    I.setIdentity();
    const Eigen::SparseMatrix<double> lhs = I - 0.5 * dt * L, rhs = I + 0.5 * dt * L;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(lhs);
    Eigen::VectorXd p = Eigen::Map<Eigen::VectorXd>(p0.data(), n);
    for (std::size_t k = 0; k < steps; ++k) {
        Eigen::VectorXd r = rhs * p;
        r(0) = 0.0;
        r(n - 1) = 0.0;
        p = lu.solve(r);
    }
    return {p.data(), p.data() + n};
}

Eigen::MatrixXd pinv_svd(const Eigen::MatrixXd& a, double rel_tol) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    const double cut = s.size() ? rel_tol * s(0) * static_cast<double>(std::max(a.rows(), a.cols())) : 0.0;
    Eigen::MatrixXd sinv = Eigen::MatrixXd::Zero(a.cols(), a.rows());
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > cut) sinv(i, i) = 1.0 / s(i);
    return svd.matrixV() * sinv * svd.matrixU().transpose();
}

}  // namespace oracle
