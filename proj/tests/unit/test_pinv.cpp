#include <doctest.h>

#include <cmath>

#include "filterlab/errors.hpp"
#include "filterlab/pinv.hpp"
#include "filterlab/rng.hpp"
#include "oracles.hpp"

using namespace filterlab;

namespace {

Eigen::MatrixXd to_eigen(const Matrix& a) {
    Eigen::MatrixXd m(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m(Eigen::Index(i), Eigen::Index(j)) = a(i, j);
    return m;
}

double max_diff(const Matrix& a, const Eigen::MatrixXd& b) {
    REQUIRE(a.rows() == std::size_t(b.rows()));
    REQUIRE(a.cols() == std::size_t(b.cols()));
    return (to_eigen(a) - b).cwiseAbs().maxCoeff();
}

double max_diff(const Matrix& a, const Matrix& b) { return max_diff(a, to_eigen(b)); }

}  // namespace

TEST_CASE("pinv_oracle on hand cases") {
    const auto z = pinv_oracle(Matrix(2, 3));
    CHECK(z.rows() == 3);
    CHECK(z.cols() == 2);
    CHECK(z.max_abs() == 0.0);

    CHECK(max_diff(pinv_oracle(Matrix::identity(3)), Matrix::identity(3)) < 1e-15);
    CHECK(max_diff(pinv_oracle(Matrix{{2.0, 0.0}, {0.0, 0.0}}), Matrix{{0.5, 0.0}, {0.0, 0.0}}) < 1e-15);
}

TEST_CASE("pinv_oracle and pinv_minor agree with an Eigen SVD on a rank-one 4x2 matrix") {
    const Matrix a{{1.0, -2.0}, {0.5, -1.0}, {-3.0, 6.0}, {2.0, -4.0}};
    const auto ref = oracle::pinv_svd(to_eigen(a));
    CHECK(max_diff(pinv_oracle(a), ref) < 1e-12);
    const auto m = pinv_minor(a);
    CHECK(m.factorization.rank == 1);
    CHECK(max_diff(m.pinv, ref) < 1e-12);
}

TEST_CASE("pinv_minor conventions") {
    const auto z = pinv_minor(Matrix(2, 3));
    CHECK(z.factorization.rank == 0);
    CHECK(z.factorization.minor_index == 1);
    CHECK(z.pinv.rows() == 3);
    CHECK(z.pinv.max_abs() == 0.0);

    const auto id = pinv_minor(Matrix::identity(2));
    CHECK(id.factorization.rank == 2);
    CHECK(max_diff(id.pinv, Matrix::identity(2)) < 1e-15);

    // 2x2: order-0 entry, 4 order-1 minors, 1 order-2 minor.
    CHECK(minor_determinants(Matrix::identity(2)).size() == 6);
    CHECK(minor_determinants(Matrix::identity(2)).front() == 0.0);
}

TEST_CASE("pinv_minor matches pinv_oracle on random matrices with entries in [-1, 1]") {
    RngStream rng(7, 0, 0, StreamRole::Matrix);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t r = 1 + std::size_t(rng.uniform() * 6), c = 1 + std::size_t(rng.uniform() * 6);
        Matrix a(r, c);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) a(i, j) = 2.0 * rng.uniform() - 1.0;
        CHECK(max_diff(pinv_minor(a).pinv, pinv_oracle(a)) <= 1e-8);
        CHECK(max_diff(pinv_oracle(a), oracle::pinv_svd(to_eigen(a))) <= 1e-10);
    }
}

TEST_CASE("projector examples and properties") {
    CHECK(projector(Matrix(2, 2)).max_abs() == 0.0);
    CHECK(max_diff(projector(Matrix{{2.0, 1.0}, {1.0, 3.0}}), Matrix::identity(2)) < 1e-14);
    CHECK(max_diff(projector(Matrix{{1.0, 0.0}, {0.0, 0.0}}), Matrix{{1.0, 0.0}, {0.0, 0.0}}) < 1e-15);

    for (std::uint64_t t = 0; t < 100; ++t) {
        const auto a = random_test_matrix(11, t);
        const auto p = projector(a);
        CHECK(spectral_norm(p) <= 1.0 + 1e-12);
        CHECK(max_diff(p * p, p) <= 1e-10);
        CHECK(max_diff(p, p.transpose()) <= 1e-10);
    }
}

TEST_CASE("pinv is an involution on its image") {
    for (std::uint64_t t = 0; t < 100; ++t) {
        const auto a = random_test_matrix(3, t);
        const double scale = std::max(1.0, a.max_abs());
        CHECK(max_diff(pinv_oracle(pinv_oracle(a)), a) <= 1e-8 * scale);
    }
}

TEST_CASE("pinv is discontinuous at the zero matrix") {
    for (double n : {1.0, 10.0, 1e3, 1e6}) {
        CHECK(pinv_oracle(Matrix{{1.0 / n}})(0, 0) == doctest::Approx(n).epsilon(1e-14));
        CHECK(pinv_minor(Matrix{{1.0 / n}}).pinv(0, 0) == doctest::Approx(n).epsilon(1e-14));
    }
    CHECK(pinv_oracle(Matrix{{0.0}})(0, 0) == 0.0);
    CHECK(pinv_minor(Matrix{{0.0}}).pinv(0, 0) == 0.0);
}

TEST_CASE("non-finite input is rejected") {
    CHECK_THROWS_AS(pinv_oracle(Matrix{{NAN, 1.0}}), InvalidInputError);
    CHECK_THROWS_AS(pinv_minor(Matrix{{INFINITY}}), InvalidInputError);
}

TEST_CASE("Penrose suite at small size") {
    const auto r = penrose_suite(200, 5);
    CHECK(r.passes == 200);
    CHECK(r.rank_deficient > 30);
    CHECK(r.max_residual_minor <= 1e-9);
    CHECK(r.max_minor_vs_oracle <= 1e-8);
}
