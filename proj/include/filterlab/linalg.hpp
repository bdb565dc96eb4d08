#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace filterlab {

// Dense row-major matrix. Sizes here are tiny (observation dimensions), so
// nothing is blocked or vectorised on purpose.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return rows_ == 0 || cols_ == 0; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    Matrix transpose() const;
    bool all_finite() const;
    double max_abs() const;
    double frobenius() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

// y = A x
void matvec(const Matrix& a, std::span<const double> x, std::span<double> y);

Matrix submatrix(const Matrix& a, std::span<const std::size_t> rows, std::span<const std::size_t> cols);

// LU with partial pivoting. determinant() returns 0 for an exactly zero pivot;
// lu_solve() refuses a singular factorisation.
struct LuDecomposition {
    Matrix lu;
    std::vector<std::size_t> perm;
    int sign = 1;
    bool singular = false;
    double min_pivot = 0.0;
    double max_pivot = 0.0;
};

LuDecomposition lu_decompose(const Matrix& a);
double determinant(const Matrix& a);
Matrix lu_solve(const LuDecomposition& lu, const Matrix& b);
Matrix inverse(const Matrix& a);

// Thin SVD by one-sided Jacobi: A = U diag(s) V^T with U (m x p), V (n x p),
// p = min(m, n), singular values sorted descending.
struct Svd {
    Matrix u;
    std::vector<double> s;
    Matrix v;
};

Svd svd_jacobi(const Matrix& a);
double spectral_norm(const Matrix& a);

}  // namespace filterlab
