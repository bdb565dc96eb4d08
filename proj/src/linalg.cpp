#include "filterlab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "filterlab/errors.hpp"

namespace filterlab {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (data_.size() != rows_ * cols_) throw InvalidInputError("matrix entry count does not match shape");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw InvalidInputError("ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Matrix::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

double Matrix::frobenius() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw InvalidInputError("matrix product shape mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidInputError("matrix sum shape mismatch");
    Matrix c = a;
    for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidInputError("matrix difference shape mismatch");
    Matrix c = a;
    for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] -= b.data()[i];
    return c;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix c = a;
    for (double& v : c.data()) v *= s;
    return c;
}

void matvec(const Matrix& a, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
}

Matrix submatrix(const Matrix& a, std::span<const std::size_t> rows, std::span<const std::size_t> cols) {
    Matrix s(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) s(i, j) = a(rows[i], cols[j]);
    return s;
}

LuDecomposition lu_decompose(const Matrix& a) {
    if (a.rows() != a.cols()) throw InvalidInputError("LU needs a square matrix");
    const std::size_t n = a.rows();
    LuDecomposition out{a, std::vector<std::size_t>(n), 1, false, 0.0, 0.0};
    std::iota(out.perm.begin(), out.perm.end(), std::size_t{0});
    Matrix& m = out.lu;
    out.min_pivot = n ? std::numeric_limits<double>::infinity() : 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(m(i, k)) > std::abs(m(p, k))) p = i;
        if (p != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(m(k, j), m(p, j));
            std::swap(out.perm[k], out.perm[p]);
            out.sign = -out.sign;
        }
        const double piv = m(k, k);
        out.min_pivot = std::min(out.min_pivot, std::abs(piv));
        out.max_pivot = std::max(out.max_pivot, std::abs(piv));
        if (piv == 0.0) {
            out.singular = true;
            continue;
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const double l = m(i, k) / piv;
            m(i, k) = l;
            for (std::size_t j = k + 1; j < n; ++j) m(i, j) -= l * m(k, j);
        }
    }
    return out;
}

double determinant(const Matrix& a) {
    if (a.rows() == 0) return 1.0;
    const auto lu = lu_decompose(a);
    if (lu.singular) return 0.0;
    double det = lu.sign;
    for (std::size_t i = 0; i < a.rows(); ++i) det *= lu.lu(i, i);
    return det;
}

Matrix lu_solve(const LuDecomposition& lu, const Matrix& b) {
    const std::size_t n = lu.lu.rows();
    if (b.rows() != n) throw InvalidInputError("LU solve shape mismatch");
    if (lu.singular) throw InvalidInputError("LU solve on a singular matrix");
    Matrix x(n, b.cols());
    for (std::size_t c = 0; c < b.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = b(lu.perm[i], c);
            for (std::size_t j = 0; j < i; ++j) s -= lu.lu(i, j) * x(j, c);
            x(i, c) = s;
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double s = x(ii, c);
            for (std::size_t j = ii + 1; j < n; ++j) s -= lu.lu(ii, j) * x(j, c);
            x(ii, c) = s / lu.lu(ii, ii);
        }
    }
    return x;
}

Matrix inverse(const Matrix& a) {
    return lu_solve(lu_decompose(a), Matrix::identity(a.rows()));
}

namespace {

// One-sided Jacobi on a tall (m >= n) matrix.
Svd jacobi_tall(const Matrix& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Matrix u = a;
    Matrix v = Matrix::identity(n);
    constexpr double eps = 1e-15;
    for (int sweep = 0; sweep < 80; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += u(i, p) * u(i, p);
                    beta += u(i, q) * u(i, q);
                    gamma += u(i, p) * u(i, q);
                }
                if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double up = u(i, p), uq = u(i, q);
                    u(i, p) = c * up - s * uq;
                    u(i, q) = s * up + c * uq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }
    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += u(i, j) * u(i, j);
        sigma[j] = std::sqrt(s);
        if (sigma[j] > 0.0)
            for (std::size_t i = 0; i < m; ++i) u(i, j) /= sigma[j];
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });
    Svd out{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        out.s[k] = sigma[j];
        for (std::size_t i = 0; i < m; ++i) out.u(i, k) = u(i, j);
        for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v(i, j);
    }
    return out;
}

}  // namespace

Svd svd_jacobi(const Matrix& a) {
    if (a.rows() >= a.cols()) return jacobi_tall(a);
    Svd t = jacobi_tall(a.transpose());
    return Svd{t.v, t.s, t.u};
}

double spectral_norm(const Matrix& a) {
    if (a.empty()) return 0.0;
    return svd_jacobi(a).s.front();
}

}  // namespace filterlab
