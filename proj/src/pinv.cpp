#include "filterlab/pinv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "filterlab/errors.hpp"
#include "filterlab/rng.hpp"

namespace filterlab {

namespace {

void require_finite(const Matrix& a) {
    if (!a.all_finite()) throw InvalidInputError("pseudo-inverse of a matrix with non-finite entries");
}

// Advance idx (strictly increasing, values < n) to the next subset in
// lexicographic order. Returns false after the last one.
bool next_combination(std::vector<std::size_t>& idx, std::size_t n) {
    const std::size_t p = idx.size();
    for (std::size_t i = p; i-- > 0;) {
        if (idx[i] < n - p + i) {
            ++idx[i];
            for (std::size_t j = i + 1; j < p; ++j) idx[j] = idx[j - 1] + 1;
            return true;
        }
    }
    return false;
}

std::vector<std::size_t> first_combination(std::size_t p) {
    std::vector<std::size_t> idx(p);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

struct MinorVisit {
    std::size_t index;
    std::size_t order;
    const std::vector<std::size_t>& rows;
    const std::vector<std::size_t>& cols;
    double det;
};

template <class Fn>
void for_each_minor(const Matrix& a, Fn&& fn) {
    const std::size_t top = std::min(a.rows(), a.cols());
    std::size_t index = 1;
    for (std::size_t p = 1; p <= top; ++p) {
        auto rows = first_combination(p);
        do {
            auto cols = first_combination(p);
            do {
                ++index;
                fn(MinorVisit{index, p, rows, cols, determinant(submatrix(a, rows, cols))});
            } while (next_combination(cols, a.cols()));
        } while (next_combination(rows, a.rows()));
    }
}

// (F^T F)^{-1} F^T for F with full column rank, by Householder QR so the
// conditioning of F is not squared. Throws when R is numerically singular.
Matrix left_pinv(const Matrix& f, std::size_t minor_index) {
    const std::size_t m = f.rows(), r = f.cols();
    Matrix q = f;                     // becomes R in the upper triangle
    Matrix qt = Matrix::identity(m);  // accumulates Q^T
    std::vector<double> v(m);
    for (std::size_t k = 0; k < r; ++k) {
        double norm = 0.0;
        for (std::size_t i = k; i < m; ++i) norm += q(i, k) * q(i, k);
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        const double alpha = q(k, k) > 0.0 ? -norm : norm;
        for (std::size_t i = 0; i < m; ++i) v[i] = i < k ? 0.0 : q(i, k);
        v[k] -= alpha;
        double vv = 0.0;
        for (std::size_t i = k; i < m; ++i) vv += v[i] * v[i];
        auto reflect = [&](Matrix& x) {
            for (std::size_t j = 0; j < x.cols(); ++j) {
                double d = 0.0;
                for (std::size_t i = k; i < m; ++i) d += v[i] * x(i, j);
                d *= 2.0 / vv;
                for (std::size_t i = k; i < m; ++i) x(i, j) -= d * v[i];
            }
        };
        reflect(q);
        reflect(qt);
    }
    double dmin = INFINITY, dmax = 0.0;
    for (std::size_t k = 0; k < r; ++k) {
        dmin = std::min(dmin, std::abs(q(k, k)));
        dmax = std::max(dmax, std::abs(q(k, k)));
    }
    if (!(dmin > 1e-14 * dmax))
        throw DegenerateSelectionError("selected factor is numerically rank deficient", minor_index);
    // R X = first r rows of Q^T.
    Matrix x(r, m);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = r; k-- > 0;) {
            double s = qt(k, j);
            for (std::size_t l = k + 1; l < r; ++l) s -= q(k, l) * x(l, j);
            x(k, j) = s / q(k, k);
        }
    return x;
}

}  // namespace

Matrix pinv_oracle(const Matrix& a, double rank_tol) {
    require_finite(a);
    if (!(rank_tol > 0.0)) throw InvalidInputError("rank_tol must be positive");
    Matrix out(a.cols(), a.rows());
    if (a.empty()) return out;
    const Svd svd = svd_jacobi(a);
    const double cutoff = rank_tol * svd.s.front() * static_cast<double>(std::max(a.rows(), a.cols()));
    for (std::size_t k = 0; k < svd.s.size(); ++k) {
        if (!(svd.s[k] > cutoff)) break;
        const double inv = 1.0 / svd.s[k];
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double vik = svd.v(i, k) * inv;
            for (std::size_t j = 0; j < a.rows(); ++j) out(i, j) += vik * svd.u(j, k);
        }
    }
    return out;
}

std::vector<double> minor_determinants(const Matrix& a) {
    require_finite(a);
    std::vector<double> dets{0.0};
    for_each_minor(a, [&](const MinorVisit& v) { dets.push_back(v.det); });
    return dets;
}

MinorPinv pinv_minor(const Matrix& a, double det_tol) {
    require_finite(a);
    if (!(det_tol > 0.0)) throw InvalidInputError("det_tol must be positive");
    if (a.rows() > kMinorDimCap || a.cols() > kMinorDimCap)
        throw InvalidInputError("minor-enumeration pseudo-inverse is capped at 8x8");

    const double scale = a.max_abs();
    FullRankFactorization fac;
    for_each_minor(a, [&](const MinorVisit& v) {
        // The enumeration is increasing in index, so the last hit wins.
        if (std::abs(v.det) > det_tol * std::pow(scale, static_cast<double>(v.order))) {
            fac.minor_index = v.index;
            fac.rank = v.order;
            fac.row_selection = v.rows;
            fac.column_selection = v.cols;
        }
    });

    MinorPinv out{Matrix(a.cols(), a.rows()), std::move(fac)};
    FullRankFactorization& f = out.factorization;
    if (f.rank == 0) return out;

    std::vector<std::size_t> all_cols(a.cols());
    std::iota(all_cols.begin(), all_cols.end(), std::size_t{0});
    std::vector<std::size_t> all_rows(a.rows());
    std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});

    const Matrix m = submatrix(a, f.row_selection, f.column_selection);
    f.F = submatrix(a, all_rows, f.column_selection);
    f.G = lu_solve(lu_decompose(m), submatrix(a, f.row_selection, all_cols));

    // G^T (F^T A G^T)^{-1} F^T = G^T (G G^T)^{-1} (F^T F)^{-1} F^T because A = F G;
    // evaluated as two QR least-squares factors.
    out.pinv = left_pinv(f.G.transpose(), f.minor_index).transpose() * left_pinv(f.F, f.minor_index);
    return out;
}

Matrix projector(const Matrix& a) {
    return pinv_oracle(a) * a;
}

}  // namespace filterlab

namespace filterlab {

double PenroseResiduals::max() const { return std::max({axa, xax, ax_sym, xa_sym}); }

PenroseResiduals penrose_residuals(const Matrix& a, const Matrix& x) {
    auto rel = [](const Matrix& diff, const Matrix& ref) {
        const double n = ref.frobenius();
        return n > 0.0 ? diff.frobenius() / n : diff.frobenius();
    };
    const Matrix ax = a * x, xa = x * a;
    return {rel(ax * a - a, a), rel(xa * x - x, x), rel(ax.transpose() - ax, ax), rel(xa.transpose() - xa, xa)};
}

Matrix random_test_matrix(std::uint64_t seed, std::uint64_t trial, bool* rank_deficient) {
    RngStream rng(seed, trial, 0, StreamRole::Matrix);
    auto dim = [&] { return 1 + static_cast<std::size_t>(rng.uniform() * 6.0); };
    const std::size_t m = std::min<std::size_t>(dim(), 6), n = std::min<std::size_t>(dim(), 6);
    const bool deficient = rng.uniform() < 0.3;
    if (rank_deficient) *rank_deficient = deficient;
    if (!deficient) {
        Matrix a(m, n);
        for (double& v : a.data()) v = -10.0 + 20.0 * rng.uniform();
        return a;
    }
    const std::size_t r = static_cast<std::size_t>(rng.uniform() * static_cast<double>(std::min(m, n)));
    if (r == 0) return Matrix(m, n);
    // Factor entries in [-s, s] with r s^2 = 10 keep the product inside [-10, 10].
    const double s = std::sqrt(10.0 / static_cast<double>(r));
    Matrix b(m, r), c(r, n);
    for (double& v : b.data()) v = s * (2.0 * rng.uniform() - 1.0);
    for (double& v : c.data()) v = s * (2.0 * rng.uniform() - 1.0);
    return b * c;
}

PenroseSuiteResult penrose_suite(std::size_t trials, std::uint64_t seed) {
    PenroseSuiteResult out;
    out.trials = trials;
    for (std::size_t t = 0; t < trials; ++t) {
        bool deficient = false;
        const Matrix a = random_test_matrix(seed, t, &deficient);
        out.rank_deficient += deficient;
        const Matrix xo = pinv_oracle(a);
        bool ok = true;
        double ro = penrose_residuals(a, xo).max(), rm = 0.0, diff = 0.0, pn = 0.0;
        try {
            const Matrix xm = pinv_minor(a).pinv;
            rm = penrose_residuals(a, xm).max();
            diff = (xm - xo).max_abs();
        } catch (const Error&) {
            ok = false;
        }
        pn = spectral_norm(xo * a);
        ok = ok && ro <= 1e-9 && rm <= 1e-9 && diff <= 1e-8 && pn <= 1.0 + 1e-12;
        out.max_residual_oracle = std::max(out.max_residual_oracle, ro);
        out.max_residual_minor = std::max(out.max_residual_minor, rm);
        out.max_minor_vs_oracle = std::max(out.max_minor_vs_oracle, diff);
        out.max_projector_norm = std::max(out.max_projector_norm, pn);
        if (ok)
            ++out.passes;
        else
            out.failed_trials.push_back(t);
    }
    return out;
}

}  // namespace filterlab
