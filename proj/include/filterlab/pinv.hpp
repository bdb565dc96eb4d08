#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "filterlab/linalg.hpp"

namespace filterlab {

inline constexpr double kDefaultRankTol = 1e-12;
inline constexpr double kDefaultDetTol = 1e-10;
inline constexpr std::size_t kMinorDimCap = 8;

struct FullRankFactorization {
    std::size_t rank = 0;
    Matrix F;  // d x r, the selected columns of A
    Matrix G;  // r x l
    std::size_t minor_index = 1;  // 1-based position in the enumeration, 1 = the order-0 entry
    std::vector<std::size_t> row_selection;
    std::vector<std::size_t> column_selection;
};

// SVD-based pseudo-inverse. Singular values at or below
// rank_tol * s_max * max(rows, cols) are treated as zero.
Matrix pinv_oracle(const Matrix& a, double rank_tol = kDefaultRankTol);

// Minor enumeration order: position 1 is the conventional order-0 minor with
// determinant 0. Then order p = 1, 2, ..., min(d, l); within an order the row
// set runs lexicographically and, for each row set, the column set runs
// lexicographically. Returns the determinants in that order.
std::vector<double> minor_determinants(const Matrix& a);

// Pseudo-inverse through the full-rank factorisation A = F G built from the
// highest-indexed minor whose determinant counts as non-zero, i.e.
// |det| > det_tol * (max |a_ij|)^p for an order-p minor.
struct MinorPinv {
    Matrix pinv;
    FullRankFactorization factorization;
};

MinorPinv pinv_minor(const Matrix& a, double det_tol = kDefaultDetTol);

// A^+ A, the orthogonal projector onto the row space of A.
Matrix projector(const Matrix& a);

// Relative residuals of the four Penrose identities for a candidate X = A^+.
struct PenroseResiduals {
    double axa = 0.0, xax = 0.0, ax_sym = 0.0, xa_sym = 0.0;
    double max() const;
};
PenroseResiduals penrose_residuals(const Matrix& a, const Matrix& x);

// Random matrices with dims <= 6 and entries in [-10, 10]; about 30% are built
// as products of thinner factors so their rank is forced below min(rows, cols).
Matrix random_test_matrix(std::uint64_t seed, std::uint64_t trial, bool* rank_deficient = nullptr);

struct PenroseSuiteResult {
    std::size_t trials = 0;
    std::size_t passes = 0;
    std::size_t rank_deficient = 0;
    double max_residual_oracle = 0.0;
    double max_residual_minor = 0.0;
    double max_minor_vs_oracle = 0.0;  // entrywise
    double max_projector_norm = 0.0;   // spectral norm of A^+ A
    std::vector<std::size_t> failed_trials;
};

PenroseSuiteResult penrose_suite(std::size_t trials, std::uint64_t seed);

}  // namespace filterlab
