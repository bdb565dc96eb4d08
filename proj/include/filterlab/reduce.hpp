#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace filterlab {

// Deterministic reductions. The summation tree is fixed: terms are summed
// left to right inside blocks of kReduceBlock, then block sums are combined by
// recursive halving. The parallel variants only change who computes each
// block sum, so both variants give bitwise identical results for any thread
// count.
inline constexpr std::size_t kReduceBlock = 256;

namespace detail {
inline double halving_sum(const double* v, std::size_t n) {
    if (n == 0) return 0.0;
    if (n == 1) return v[0];
    const std::size_t h = n / 2;
    return halving_sum(v, h) + halving_sum(v + h, n - h);
}
}  // namespace detail

template <class Term>
double block_reduce_serial(std::size_t n, Term&& term) {
    const std::size_t nb = (n + kReduceBlock - 1) / kReduceBlock;
    std::vector<double> partial(nb, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t lo = b * kReduceBlock, hi = lo + kReduceBlock < n ? lo + kReduceBlock : n;
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += term(i);
        partial[b] = s;
    }
    return detail::halving_sum(partial.data(), nb);
}

template <class Term>
double block_reduce(std::size_t n, Term&& term) {
    const std::size_t nb = (n + kReduceBlock - 1) / kReduceBlock;
    std::vector<double> partial(nb, 0.0);
    const long long nbl = static_cast<long long>(nb);
#pragma omp parallel for schedule(static) if (nb > 4)
    for (long long b = 0; b < nbl; ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kReduceBlock;
        const std::size_t hi = lo + kReduceBlock < n ? lo + kReduceBlock : n;
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += term(i);
        partial[static_cast<std::size_t>(b)] = s;
    }
    return detail::halving_sum(partial.data(), nb);
}

inline double pairwise_sum(std::span<const double> v) {
    return block_reduce(v.size(), [&](std::size_t i) { return v[i]; });
}
inline double pairwise_sum_serial(std::span<const double> v) {
    return block_reduce_serial(v.size(), [&](std::size_t i) { return v[i]; });
}

}  // namespace filterlab
