#pragma once

#include <cstddef>
#include <exception>
#include <limits>

namespace filterlab {

// Runs body(i) for i in [0, n) across OpenMP threads. Each index must write
// only its own outputs. If several indices throw, the lowest index wins, so
// the reported failure does not depend on the thread count.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
    std::exception_ptr first;
    std::size_t first_index = std::numeric_limits<std::size_t>::max();
    const long long nl = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (long long ii = 0; ii < nl; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        try {
            body(i);
        } catch (...) {
#pragma omp critical(filterlab_parallel_for)
            {
                if (i < first_index) {
                    first_index = i;
                    first = std::current_exception();
                }
            }
        }
    }
    if (first) std::rethrow_exception(first);
}

int worker_count();
void set_worker_count(int n);

}  // namespace filterlab
