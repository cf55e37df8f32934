#pragma once

#include <cstddef>
#include <exception>

namespace canids {

// Selects between the OpenMP kernels and their serial reference implementations.
// Every parallel path in the project produces bit-identical results to its serial
// counterpart; tests and the benchmark target rely on that.
enum class ExecPolicy { Serial, Parallel };

int max_threads();

// Number of fixed-size work chunks a batch of `n` items is split into for parallel
// gradient accumulation. Depends only on n, never on the thread count, so reductions
// always happen in the same order.
inline std::size_t chunk_count(std::size_t n, std::size_t max_chunks = 16) {
    return n < max_chunks ? n : max_chunks;
}

// Runs fn(i) for i in [0, n). Iterations must be independent. The first exception
// thrown by any iteration is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t n, ExecPolicy policy, Fn&& fn) {
    if (policy == ExecPolicy::Serial || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr error;
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            fn(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(canids_parallel_for_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace canids
