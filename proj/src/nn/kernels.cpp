#include "canids/nn/kernels.hpp"

#include <omp.h>

#include "canids/error.hpp"

namespace canids {

int max_threads() { return omp_get_max_threads(); }

}  // namespace canids

namespace canids::nn::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

bool go_parallel(ExecPolicy policy, std::size_t work) {
    return policy == ExecPolicy::Parallel && work >= kParallelWork && !omp_in_parallel() && omp_get_max_threads() > 1;
}

void check(bool ok, const char* op, const Matrix& a, const Matrix& b, const Matrix& c) {
    if (!ok)
        throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_string() + ", " + b.shape_string() +
                             " -> " + c.shape_string());
}

// One output row of each product. Serial and parallel paths both call these.
inline void row_nn(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
    const std::size_t k_dim = a.cols(), n = b.cols();
    double* __restrict crow = c.data() + i * n;
    const double* arow = a.data() + i * k_dim;
    for (std::size_t k = 0; k < k_dim; ++k) {
        const double aik = arow[k];
        if (aik == 0.0) continue;
        const double* __restrict brow = b.data() + k * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
}

inline void row_tn(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
    const std::size_t k_dim = a.rows(), m = a.cols(), n = b.cols();
    double* __restrict crow = c.data() + i * n;
    for (std::size_t k = 0; k < k_dim; ++k) {
        const double aki = a.data()[k * m + i];
        if (aki == 0.0) continue;
        const double* __restrict brow = b.data() + k * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
    }
}

inline void row_nt(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
    const std::size_t k_dim = a.cols(), n = b.rows();
    const double* __restrict arow = a.data() + i * k_dim;
    double* crow = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
        const double* __restrict brow = b.data() + j * k_dim;
        double s = 0.0;
        for (std::size_t k = 0; k < k_dim; ++k) s += arow[k] * brow[k];
        crow[j] += s;
    }
}

template <typename RowFn>
void run_rows(std::size_t rows, bool parallel, RowFn fn) {
    if (parallel) {
        const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) fn(static_cast<std::size_t>(i));
    } else {
        for (std::size_t i = 0; i < rows; ++i) fn(i);
    }
}

}  // namespace

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, ExecPolicy policy) {
    check(a.cols() == b.rows() && c.rows() == a.rows() && c.cols() == b.cols(), "gemm_nn", a, b, c);
    run_rows(c.rows(), go_parallel(policy, a.rows() * a.cols() * b.cols()),
             [&](std::size_t i) { row_nn(a, b, c, i); });
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, ExecPolicy policy) {
    check(a.rows() == b.rows() && c.rows() == a.cols() && c.cols() == b.cols(), "gemm_tn", a, b, c);
    run_rows(c.rows(), go_parallel(policy, a.rows() * a.cols() * b.cols()),
             [&](std::size_t i) { row_tn(a, b, c, i); });
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c, ExecPolicy policy) {
    check(a.cols() == b.cols() && c.rows() == a.rows() && c.cols() == b.rows(), "gemm_nt", a, b, c);
    run_rows(c.rows(), go_parallel(policy, a.rows() * a.cols() * b.rows()),
             [&](std::size_t i) { row_nt(a, b, c, i); });
}

void axpy(double alpha, const Matrix& x, Matrix& y, ExecPolicy policy) {
    if (!x.same_shape(y)) throw DimensionError("axpy: shape mismatch " + x.shape_string() + " vs " + y.shape_string());
    const auto n = static_cast<std::ptrdiff_t>(x.size());
    const double* __restrict xs = x.data();
    double* __restrict ys = y.data();
    if (go_parallel(policy, x.size() * 4)) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) ys[i] += alpha * xs[i];
    } else {
        for (std::ptrdiff_t i = 0; i < n; ++i) ys[i] += alpha * xs[i];
    }
}

namespace serial {
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) { kernels::gemm_nn(a, b, c, ExecPolicy::Serial); }
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) { kernels::gemm_tn(a, b, c, ExecPolicy::Serial); }
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) { kernels::gemm_nt(a, b, c, ExecPolicy::Serial); }
void axpy(double alpha, const Matrix& x, Matrix& y) { kernels::axpy(alpha, x, y, ExecPolicy::Serial); }
}  // namespace serial

}  // namespace canids::nn::kernels
