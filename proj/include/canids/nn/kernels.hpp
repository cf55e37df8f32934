#pragma once

#include "canids/nn/matrix.hpp"
#include "canids/parallel.hpp"

namespace canids::nn::kernels {

// Dense products accumulating into `c`:
//   gemm_nn: c += a  * b      gemm_tn: c += a^T * b      gemm_nt: c += a * b^T
// The parallel variants split work over output rows only, so every output element is
// reduced in the same order as the serial reference and results are bit-identical.
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, ExecPolicy policy = ExecPolicy::Parallel);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, ExecPolicy policy = ExecPolicy::Parallel);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c, ExecPolicy policy = ExecPolicy::Parallel);

// y += alpha * x
void axpy(double alpha, const Matrix& x, Matrix& y, ExecPolicy policy = ExecPolicy::Parallel);

namespace serial {
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);
void axpy(double alpha, const Matrix& x, Matrix& y);
}  // namespace serial

}  // namespace canids::nn::kernels
