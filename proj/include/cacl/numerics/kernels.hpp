#ifndef CACL_NUMERICS_KERNELS_HPP_
#define CACL_NUMERICS_KERNELS_HPP_

// Dense kernels behind the differentiable ops. The default namespace holds
// the OpenMP-parallel, vectorization-friendly versions; `serial` holds the
// straight-loop reference versions used by the tests and the benchmark.
//
// Both variants accumulate every output element in the same (ascending
// inner-index) order, so with -ffp-contract=off they agree bit for bit and
// results do not depend on the thread count.

#include <cstddef>
#include <span>

namespace cacl::kernels {

// out[m x n] = a[m x k] * b[n x k]^T (+ bias[n] when non-empty).
void gemm_nt(std::span<const double> a, std::span<const double> b,
             std::span<const double> bias, std::size_t m, std::size_t n,
             std::size_t k, std::span<double> out);

// out[m x n] += a[m x k] * b[k x n]
void gemm_nn_acc(std::span<const double> a, std::span<const double> b,
                 std::size_t m, std::size_t n, std::size_t k,
                 std::span<double> out);

// out[m x n] += a[k x m]^T * b[k x n]
void gemm_tn_acc(std::span<const double> a, std::span<const double> b,
                 std::size_t m, std::size_t n, std::size_t k,
                 std::span<double> out);

// 3x3, stride 1, zero padding 1. x is [batch x C x H x W];
// cols is [(batch*H*W) x (C*9)].
void im2col3x3(std::span<const double> x, std::size_t batch, std::size_t channels,
               std::size_t height, std::size_t width, std::span<double> cols);
// Adjoint of im2col3x3: accumulates cols back into dx.
void col2im3x3_acc(std::span<const double> cols, std::size_t batch,
                   std::size_t channels, std::size_t height, std::size_t width,
                   std::span<double> dx);

namespace serial {

void gemm_nt(std::span<const double> a, std::span<const double> b,
             std::span<const double> bias, std::size_t m, std::size_t n,
             std::size_t k, std::span<double> out);
void gemm_nn_acc(std::span<const double> a, std::span<const double> b,
                 std::size_t m, std::size_t n, std::size_t k,
                 std::span<double> out);
void gemm_tn_acc(std::span<const double> a, std::span<const double> b,
                 std::size_t m, std::size_t n, std::size_t k,
                 std::span<double> out);

// Direct six-deep loop convolution, x [batch x C x H x W],
// kernels [F x C x 3 x 3], out [batch x F x H x W].
void conv2d3x3_direct(std::span<const double> x, std::span<const double> kernels,
                      std::span<const double> bias, std::size_t batch,
                      std::size_t channels, std::size_t filters,
                      std::size_t height, std::size_t width,
                      std::span<double> out);

}  // namespace serial

// Work below this many multiply-adds stays on the calling thread.
inline constexpr std::size_t kParallelThreshold = 1 << 15;

}  // namespace cacl::kernels

#endif  // CACL_NUMERICS_KERNELS_HPP_
