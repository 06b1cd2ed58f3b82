#include "cacl/numerics/kernels.hpp"

#include <algorithm>
#include <vector>

namespace cacl::kernels {

namespace {

inline bool worth_parallel(std::size_t m, std::size_t n, std::size_t k) {
  return m > 1 && m * n * k >= kParallelThreshold;
}

}  // namespace

void gemm_nt(std::span<const double> a, std::span<const double> b,
             std::span<const double> bias, std::size_t m, std::size_t n,
             std::size_t k, std::span<double> out) {
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t kk = 0; kk < k; ++kk) bt[kk * n + j] = b[j * k + kk];
  }
  const bool has_bias = !bias.empty();
  const double* ap = a.data();
  const double* btp = bt.data();
  double* op = out.data();
#pragma omp parallel for schedule(static) if (worth_parallel(m, n, k))
  for (std::size_t i = 0; i < m; ++i) {
    double* row = op + i * n;
    std::fill(row, row + n, 0.0);
    const double* arow = ap + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* brow = btp + kk * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aik * brow[j];
    }
    if (has_bias) {
      for (std::size_t j = 0; j < n; ++j) row[j] += bias[j];
    }
  }
}

void gemm_nn_acc(std::span<const double> a, std::span<const double> b,
                 std::size_t m, std::size_t n, std::size_t k,
                 std::span<double> out) {
  const double* ap = a.data();
  const double* bp = b.data();
  double* op = out.data();
#pragma omp parallel for schedule(static) if (worth_parallel(m, n, k))
  for (std::size_t i = 0; i < m; ++i) {
    double* row = op + i * n;
    const double* arow = ap + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* brow = bp + kk * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aik * brow[j];
    }
  }
}

void gemm_tn_acc(std::span<const double> a, std::span<const double> b,
                 std::size_t m, std::size_t n, std::size_t k,
                 std::span<double> out) {
  const double* ap = a.data();
  const double* bp = b.data();
  double* op = out.data();
#pragma omp parallel for schedule(static) if (worth_parallel(m, n, k))
  for (std::size_t i = 0; i < m; ++i) {
    double* row = op + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aki = ap[kk * m + i];
      const double* brow = bp + kk * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aki * brow[j];
    }
  }
}

void im2col3x3(std::span<const double> x, std::size_t batch, std::size_t channels,
               std::size_t height, std::size_t width, std::span<double> cols) {
  const std::size_t ck = channels * 9;
  const std::size_t hw = height * width;
  const long h = static_cast<long>(height);
  const long w = static_cast<long>(width);
#pragma omp parallel for schedule(static) if (batch * hw * ck >= kParallelThreshold)
  for (std::size_t bp = 0; bp < batch * hw; ++bp) {
    const std::size_t bi = bp / hw;
    const long y = static_cast<long>((bp % hw) / width);
    const long xx = static_cast<long>(bp % width);
    double* row = cols.data() + bp * ck;
    for (std::size_t c = 0; c < channels; ++c) {
      const double* plane = x.data() + (bi * channels + c) * hw;
      for (long dy = -1; dy <= 1; ++dy) {
        for (long dx = -1; dx <= 1; ++dx) {
          const long sy = y + dy;
          const long sx = xx + dx;
          const bool inside = sy >= 0 && sy < h && sx >= 0 && sx < w;
          *row++ = inside ? plane[sy * w + sx] : 0.0;
        }
      }
    }
  }
}

void col2im3x3_acc(std::span<const double> cols, std::size_t batch,
                   std::size_t channels, std::size_t height, std::size_t width,
                   std::span<double> dx) {
  const std::size_t ck = channels * 9;
  const std::size_t hw = height * width;
  const long h = static_cast<long>(height);
  const long w = static_cast<long>(width);
  // Parallel over (batch, channel) planes: each plane is written by one thread.
#pragma omp parallel for schedule(static) if (batch * hw * ck >= kParallelThreshold)
  for (std::size_t plane_idx = 0; plane_idx < batch * channels; ++plane_idx) {
    const std::size_t bi = plane_idx / channels;
    const std::size_t c = plane_idx % channels;
    double* plane = dx.data() + plane_idx * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      const long y = static_cast<long>(p / width);
      const long xx = static_cast<long>(p % width);
      const double* src = cols.data() + (bi * hw + p) * ck + c * 9;
      for (long dy = -1; dy <= 1; ++dy) {
        for (long dxo = -1; dxo <= 1; ++dxo, ++src) {
          const long sy = y + dy;
          const long sx = xx + dxo;
          if (sy >= 0 && sy < h && sx >= 0 && sx < w) plane[sy * w + sx] += *src;
        }
      }
    }
  }
}

namespace serial {

void gemm_nt(std::span<const double> a, std::span<const double> b,
             std::span<const double> bias, std::size_t m, std::size_t n,
             std::size_t k, std::span<double> out) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[j * k + kk];
      out[i * n + j] = bias.empty() ? s : s + bias[j];
    }
  }
}

void gemm_nn_acc(std::span<const double> a, std::span<const double> b,
                 std::size_t m, std::size_t n, std::size_t k,
                 std::span<double> out) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        out[i * n + j] += a[i * k + kk] * b[kk * n + j];
      }
    }
  }
}

void gemm_tn_acc(std::span<const double> a, std::span<const double> b,
                 std::size_t m, std::size_t n, std::size_t k,
                 std::span<double> out) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        out[i * n + j] += a[kk * m + i] * b[kk * n + j];
      }
    }
  }
}

void conv2d3x3_direct(std::span<const double> x, std::span<const double> kernels,
                      std::span<const double> bias, std::size_t batch,
                      std::size_t channels, std::size_t filters,
                      std::size_t height, std::size_t width,
                      std::span<double> out) {
  const long h = static_cast<long>(height);
  const long w = static_cast<long>(width);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t f = 0; f < filters; ++f) {
      for (long y = 0; y < h; ++y) {
        for (long xx = 0; xx < w; ++xx) {
          double s = 0.0;
          for (std::size_t c = 0; c < channels; ++c) {
            for (long ky = 0; ky < 3; ++ky) {
              for (long kx = 0; kx < 3; ++kx) {
                const long sy = y + ky - 1;
                const long sx = xx + kx - 1;
                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                s += x[((b * channels + c) * height + sy) * width + sx] *
                     kernels[((f * channels + c) * 3 + ky) * 3 + kx];
              }
            }
          }
          out[((b * filters + f) * height + y) * width + xx] =
              bias.empty() ? s : s + bias[f];
        }
      }
    }
  }
}

}  // namespace serial

}  // namespace cacl::kernels
