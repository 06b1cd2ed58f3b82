#include "cacl/numerics/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "cacl/numerics/kernels.hpp"

namespace cacl {

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

// Common shape of a unary elementwise op: forward maps values, backward
// multiplies the incoming gradient by a local derivative computed from the
// input and output values.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  const bool track = GradTape::tracking({&x});
  Tensor y = make_result(x.shape(), std::move(out), track);
  if (track) {
    GradTape::current()->record([xi = x.handle(), yi = y.handle(), deriv] {
      if (yi->grad.empty()) return;
      auto g = xi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += yi->grad[i] * deriv(xi->value[i], yi->value[i]);
      }
    });
  }
  return y;
}

std::size_t last_extent(const Tensor& x) {
  return x.rank() == 0 ? 1 : x.shape().back();
}

std::vector<double> col_sums(std::span<const double> m, std::size_t rows,
                             std::size_t cols) {
  std::vector<double> s(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) s[c] += m[r * cols + c];
  }
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  const bool track = GradTape::tracking({&a, &b});
  Tensor y = make_result(a.shape(), std::move(out), track);
  if (track) {
    GradTape::current()->record([ai = a.handle(), bi = b.handle(), yi = y.handle()] {
      if (yi->grad.empty()) return;
      if (ai->requires_grad) ai->accumulate_grad(yi->grad);
      if (bi->requires_grad) bi->accumulate_grad(yi->grad);
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  const bool track = GradTape::tracking({&a, &b});
  Tensor y = make_result(a.shape(), std::move(out), track);
  if (track) {
    GradTape::current()->record([ai = a.handle(), bi = b.handle(), yi = y.handle()] {
      if (yi->grad.empty()) return;
      if (ai->requires_grad) ai->accumulate_grad(yi->grad);
      if (bi->requires_grad) {
        auto g = bi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= yi->grad[i];
      }
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  const bool track = GradTape::tracking({&a, &b});
  Tensor y = make_result(a.shape(), std::move(out), track);
  if (track) {
    GradTape::current()->record([ai = a.handle(), bi = b.handle(), yi = y.handle()] {
      if (yi->grad.empty()) return;
      if (ai->requires_grad) {
        auto g = ai->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * bi->value[i];
      }
      if (bi->requires_grad) {
        auto g = bi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * ai->value[i];
      }
    });
  }
  return y;
}

Tensor scale(const Tensor& x, double s) {
  return unary(
      x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(
      x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        // Branches keep exp() from overflowing for large |v|.
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const bool track = GradTape::tracking({&x});
  Tensor y = make_result(Shape{}, {s}, track);
  if (track) {
    GradTape::current()->record([xi = x.handle(), yi = y.handle()] {
      if (yi->grad.empty()) return;
      const double g0 = yi->grad[0];
      auto g = xi->grad_buffer();
      for (double& v : g) v += g0;
    });
  }
  return y;
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw std::invalid_argument("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor row_sum(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("row_sum needs a matrix");
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r] += x[r * cols + c];
  }
  const bool track = GradTape::tracking({&x});
  Tensor y = make_result(Shape{rows}, std::move(out), track);
  if (track) {
    GradTape::current()->record([xi = x.handle(), yi = y.handle(), rows, cols] {
      if (yi->grad.empty()) return;
      auto g = xi->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += yi->grad[r];
      }
    });
  }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2) throw std::invalid_argument("linear: weight must be a matrix");
  const std::size_t out_dim = weight.dim(0);
  const std::size_t in_dim = weight.dim(1);
  if (bias.rank() != 1 || bias.dim(0) != out_dim) {
    throw std::invalid_argument("linear: bias " + shape_str(bias.shape()) +
                                " does not match weight " + shape_str(weight.shape()));
  }
  std::size_t batch = 0;
  Shape out_shape;
  if (x.rank() == 1 && x.dim(0) == in_dim) {
    batch = 1;
    out_shape = {out_dim};
  } else if (x.rank() == 2 && x.dim(1) == in_dim) {
    batch = x.dim(0);
    out_shape = {batch, out_dim};
  } else {
    throw std::invalid_argument("linear: input " + shape_str(x.shape()) +
                                " does not match weight " + shape_str(weight.shape()));
  }
  std::vector<double> out(batch * out_dim);
  kernels::gemm_nt(x.data(), weight.data(), bias.data(), batch, out_dim, in_dim, out);
  const bool track = GradTape::tracking({&x, &weight, &bias});
  Tensor y = make_result(std::move(out_shape), std::move(out), track);
  if (track) {
    GradTape::current()->record([xi = x.handle(), wi = weight.handle(),
                                 bi = bias.handle(), yi = y.handle(), batch,
                                 out_dim, in_dim] {
      if (yi->grad.empty()) return;
      const std::span<const double> dy = yi->grad;
      if (xi->requires_grad) {
        kernels::gemm_nn_acc(dy, wi->value, batch, in_dim, out_dim, xi->grad_buffer());
      }
      if (wi->requires_grad) {
        kernels::gemm_tn_acc(dy, xi->value, out_dim, in_dim, batch, wi->grad_buffer());
      }
      if (bi->requires_grad) bi->accumulate_grad(col_sums(dy, batch, out_dim));
    });
  }
  return y;
}

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias) {
  if (kernels.rank() != 4 || kernels.dim(2) != 3 || kernels.dim(3) != 3) {
    throw std::invalid_argument("conv2d: kernels must be [F x C x 3 x 3], got " +
                                shape_str(kernels.shape()));
  }
  const std::size_t filters = kernels.dim(0);
  const std::size_t channels = kernels.dim(1);
  std::size_t batch = 1;
  std::size_t offset = 0;
  if (x.rank() == 4) {
    batch = x.dim(0);
    offset = 1;
  } else if (x.rank() != 3) {
    throw std::invalid_argument("conv2d: input must be [C x H x W] or [B x C x H x W]");
  }
  if (x.dim(offset) != channels) {
    throw std::invalid_argument("conv2d: input channels " + shape_str(x.shape()) +
                                " vs kernels " + shape_str(kernels.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != filters) {
    throw std::invalid_argument("conv2d: bias must have one entry per filter");
  }
  const std::size_t height = x.dim(offset + 1);
  const std::size_t width = x.dim(offset + 2);
  const std::size_t hw = height * width;
  const std::size_t ck = channels * 9;

  std::vector<double> cols(batch * hw * ck);
  kernels::im2col3x3(x.data(), batch, channels, height, width, cols);
  std::vector<double> pix(batch * hw * filters);
  kernels::gemm_nt(cols, kernels.data(), bias.data(), batch * hw, filters, ck, pix);
  std::vector<double> out(batch * filters * hw);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t f = 0; f < filters; ++f) {
        out[(b * filters + f) * hw + p] = pix[(b * hw + p) * filters + f];
      }
    }
  }
  Shape out_shape = x.rank() == 4 ? Shape{batch, filters, height, width}
                                  : Shape{filters, height, width};
  const bool track = GradTape::tracking({&x, &kernels, &bias});
  Tensor y = make_result(std::move(out_shape), std::move(out), track);
  if (track) {
    GradTape::current()->record([xi = x.handle(), ki = kernels.handle(),
                                 bi = bias.handle(), yi = y.handle(),
                                 cols = std::move(cols), batch, channels, filters,
                                 height, width, hw, ck] {
      if (yi->grad.empty()) return;
      std::vector<double> dpix(batch * hw * filters);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t f = 0; f < filters; ++f) {
          for (std::size_t p = 0; p < hw; ++p) {
            dpix[(b * hw + p) * filters + f] = yi->grad[(b * filters + f) * hw + p];
          }
        }
      }
      if (xi->requires_grad) {
        std::vector<double> dcols(batch * hw * ck, 0.0);
        kernels::gemm_nn_acc(dpix, ki->value, batch * hw, ck, filters, dcols);
        kernels::col2im3x3_acc(dcols, batch, channels, height, width,
                               xi->grad_buffer());
      }
      if (ki->requires_grad) {
        kernels::gemm_tn_acc(dpix, cols, filters, ck, batch * hw, ki->grad_buffer());
      }
      if (bi->requires_grad) bi->accumulate_grad(col_sums(dpix, batch * hw, filters));
    });
  }
  return y;
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Tensor& first = parts.front();
  const std::size_t rows = first.size() / std::max<std::size_t>(last_extent(first), 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  bool track = false;
  for (const Tensor& p : parts) {
    if (p.rank() != first.rank() || p.rank() == 0) {
      throw std::invalid_argument("concat: rank mismatch");
    }
    for (std::size_t d = 0; d + 1 < p.rank(); ++d) {
      if (p.dim(d) != first.dim(d)) throw std::invalid_argument("concat: leading extent mismatch");
    }
    widths.push_back(last_extent(p));
    total += widths.back();
    track = track || GradTape::tracking({&p});
  }
  std::vector<double> out(rows * total);
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < widths[k]; ++c) {
        out[r * total + col + c] = src[r * widths[k] + c];
      }
    }
    col += widths[k];
  }
  Shape shape = first.shape();
  shape.back() = total;
  Tensor y = make_result(std::move(shape), std::move(out), track);
  if (track) {
    std::vector<ImplPtr> handles;
    for (const Tensor& p : parts) handles.push_back(p.handle());
    GradTape::current()->record([handles = std::move(handles), yi = y.handle(),
                                 widths = std::move(widths), rows, total] {
      if (yi->grad.empty()) return;
      std::size_t col = 0;
      for (std::size_t k = 0; k < handles.size(); ++k) {
        if (handles[k]->requires_grad) {
          auto g = handles[k]->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < widths[k]; ++c) {
              g[r * widths[k] + c] += yi->grad[r * total + col + c];
            }
          }
        }
        col += widths[k];
      }
    });
  }
  return y;
}

Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t width = last_extent(x);
  if (x.rank() == 0 || begin > end || end > width) {
    throw std::invalid_argument("slice_last: bad range for " + shape_str(x.shape()));
  }
  const std::size_t rows = x.size() / width;
  const std::size_t w = end - begin;
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = x[r * width + begin + c];
  }
  Shape shape = x.shape();
  shape.back() = w;
  const bool track = GradTape::tracking({&x});
  Tensor y = make_result(std::move(shape), std::move(out), track);
  if (track) {
    GradTape::current()->record([xi = x.handle(), yi = y.handle(), rows, width, begin, w] {
      if (yi->grad.empty()) return;
      auto g = xi->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < w; ++c) g[r * width + begin + c] += yi->grad[r * w + c];
      }
    });
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " -> " +
                                shape_str(shape));
  }
  const bool track = GradTape::tracking({&x});
  Tensor y = make_result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()),
                         track);
  if (track) {
    GradTape::current()->record([xi = x.handle(), yi = y.handle()] {
      if (yi->grad.empty()) return;
      xi->accumulate_grad(yi->grad);
    });
  }
  return y;
}

Tensor log_softmax_rows(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("log_softmax_rows needs a matrix");
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * cols;
    double mx = in[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(in[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = in[c] - lse;
  }
  const bool track = GradTape::tracking({&x});
  Tensor y = make_result(x.shape(), std::move(out), track);
  if (track) {
    GradTape::current()->record([xi = x.handle(), yi = y.handle(), rows, cols] {
      if (yi->grad.empty()) return;
      auto g = xi->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        double gs = 0.0;
        for (std::size_t c = 0; c < cols; ++c) gs += yi->grad[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          g[i] += yi->grad[i] - std::exp(yi->value[i]) * gs;
        }
      }
    });
  }
  return y;
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("softmax_rows needs a matrix");
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * cols;
    double mx = in[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = std::exp(in[c] - mx);
      s += out[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= s;
  }
  const bool track = GradTape::tracking({&x});
  Tensor y = make_result(x.shape(), std::move(out), track);
  if (track) {
    GradTape::current()->record([xi = x.handle(), yi = y.handle(), rows, cols] {
      if (yi->grad.empty()) return;
      auto g = xi->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          dot += yi->grad[r * cols + c] * yi->value[r * cols + c];
        }
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          g[i] += yi->value[i] * (yi->grad[i] - dot);
        }
      }
    });
  }
  return y;
}

Tensor l2_normalize_rows(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("l2_normalize_rows needs a matrix");
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  std::vector<double> out(rows * cols);
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += x[r * cols + c] * x[r * cols + c];
    norms[r] = std::sqrt(s);
    if (!(norms[r] > 1e-12)) {
      throw std::domain_error("l2_normalize_rows: row " + std::to_string(r) +
                              " has (near) zero norm");
    }
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] / norms[r];
  }
  const bool track = GradTape::tracking({&x});
  Tensor y = make_result(x.shape(), std::move(out), track);
  if (track) {
    GradTape::current()->record([xi = x.handle(), yi = y.handle(),
                                 norms = std::move(norms), rows, cols] {
      if (yi->grad.empty()) return;
      auto g = xi->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          dot += yi->grad[r * cols + c] * yi->value[r * cols + c];
        }
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          g[i] += (yi->grad[i] - yi->value[i] * dot) / norms[r];
        }
      }
    });
  }
  return y;
}

Tensor pick(const Tensor& x, std::span<const std::size_t> index) {
  if (x.rank() != 2 || index.size() != x.dim(0)) {
    throw std::invalid_argument("pick: need [rows x cols] and one index per row");
  }
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  std::vector<double> out(rows);
  std::vector<std::size_t> idx(index.begin(), index.end());
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] >= cols) throw std::out_of_range("pick: index out of range");
    out[r] = x[r * cols + idx[r]];
  }
  const bool track = GradTape::tracking({&x});
  Tensor y = make_result(Shape{rows}, std::move(out), track);
  if (track) {
    GradTape::current()->record([xi = x.handle(), yi = y.handle(), idx = std::move(idx), cols] {
      if (yi->grad.empty()) return;
      auto g = xi->grad_buffer();
      for (std::size_t r = 0; r < idx.size(); ++r) g[r * cols + idx[r]] += yi->grad[r];
    });
  }
  return y;
}

Tensor spectral_divide(const Tensor& weight, std::span<const double> u) {
  if (weight.rank() != 2 || u.size() != weight.dim(0)) {
    throw std::invalid_argument("spectral_divide: u must have one entry per row");
  }
  const std::size_t rows = weight.dim(0);
  const std::size_t cols = weight.dim(1);
  std::vector<double> v(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) v[c] += weight[r * cols + c] * u[r];
  }
  double sigma = 0.0;
  for (double e : v) sigma += e * e;
  sigma = std::sqrt(sigma);
  if (sigma < 1e-12) return weight;
  for (double& e : v) e /= sigma;

  std::vector<double> out(weight.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = weight[i] / sigma;
  const bool track = GradTape::tracking({&weight});
  Tensor y = make_result(weight.shape(), std::move(out), track);
  if (track) {
    std::vector<double> uc(u.begin(), u.end());
    GradTape::current()->record([wi = weight.handle(), yi = y.handle(), uc = std::move(uc),
                                 v = std::move(v), sigma, rows, cols] {
      if (yi->grad.empty()) return;
      // d(W/s)/dW with s = ||W^T u||, ds/dW = u v^T.
      double gw = 0.0;
      for (std::size_t i = 0; i < yi->grad.size(); ++i) gw += yi->grad[i] * wi->value[i];
      const double coeff = gw / (sigma * sigma);
      auto g = wi->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          g[i] += yi->grad[i] / sigma - coeff * uc[r] * v[c];
        }
      }
    });
  }
  return y;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const std::size_t cols = parts.front().rank() == 2 ? parts.front().dim(1) : 0;
  std::size_t rows = 0;
  bool track = false;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(1) != cols) {
      throw std::invalid_argument("concat_rows: need matrices with equal column counts");
    }
    rows += p.dim(0);
    track = track || GradTape::tracking({&p});
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Tensor y = make_result({rows, cols}, std::move(out), track);
  if (track) {
    std::vector<ImplPtr> handles;
    for (const Tensor& p : parts) handles.push_back(p.handle());
    GradTape::current()->record([handles = std::move(handles), yi = y.handle()] {
      if (yi->grad.empty()) return;
      std::size_t offset = 0;
      for (const ImplPtr& h : handles) {
        const std::size_t n = h->value.size();
        if (h->requires_grad) {
          auto g = h->grad_buffer();
          for (std::size_t i = 0; i < n; ++i) g[i] += yi->grad[offset + i];
        }
        offset += n;
      }
    });
  }
  return y;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  if (x.rank() != 2) throw std::invalid_argument("gather_rows needs a matrix");
  const std::size_t cols = x.dim(1);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= x.dim(0)) throw std::out_of_range("gather_rows: row out of range");
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[idx[r] * cols + c];
  }
  const bool track = GradTape::tracking({&x});
  Tensor y = make_result({idx.size(), cols}, std::move(out), track);
  if (track) {
    GradTape::current()->record([xi = x.handle(), yi = y.handle(), idx = std::move(idx), cols] {
      if (yi->grad.empty()) return;
      auto g = xi->grad_buffer();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) g[idx[r] * cols + c] += yi->grad[r * cols + c];
      }
    });
  }
  return y;
}

Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

}  // namespace cacl
