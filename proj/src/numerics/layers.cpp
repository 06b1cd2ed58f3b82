#include "cacl/numerics/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace cacl {

void ParameterSet::add(std::string name, const Tensor& t) {
  items_.push_back({std::move(name), t});
}

void ParameterSet::append(const std::string& prefix, const ParameterSet& other) {
  for (const auto& item : other) items_.push_back({prefix + item.name, item.tensor});
}

const Tensor* ParameterSet::find(const std::string& name) const {
  for (const auto& item : items_) {
    if (item.name == name) return &item.tensor;
  }
  return nullptr;
}

std::size_t ParameterSet::numel() const {
  std::size_t n = 0;
  for (const auto& item : items_) n += item.tensor.size();
  return n;
}

void ParameterSet::zero_grad() const {
  for (const auto& item : items_) item.tensor.impl()->grad.clear();
}

double ParameterSet::grad_norm() const {
  double s = 0.0;
  for (const auto& item : items_) {
    for (double g : item.tensor.impl()->grad) s += g * g;
  }
  return std::sqrt(s);
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  for (const auto& item : items_) out.add(item.name, item.tensor.clone());
  return out;
}

void ParameterSet::copy_values_from(const ParameterSet& other) const {
  if (other.size() != size()) throw std::invalid_argument("parameter sets differ in size");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& dst = items_[i];
    const auto& src = other[i];
    if (dst.name != src.name || dst.tensor.shape() != src.tensor.shape()) {
      throw std::invalid_argument("parameter mismatch at " + dst.name);
    }
    dst.tensor.impl()->value = src.tensor.impl()->value;
  }
}

Tensor init_weight(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (double& e : v) e = rng.uniform(-bound, bound);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Dense Dense::create(std::size_t in, std::size_t out, Rng& rng) {
  Dense d;
  d.weight = init_weight({out, in}, in, rng);
  d.bias = Tensor::parameter({out}, std::vector<double>(out, 0.0));
  return d;
}

ParameterSet Dense::parameters() const {
  ParameterSet p;
  p.add("weight", weight);
  p.add("bias", bias);
  return p;
}

Conv3x3 Conv3x3::create(std::size_t in_channels, std::size_t filters, Rng& rng) {
  Conv3x3 c;
  c.kernels = init_weight({filters, in_channels, 3, 3}, in_channels * 9, rng);
  c.bias = Tensor::parameter({filters}, std::vector<double>(filters, 0.0));
  return c;
}

ParameterSet Conv3x3::parameters() const {
  ParameterSet p;
  p.add("kernels", kernels);
  p.add("bias", bias);
  return p;
}

Gru Gru::create(std::size_t in, std::size_t hidden, Rng& rng) {
  Gru g;
  g.w_ih = init_weight({3 * hidden, in}, in, rng);
  g.w_hh = init_weight({3 * hidden, hidden}, hidden, rng);
  g.b_ih = Tensor::parameter({3 * hidden}, std::vector<double>(3 * hidden, 0.0));
  g.b_hh = Tensor::parameter({3 * hidden}, std::vector<double>(3 * hidden, 0.0));
  return g;
}

ParameterSet Gru::parameters() const {
  ParameterSet p;
  p.add("w_ih", w_ih);
  p.add("w_hh", w_hh);
  p.add("b_ih", b_ih);
  p.add("b_hh", b_hh);
  return p;
}

Tensor gru_step(const Tensor& x, const Tensor& h, const Gru& params) {
  const std::size_t hid = params.hidden_dim();
  if (h.shape().back() != hid || x.shape().back() != params.in_dim() ||
      x.rank() != h.rank() || (x.rank() == 2 && x.dim(0) != h.dim(0))) {
    throw std::invalid_argument("gru_step: x " + shape_str(x.shape()) + ", h " +
                                shape_str(h.shape()) + " do not fit the cell");
  }
  const Tensor gi = linear(x, params.w_ih, params.b_ih);
  const Tensor gh = linear(h, params.w_hh, params.b_hh);
  const Tensor r = sigmoid(add(slice_last(gi, 0, hid), slice_last(gh, 0, hid)));
  const Tensor z = sigmoid(add(slice_last(gi, hid, 2 * hid), slice_last(gh, hid, 2 * hid)));
  const Tensor n = tanh(add(slice_last(gi, 2 * hid, 3 * hid),
                            mul(r, slice_last(gh, 2 * hid, 3 * hid))));
  // (1 - z) * n + z * h  ==  n + z * (h - n)
  return add(n, mul(z, sub(h, n)));
}

SpectralState SpectralState::create(std::size_t rows, Rng& rng) {
  std::vector<double> u(rows);
  double s = 0.0;
  for (double& e : u) {
    e = rng.uniform(-1.0, 1.0);
    s += e * e;
  }
  s = std::sqrt(s);
  for (double& e : u) e /= s;
  return SpectralState{Tensor({rows}, std::move(u))};
}

double power_iterate(const Tensor& weight, SpectralState& state, int iters) {
  if (weight.rank() != 2 || state.u.size() != weight.dim(0)) {
    throw std::invalid_argument("power_iterate: state does not match weight");
  }
  const std::size_t rows = weight.dim(0);
  const std::size_t cols = weight.dim(1);
  const auto w = weight.data();
  auto u = state.u.mutable_data();
  std::vector<double> v(cols);
  auto normalize = [](std::span<double> x) {
    double s = 0.0;
    for (double e : x) s += e * e;
    s = std::sqrt(s);
    if (s < 1e-12) return false;
    for (double& e : x) e /= s;
    return true;
  };
  for (int it = 0; it < iters; ++it) {
    std::fill(v.begin(), v.end(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) v[c] += w[r * cols + c] * u[r];
    }
    if (!normalize(v)) break;
    std::vector<double> nu(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) nu[r] += w[r * cols + c] * v[c];
    }
    if (!normalize(nu)) break;
    std::copy(nu.begin(), nu.end(), u.begin());
  }
  std::fill(v.begin(), v.end(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) v[c] += w[r * cols + c] * u[r];
  }
  double sigma = 0.0;
  for (double e : v) sigma += e * e;
  return std::sqrt(sigma);
}

Tensor spectral_normalize(const Tensor& weight, SpectralState& state, int iters) {
  if (iters < 1) throw std::invalid_argument("spectral_normalize: iters must be >= 1");
  power_iterate(weight, state, iters);
  return spectral_divide(weight, state.u.data());
}

SpectralDense SpectralDense::create(std::size_t in, std::size_t out, Rng& rng) {
  SpectralDense s;
  s.dense = Dense::create(in, out, rng);
  s.state = SpectralState::create(out, rng);
  return s;
}

}  // namespace cacl
