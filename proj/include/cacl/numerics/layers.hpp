#ifndef CACL_NUMERICS_LAYERS_HPP_
#define CACL_NUMERICS_LAYERS_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "cacl/numerics/ops.hpp"
#include "cacl/numerics/rng.hpp"
#include "cacl/numerics/tensor.hpp"

namespace cacl {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Ordered, named view over a model's tensors. Entries alias the layer
// storage, so updates through the set are visible to the layers.
class ParameterSet {
 public:
  void add(std::string name, const Tensor& t);
  void append(const std::string& prefix, const ParameterSet& other);

  std::size_t size() const { return items_.size(); }
  const NamedTensor& operator[](std::size_t i) const { return items_[i]; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  const Tensor* find(const std::string& name) const;

  std::size_t numel() const;
  void zero_grad() const;
  // Global L2 norm over every gradient in the set.
  double grad_norm() const;
  // Deep copy of all values (tensors detached from the originals).
  ParameterSet clone() const;
  // Copy values from `other`; names and shapes must match.
  void copy_values_from(const ParameterSet& other) const;

 private:
  std::vector<NamedTensor> items_;
};

// Uniform in +-sqrt(1 / fan_in).
Tensor init_weight(Shape shape, std::size_t fan_in, Rng& rng);

struct Dense {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]

  static Dense create(std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  std::size_t in_dim() const { return weight.dim(1); }
  std::size_t out_dim() const { return weight.dim(0); }
  ParameterSet parameters() const;
};

struct Conv3x3 {
  Tensor kernels;  // [F x C x 3 x 3]
  Tensor bias;     // [F]

  static Conv3x3 create(std::size_t in_channels, std::size_t filters, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv2d(x, kernels, bias); }
  ParameterSet parameters() const;
};

// Gate layout follows the usual (reset, update, candidate) stacking:
// rows [0,h) reset, [h,2h) update, [2h,3h) candidate.
struct Gru {
  Tensor w_ih;  // [3h x in]
  Tensor w_hh;  // [3h x h]
  Tensor b_ih;  // [3h]
  Tensor b_hh;  // [3h]

  static Gru create(std::size_t in, std::size_t hidden, Rng& rng);
  std::size_t hidden_dim() const { return w_hh.dim(1); }
  std::size_t in_dim() const { return w_ih.dim(1); }
  ParameterSet parameters() const;
};

// h' = (1 - z) * n + z * h with
//   r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
//   z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
//   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
Tensor gru_step(const Tensor& x, const Tensor& h, const Gru& params);

struct SpectralState {
  Tensor u;  // [rows], unit-norm left singular vector estimate; never tracked

  static SpectralState create(std::size_t rows, Rng& rng);
};

// One or more rounds of power iteration; leaves state.u unit norm. Returns
// the singular value estimate ||W^T u|| after the update.
double power_iterate(const Tensor& weight, SpectralState& state, int iters);

// Updates state.u by `iters` power-iteration rounds, then returns W / sigma.
Tensor spectral_normalize(const Tensor& weight, SpectralState& state, int iters);

// Dense layer whose forward pass uses the spectrally normalized weight with
// the persisted u (power iteration is driven separately, see
// power_iterate()).
struct SpectralDense {
  Dense dense;
  SpectralState state;

  static SpectralDense create(std::size_t in, std::size_t out, Rng& rng);
  Tensor effective_weight() const { return spectral_divide(dense.weight, state.u.data()); }
  Tensor operator()(const Tensor& x) const {
    return linear(x, effective_weight(), dense.bias);
  }
  double update(int iters) { return power_iterate(dense.weight, state, iters); }
  ParameterSet parameters() const { return dense.parameters(); }
};

}  // namespace cacl

#endif  // CACL_NUMERICS_LAYERS_HPP_
