#ifndef CACL_NUMERICS_ADAM_HPP_
#define CACL_NUMERICS_ADAM_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "cacl/numerics/layers.hpp"

namespace cacl {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-3;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

// Bias-corrected Adam update in place:
//   p -= lr * m_hat / (sqrt(v_hat) + eps)
void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state,
               const AdamConfig& config);

// Adam over a whole ParameterSet; parameters without a gradient are treated
// as having a zero gradient (their moments still decay).
class Adam {
 public:
  Adam(ParameterSet params, AdamConfig config);

  void step();
  const AdamConfig& config() const { return config_; }
  const std::vector<AdamState>& states() const { return states_; }

 private:
  ParameterSet params_;
  AdamConfig config_;
  std::vector<AdamState> states_;
};

}  // namespace cacl

#endif  // CACL_NUMERICS_ADAM_HPP_
