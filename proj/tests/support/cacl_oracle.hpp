#ifndef CACL_TESTS_CACL_ORACLE_HPP_
#define CACL_TESTS_CACL_ORACLE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "cacl/comm_losses/comm_losses.hpp"
#include "cacl/numerics/ops.hpp"

namespace cacl::testing {

// The contrastive objective transcribed literally: for each anchor, the mean
// over its positives of -log(exp(m.h/eta) / sum_k exp(m.k/eta)).
inline double cacl_reference(const std::vector<std::vector<double>>& m,
                             const std::vector<comm::MessageKey>& keys,
                             const std::vector<bool>& active, int window, double eta) {
  const int w = window / 2;
  auto dot = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t d = 0; d < m[a].size(); ++d) s += m[a][d] * m[b][d];
    return s;
  };
  double loss = 0.0;
  for (std::size_t a = 0; a < m.size(); ++a) {
    if (!active[a]) continue;
    std::vector<std::size_t> positives;
    for (std::size_t h = 0; h < m.size(); ++h) {
      if (h != a && active[h] && keys[h].trajectory == keys[a].trajectory &&
          std::abs(keys[h].timestep - keys[a].timestep) <= w) {
        positives.push_back(h);
      }
    }
    if (positives.empty()) continue;
    double term = 0.0;
    for (std::size_t h : positives) {
      double denom = 0.0;
      for (std::size_t k = 0; k < m.size(); ++k) {
        if (k != a && active[k]) denom += std::exp(dot(a, k) / eta);
      }
      term += std::log(std::exp(dot(a, h) / eta) / denom);
    }
    loss += -term / static_cast<double>(positives.size());
  }
  return loss;
}

struct RandomMessages {
  std::vector<std::vector<double>> unit;
  std::vector<comm::MessageKey> keys;
  std::vector<bool> active;
  Tensor tensor() const {
    std::vector<double> flat;
    for (const auto& r : unit) flat.insert(flat.end(), r.begin(), r.end());
    return Tensor({unit.size(), unit.front().size()}, flat);
  }
};

// Unit messages with positive (sigmoid-like) coordinates.
inline RandomMessages random_messages(Rng& rng, std::size_t trajectories, int steps, int agents,
                                      double inactive_fraction = 0.0) {
  RandomMessages r;
  for (std::size_t tau = 0; tau < trajectories; ++tau) {
    for (int t = 0; t < steps; ++t) {
      for (int i = 0; i < agents; ++i) {
        std::vector<double> v(4);
        double n = 0.0;
        for (double& e : v) {
          e = rng.uniform(0.01, 0.99);
          n += e * e;
        }
        for (double& e : v) e /= std::sqrt(n);
        r.unit.push_back(v);
        r.keys.push_back({tau, t, i});
        r.active.push_back(rng.uniform() >= inactive_fraction);
      }
    }
  }
  return r;
}

}  // namespace cacl::testing

#endif  // CACL_TESTS_CACL_ORACLE_HPP_
