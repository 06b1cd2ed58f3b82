#ifndef CACL_TESTS_GRADCHECK_HPP_
#define CACL_TESTS_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cacl/numerics/rng.hpp"
#include "cacl/numerics/tensor.hpp"

namespace cacl::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool parameter = true) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return parameter ? Tensor::parameter(std::move(shape), std::move(v))
                   : Tensor(std::move(shape), std::move(v));
}

struct GradCheckResult {
  double worst_relative = 0.0;
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::string first_failure;
  // Diagnostics: elements with a nonzero analytic gradient, and the worst
  // relative error among elements whose gradient magnitude is >= 1e-6.
  std::size_t nonzero = 0;
  double worst_relative_significant = 0.0;
};

// Central differences (step h) against the tape gradient for every element
// of `inputs`. An element passes if |a - n| <= rel * max(|a|, |n|) or
// |a - n| <= abs_floor (both near zero).
inline GradCheckResult gradcheck(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                                 double h = 1e-5, double rel = 1e-4, double abs_floor = 1e-8) {
  std::vector<std::vector<double>> analytic;
  {
    for (const Tensor& t : inputs) t.impl()->grad.clear();
    GradTape tape;
    const Tensor loss = f();
    tape.backward(loss);
    for (const Tensor& t : inputs) analytic.push_back(t.grad());
  }
  GradCheckResult r;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    Tensor t = inputs[p];
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f().item();
      values[i] = saved - h;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p][i];
      const double diff = std::abs(a - numeric);
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double relative = scale > 0.0 ? diff / scale : 0.0;
      ++r.checked;
      if (diff > abs_floor) r.worst_relative = std::max(r.worst_relative, relative);
      if (a != 0.0) ++r.nonzero;
      if (scale >= 1e-6) r.worst_relative_significant = std::max(r.worst_relative_significant, relative);
      if (diff > abs_floor && diff > rel * scale) {
        if (r.failures++ == 0) {
          r.first_failure = "input " + std::to_string(p) + " element " + std::to_string(i) +
                            ": analytic " + std::to_string(a) + " numeric " +
                            std::to_string(numeric);
        }
      }
    }
  }
  return r;
}

}  // namespace cacl::testing

#endif  // CACL_TESTS_GRADCHECK_HPP_
