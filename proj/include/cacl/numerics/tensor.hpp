#ifndef CACL_NUMERICS_TENSOR_HPP_
#define CACL_NUMERICS_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cacl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Storage behind a Tensor handle. `grad` stays empty until a gradient
// actually reaches the node.
struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;

  void accumulate_grad(std::span<const double> g);
  std::span<double> grad_buffer();
};

// Dense row-major double tensor. Copies share storage (handle semantics,
// like other autodiff libraries); use clone() for a deep copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);
  // Leaf that receives gradients when used under a GradTape.
  static Tensor parameter(Shape shape, std::vector<double> values);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t size() const { return impl_->value.size(); }

  std::span<const double> data() const { return impl_->value; }
  std::span<double> mutable_data() { return impl_->value; }
  double operator[](std::size_t i) const { return impl_->value[i]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  // Zeros when no gradient has arrived.
  std::vector<double> grad() const;
  void zero_grad() { impl_->grad.clear(); }

  // Same values, no graph participation.
  Tensor detach() const;
  Tensor clone() const;

  const std::shared_ptr<TensorImpl>& handle() const { return impl_; }
  TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_result(Shape shape, std::vector<double> values,
                            bool requires_grad);
  std::shared_ptr<TensorImpl> impl_;
};

Tensor make_result(Shape shape, std::vector<double> values, bool requires_grad);

// Records differentiable operations executed on the current thread while it
// is alive. Tapes nest; the innermost one is active.
class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  static GradTape* current();
  // True when an op on these inputs must be recorded.
  static bool tracking(std::initializer_list<const Tensor*> inputs);

  void record(std::function<void()> backward_fn);

  // Seeds d(loss)/d(loss) = 1 and replays the recorded ops in reverse.
  // Gradients accumulate into every tracked leaf reached.
  void backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }

 private:
  std::vector<std::function<void()>> records_;
  GradTape* previous_;
  bool consumed_ = false;
};

}  // namespace cacl

#endif  // CACL_NUMERICS_TENSOR_HPP_
