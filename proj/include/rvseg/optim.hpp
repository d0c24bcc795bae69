#pragma once

#include "rvseg/nets.hpp"

namespace rvseg {

// Adaptive-moment optimizer with bias correction. Gradients are read from the
// parameter cells, so two optimizers stepping a shared parameter both see and
// update the common storage.
template <typename T>
class Adam {
 public:
  struct Slot {
    Parameter<T>* param;
    std::vector<T> m, v;
  };

  explicit Adam(std::vector<Parameter<T>*> params, T lr = T(2e-4), T beta1 = T(0.5),
                T beta2 = T(0.999), T eps = T(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr > T(0))) throw TensorError("adam: learning rate must be positive");
    slots_.reserve(params.size());
    for (Parameter<T>* p : params) {
      Slot s;
      s.param = p;
      s.m.assign(static_cast<std::size_t>(p->tensor.numel()), T(0));
      s.v.assign(static_cast<std::size_t>(p->tensor.numel()), T(0));
      slots_.push_back(std::move(s));
    }
  }

  void step() {
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    for (Slot& s : slots_) {
      auto vals = s.param->tensor.value_mut();
      auto grads = s.param->tensor.grad_mut();
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const T g = grads[i];
        if (!std::isfinite(static_cast<double>(g)))
          throw TensorError("non-finite gradient in parameter " + s.param->name);
        s.m[i] = beta1_ * s.m[i] + (T(1) - beta1_) * g;
        s.v[i] = beta2_ * s.v[i] + (T(1) - beta2_) * g * g;
        const T mhat = s.m[i] / bc1;
        const T vhat = s.v[i] / bc2;
        vals[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  void zero_grad() {
    for (Slot& s : slots_) s.param->tensor.zero_grad();
  }

  std::vector<Slot>& slots() { return slots_; }
  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }
  T learning_rate() const { return lr_; }

 private:
  std::vector<Slot> slots_;
  T lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

}  // namespace rvseg
