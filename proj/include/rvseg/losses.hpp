#pragma once

#include "rvseg/ops.hpp"

namespace rvseg {

struct LossConfig {
  double beta = 5e-6;    // L1 weight, applied inside l1_loss
  double lambda = 5e-3;  // adversarial weight in the total loss
  bool use_l1 = true;
  bool use_gan = true;
  bool literal_generator_loss = false;  // minimize log(1-D(G)) instead of -log D(G)

  void validate() const {
    if (beta < 0.0 || lambda < 0.0)
      throw TensorError("loss config: beta and lambda must be non-negative");
  }
};

inline constexpr double kLogClampEps = 1e-12;

namespace detail {
template <typename T>
void require_probabilities(const Tensor<T>& t, const char* what) {
  for (T v : t.value())
    if (!(v >= T(0) && v <= T(1)))
      throw TensorError(std::string(what) + " outside [0,1]: " + std::to_string(v));
}
}  // namespace detail

// (beta / n) * sum_i |x_i - y_i|
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& x, const Tensor<T>& y, T beta) {
  if (beta < T(0)) throw TensorError("l1_loss: beta must be non-negative");
  return scale(mean(abs(sub(x, y))), beta);
}

// (1 / n) * sum_i (x_i - y_i)^2
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& x, const Tensor<T>& y) {
  return mean(square(sub(x, y)));
}

// Negated discriminator objective for minimization:
//   -mean(log D(real)) - mean(log(1 - D(fake)))
template <typename T>
Tensor<T> gan_loss_discriminator(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  detail::require_probabilities(d_real, "gan_loss_discriminator d_real");
  detail::require_probabilities(d_fake, "gan_loss_discriminator d_fake");
  const T eps = static_cast<T>(kLogClampEps);
  auto real_term = mean(log(clamp_min(d_real, eps)));
  auto fake_term = mean(log(clamp_min(one_minus(d_fake), eps)));
  return scale(add(real_term, fake_term), T(-1));
}

// Non-saturating generator objective -mean(log D(fake)); the literal
// mean(log(1 - D(fake))) form is available behind the flag.
template <typename T>
Tensor<T> gan_loss_generator(const Tensor<T>& d_fake, bool literal = false) {
  detail::require_probabilities(d_fake, "gan_loss_generator d_fake");
  const T eps = static_cast<T>(kLogClampEps);
  if (literal) return mean(log(clamp_min(one_minus(d_fake), eps)));
  return scale(mean(log(clamp_min(d_fake, eps))), T(-1));
}

// L_MSE + lambda * L_GAN(generator side) + L_L1, with terms dropped by config.
// beta is already inside l1.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& mse, const Tensor<T>& gan_g, const Tensor<T>& l1,
                     const LossConfig& cfg) {
  cfg.validate();
  Tensor<T> out = mse;
  if (cfg.use_gan) out = add(out, scale(gan_g, static_cast<T>(cfg.lambda)));
  if (cfg.use_l1) out = add(out, l1);
  return out;
}

}  // namespace rvseg
