#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rvseg/gradcheck.hpp"
#include "rvseg/losses.hpp"
#include "testutil.hpp"

using namespace rvseg;
using testutil::random_tensor;

TEST_CASE("l1 loss values") {
  auto x = Tensor<double>::from_data({4}, {1, 2, 3, 4}, false);
  CHECK(l1_loss(x, x, 1.0).item() == 0.0);

  auto ones = Tensor<double>::full({7}, 1.0);
  auto zeros = Tensor<double>::zeros({7});
  CHECK(l1_loss(ones, zeros, 5e-6).item() == doctest::Approx(5e-6).epsilon(1e-12));

  auto a = Tensor<double>::from_data({2}, {1.0, -2.0});
  auto b = Tensor<double>::zeros({2});
  CHECK(l1_loss(a, b, 1.0).item() == doctest::Approx(1.5));

  CHECK_THROWS_AS(l1_loss(a, zeros, 1.0), TensorError);
  CHECK_THROWS_AS(l1_loss(a, b, -1.0), TensorError);
}

TEST_CASE("mse loss values and gradient") {
  auto x = Tensor<double>::from_data({2}, {1.0, 3.0}, true);
  auto y = Tensor<double>::from_data({2}, {0.0, 1.0}, false);
  CHECK(mse_loss(x, y).item() == doctest::Approx(2.5));
  CHECK(mse_loss(y, y).item() == 0.0);

  backward(mse_loss(x, y));
  // analytic gradient 2(x-y)/n
  CHECK(x.grad()[0] == doctest::Approx(1.0));
  CHECK(x.grad()[1] == doctest::Approx(2.0));

  Rng rng(3);
  auto xr = random_tensor<double>({12}, rng);
  auto yr = random_tensor<double>({12}, rng);
  CHECK(gradcheck([&] { return mse_loss(xr, yr); }, {xr, yr}).max_rel_error < 1e-6);
}

TEST_CASE("discriminator gan loss values") {
  auto half = Tensor<double>::full({4}, 0.5);
  const double v = gan_loss_discriminator(half, half).item();
  CHECK(std::abs(v - 2.0 * std::log(2.0)) < 1e-12);

  auto one = Tensor<double>::full({4}, 1.0);
  auto zero = Tensor<double>::zeros({4});
  CHECK(gan_loss_discriminator(one, zero).item() == doctest::Approx(0.0));

  // permutation invariance over the batch
  auto a = Tensor<double>::from_data({3}, {0.2, 0.5, 0.9});
  auto b = Tensor<double>::from_data({3}, {0.9, 0.2, 0.5});
  auto f = Tensor<double>::from_data({3}, {0.4, 0.1, 0.6});
  auto fp = Tensor<double>::from_data({3}, {0.1, 0.6, 0.4});
  CHECK(gan_loss_discriminator(a, f).item() ==
        doctest::Approx(gan_loss_discriminator(b, fp).item()).epsilon(1e-12));

  auto bad = Tensor<double>::from_data({2}, {0.5, 1.2});
  CHECK_THROWS_AS(gan_loss_discriminator(bad, half), TensorError);
  CHECK_THROWS_AS(gan_loss_discriminator(half, bad), TensorError);
}

TEST_CASE("generator gan loss values") {
  auto half = Tensor<double>::full({4}, 0.5);
  CHECK(gan_loss_generator(half).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  auto one = Tensor<double>::full({4}, 1.0);
  CHECK(gan_loss_generator(one).item() == doctest::Approx(0.0));

  // monotone decreasing in each component
  auto lo = Tensor<double>::from_data({2}, {0.3, 0.5});
  auto hi = Tensor<double>::from_data({2}, {0.4, 0.5});
  CHECK(gan_loss_generator(hi).item() < gan_loss_generator(lo).item());

  // literal form decreases towards -inf as the generator wins
  auto win = Tensor<double>::full({2}, 0.9);
  CHECK(gan_loss_generator(win, true) .item() < gan_loss_generator(lo, true).item());
}

TEST_CASE("total loss combines with coefficients (1, lambda, 1)") {
  LossConfig cfg;
  cfg.lambda = 5e-3;
  cfg.beta = 5e-6;
  auto mse = Tensor<double>::full({1}, 1.0);
  auto gan = Tensor<double>::full({1}, 2.0);
  auto l1 = Tensor<double>::full({1}, 0.5);
  CHECK(total_loss(mse, gan, l1, cfg).item() == doctest::Approx(1.51).epsilon(1e-12));

  LossConfig off;
  off.lambda = 0.0;
  off.beta = 0.0;
  off.use_gan = false;
  off.use_l1 = false;
  CHECK(total_loss(mse, gan, l1, off).item() == doctest::Approx(1.0));

  // linearity over random triples
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const double m = rng.uniform(0, 3), g = rng.uniform(0, 3), l = rng.uniform(0, 3);
    auto tm = Tensor<double>::full({1}, m);
    auto tg = Tensor<double>::full({1}, g);
    auto tl = Tensor<double>::full({1}, l);
    CHECK(total_loss(tm, tg, tl, cfg).item() ==
          doctest::Approx(m + cfg.lambda * g + l).epsilon(1e-12));
  }
}

TEST_CASE("total loss gradient is the sum of component gradients") {
  Rng rng(7);
  auto x = random_tensor<double>({8}, rng, 0.05, 0.95);
  auto y = random_tensor<double>({8}, rng, 0.05, 0.95);
  auto d_fake = random_tensor<double>({4}, rng, 0.1, 0.9);
  LossConfig cfg;
  auto loss = [&] {
    return total_loss(mse_loss(x, y), gan_loss_generator(d_fake),
                      l1_loss(x, y, static_cast<double>(cfg.beta)), cfg);
  };
  CHECK(gradcheck(loss, {x, y, d_fake}).max_rel_error < 1e-4);
}

TEST_CASE("losses are non-negative and vanish only at equality") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_tensor<double>({16}, rng, -2, 2, false);
    auto y = random_tensor<double>({16}, rng, -2, 2, false);
    CHECK(l1_loss(x, y, 5e-6).item() >= 0.0);
    CHECK(mse_loss(x, y).item() >= 0.0);
    CHECK(mse_loss(x, y).item() > 0.0);
    auto dr = random_tensor<double>({8}, rng, 0.05, 0.95, false);
    auto df = random_tensor<double>({8}, rng, 0.05, 0.95, false);
    CHECK(gan_loss_discriminator(dr, df).item() >= 0.0);
    CHECK(gan_loss_generator(df).item() >= 0.0);
  }
}
