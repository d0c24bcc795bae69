#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rvseg/ops.hpp"
#include "testutil.hpp"

using namespace rvseg;

TEST_CASE("tensor construction and invariants") {
  auto t = Tensor<float>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.shape() == Shape{2, 3});
  CHECK_THROWS_AS(Tensor<float>::from_data({2, 2}, {1, 2, 3}), TensorError);

  auto g = Tensor<float>::zeros({4}, true);
  CHECK(g.requires_grad());
  CHECK(g.grad().size() == 4);
}

TEST_CASE("backward of sum gives all-ones gradient") {
  auto x = Tensor<double>::from_data({4}, {1, 2, 3, 4}, true);
  backward(sum(x));
  for (double v : x.grad()) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("backward of sum(x*x) gives 2x") {
  auto x = Tensor<double>::from_data({3}, {1.0, -2.0, 0.5}, true);
  backward(sum(hadamard(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(-4.0));
  CHECK(x.grad()[2] == doctest::Approx(1.0));
}

TEST_CASE("gradient accumulates across paths: x + x") {
  auto x = Tensor<double>::from_data({2}, {3.0, 4.0}, true);
  backward(sum(add(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(2.0));
}

TEST_CASE("backward rejects non-scalar roots") {
  auto x = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(backward(add(x, x)), TensorError);
}

TEST_CASE("tape is topologically ordered") {
  auto x = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
  auto y = hadamard(x, x);
  auto z = sum(add(y, x));
  auto tape = Tape<double>::record(z);
  // every node must appear after all of its recorded parents
  for (std::size_t i = 0; i < tape.order.size(); ++i) {
    for (const auto& parent : tape.order[i]->parents) {
      if (!parent->requires_grad) continue;
      bool seen = false;
      for (std::size_t j = 0; j < i; ++j)
        if (tape.order[j] == parent.get()) seen = true;
      CHECK(seen);
    }
  }
  CHECK(tape.order.back() == z.node().get());
}

TEST_CASE("repeated backward without zeroing sums gradients") {
  auto x = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
  auto loss = sum(hadamard(x, x));
  backward(loss);
  const double g0 = x.grad()[0];
  auto loss2 = sum(hadamard(x, x));
  backward(loss2);
  CHECK(x.grad()[0] == doctest::Approx(2.0 * g0));
}

TEST_CASE("same seed reproduces identical draws") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  Rng c(42), d(43);
  CHECK(c.next_u64() != d.next_u64());
}

TEST_CASE("rng normal moments are sane") {
  Rng rng(7);
  double acc = 0, acc2 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    acc += v;
    acc2 += v * v;
  }
  CHECK(std::abs(acc / n) < 0.02);
  CHECK(std::abs(acc2 / n - 1.0) < 0.02);
}
