#pragma once

#include <functional>

#include "rvseg/tensor.hpp"

namespace rvseg {

// Central finite differences against the analytic gradients, in 64-bit.
// The comparison re-runs the supplied forward closure with perturbed leaf
// entries, so it stays independent of the backward implementation it checks.
struct GradCheckOptions {
  double step = 1e-5;
  double denom_floor = 1e-4;  // relative-error denominator floor near zero
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_entry;  // "<leaf index>[<flat index>]"
};

inline GradCheckReport gradcheck(
    const std::function<Tensor<double>()>& make_loss,
    const std::vector<Tensor<double>>& leaves, GradCheckOptions opts = {}) {
  for (const auto& leaf : leaves)
    if (!leaf.requires_grad())
      throw TensorError("gradcheck: every leaf must require grad");

  // analytic pass
  for (auto leaf : leaves) leaf.zero_grad();
  Tensor<double> loss = make_loss();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves)
    analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());

  GradCheckReport report;
  const double h = opts.step;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor<double> leaf = leaves[li];
    auto vals = leaf.value_mut();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double fp = make_loss().item();
      vals[i] = orig - h;
      const double fm = make_loss().item();
      vals[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double a = analytic[li][i];
      const double denom = std::max({std::abs(a), std::abs(fd), opts.denom_floor});
      const double rel = std::abs(a - fd) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_entry =
            "leaf" + std::to_string(li) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace rvseg
