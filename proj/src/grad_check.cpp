#include "graphnas/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "graphnas/errors.hpp"

namespace graphnas {

double grad_check(const std::function<Tensor()>& loss, std::span<Tensor> leaves, double eps) {
  if (!(eps > 0.0)) throw ConfigError("grad_check: eps must be positive");
  for (Tensor& leaf : leaves) {
    if (!leaf.requires_grad() || !leaf.is_leaf())
      throw ConfigError("grad_check: inputs must be leaves that require grad");
    leaf.zero_grad();
  }
  loss().backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const Tensor& leaf : leaves) analytic.push_back(leaf.grad());

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto values = leaves[l].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double plus = loss().item();
      values[i] = saved - eps;
      const double minus = loss().item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double err = std::abs(analytic[l][i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
  Tensor leaves[] = {x};
  return grad_check([&] { return f(x); }, leaves, eps);
}

}  // namespace graphnas
