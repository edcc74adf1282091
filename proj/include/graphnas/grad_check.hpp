#pragma once

#include <functional>
#include <span>

#include "graphnas/tensor.hpp"

namespace graphnas {

/// Compares analytic gradients against central finite differences.
///
/// `loss` must rebuild its graph from the current leaf values on every call.
/// Returns the maximum over all coordinates of |analytic - numeric| /
/// max(1, |numeric|). Leaf values are restored on return; leaf gradients are
/// left holding the analytic gradient.
double grad_check(const std::function<Tensor()>& loss, std::span<Tensor> leaves,
                  double eps = 1e-4);

/// Single-input form: `f` maps `x` (a leaf requiring grad) to a scalar.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps = 1e-4);

}  // namespace graphnas
