#pragma once

#include <functional>

#include "sni_sight/nn/tensor.hpp"

namespace sni_sight::nn {

/// Central finite differences of a scalar function with respect to every
/// entry of param (perturbed in place and restored).
Tensor numeric_gradient(const std::function<double()>& loss, Tensor& param, double step = 1e-5);

/// ||a - b|| / max(||a||, ||b||), or 0 when both are zero.
double relative_error(const Tensor& analytic, const Tensor& numeric);

}  // namespace sni_sight::nn
