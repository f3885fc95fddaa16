#pragma once

#include <cstdint>
#include <vector>

#include "sni_sight/nn/tensor.hpp"

namespace sni_sight::nn {

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::uint64_t t = 0;
    std::vector<Tensor> m;  // aligned with the parameter list
    std::vector<Tensor> v;
};

AdamState adam_init(const ParamList& params, AdamConfig config = {});

/// One bias-corrected Adam update:
///   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
///   p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
void adam_step(const ParamList& params, const std::vector<const Tensor*>& grads, AdamState& state);

/// Scales grads in place so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping. max_norm <= 0 disables clipping.
double clip_global_norm(const std::vector<Tensor*>& grads, double max_norm);

}  // namespace sni_sight::nn
