#pragma once

#include "sni_sight/nn/tensor.hpp"
#include "sni_sight/rng.hpp"

namespace sni_sight::nn {

enum class Activation { Identity, Relu };

struct DenseParams {
    Tensor W;  // out x in
    Tensor b;  // out

    [[nodiscard]] std::size_t in() const { return W.cols(); }
    [[nodiscard]] std::size_t out() const { return W.rows(); }
};

/// uniform(-k, k), k = 1/sqrt(fan_in), for weights and biases.
DenseParams init_dense(std::size_t in, std::size_t out, Rng& rng);

struct DenseCache {
    Tensor input;           // B x in
    Tensor preactivation;   // B x out
    Activation activation = Activation::Identity;
};

/// y = act(x W^T + b) for a batch x of shape B x in.
Tensor dense_forward(const DenseParams& p, const Tensor& x, Activation act, DenseCache* cache = nullptr);

struct DenseGrads {
    Tensor dW;
    Tensor db;
    Tensor dx;
};

DenseGrads dense_backward(const DenseParams& p, const DenseCache& cache, const Tensor& dy);

/// Inverted dropout: in training each entry is zeroed with probability rate
/// and survivors are scaled by 1/(1-rate); in inference it is the identity.
/// mask (optional) receives the multiplier applied to each entry.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training, Tensor* mask = nullptr);

struct LossResult {
    double loss = 0.0;
    Tensor grad;  // d loss / d logits
};

/// Mean over all entries of max(z,0) - z*y + log(1 + exp(-|z|)); gradient
/// (sigmoid(z) - y) / N where N is the number of entries.
LossResult sigmoid_ce_loss(const Tensor& logits, const Tensor& targets);

double sigmoid(double z);

}  // namespace sni_sight::nn
