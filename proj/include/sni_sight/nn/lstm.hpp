#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sni_sight/nn/tensor.hpp"
#include "sni_sight/rng.hpp"

namespace sni_sight::nn {

/// Single-layer LSTM. Gate rows are stacked in the order
/// input (i), forget (f), cell candidate (g), output (o):
///   z = W x + U h + b,  i,f,o = sigmoid(z_i,z_f,z_o),  g = tanh(z_g)
///   c' = f*c + i*g,     h' = o*tanh(c')
struct LstmParams {
    Tensor W;  // 4H x V
    Tensor U;  // 4H x H
    Tensor b;  // 4H

    [[nodiscard]] std::size_t hidden() const { return U.cols(); }
    [[nodiscard]] std::size_t input() const { return W.cols(); }
    void validate() const;
};

/// uniform(-k, k) with k = 1/sqrt(H); forget-gate biases start at forget_bias.
LstmParams init_lstm(std::size_t input, std::size_t hidden, Rng& rng, double forget_bias = 1.0);

struct LstmState {
    Eigen::VectorXd h;
    Eigen::VectorXd c;

    static LstmState zeros(std::size_t hidden);
};

/// Everything the backward pass needs from one forward invocation.
struct LstmCache {
    std::size_t steps = 0;
    std::size_t hidden = 0;
    std::vector<std::uint32_t> indices;  // one-hot input as positions, or
    Tensor dense_input;                  // T x V dense input
    RowMatrix gates;                     // T x 4H, post-activation (i, f, g, o)
    RowMatrix cells;                     // (T+1) x H, row 0 = initial c
    RowMatrix hiddens;                   // (T+1) x H, row 0 = initial h
    RowMatrix cell_tanh;                 // T x H

    [[nodiscard]] bool one_hot() const { return dense_input.size() == 0; }
};

struct LstmOutput {
    Tensor outputs;  // T x H
    LstmState final_state;
    LstmCache cache;
};

LstmOutput lstm_forward(const LstmParams& params, const Tensor& inputs, const LstmState* initial = nullptr);
/// One-hot input given as vocabulary positions; equivalent to a T x V
/// one-hot matrix without materialising it.
LstmOutput lstm_forward(const LstmParams& params, std::span<const std::uint32_t> indices,
                        const LstmState* initial = nullptr);

struct LstmGrads {
    Tensor dW;
    Tensor dU;
    Tensor db;
    Tensor d_inputs;  // T x V, dense inputs only
    LstmState d_initial;
};

/// Backpropagation through time. d_outputs is T x H; d_final (optional)
/// carries gradients flowing into the final (h, c).
LstmGrads lstm_backward(const LstmParams& params, const LstmCache& cache, const Tensor& d_outputs,
                        const LstmState* d_final = nullptr);

/// Final hidden state for a batch of equal-length one-hot sequences, zero
/// initial state. Returns B x H. Used for inference over many windows.
Tensor lstm_last_hidden_batch(const LstmParams& params, std::span<const std::vector<std::uint32_t>> sequences);

}  // namespace sni_sight::nn
