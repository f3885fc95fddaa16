#include "sni_sight/nn/lstm.hpp"

#include <cmath>

#include "sni_sight/error.hpp"

namespace sni_sight::nn {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require_index(std::uint32_t idx, std::size_t vocab) {
    if (idx >= vocab) {
        throw Error(ErrorCode::ShapeMismatch,
                    "input index " + std::to_string(idx) + " outside vocabulary of " + std::to_string(vocab));
    }
}

/// Applies the gate nonlinearities in place on z (length 4H) and advances the cell.
void step_cell(Eigen::Ref<Eigen::RowVectorXd> z, Eigen::Ref<const Eigen::RowVectorXd> c_prev,
               Eigen::Ref<Eigen::RowVectorXd> c, Eigen::Ref<Eigen::RowVectorXd> c_tanh,
               Eigen::Ref<Eigen::RowVectorXd> h, std::size_t H) {
    for (std::size_t j = 0; j < H; ++j) {
        const double i = sigmoid(z[j]);
        const double f = sigmoid(z[H + j]);
        const double g = std::tanh(z[2 * H + j]);
        const double o = sigmoid(z[3 * H + j]);
        z[j] = i;
        z[H + j] = f;
        z[2 * H + j] = g;
        z[3 * H + j] = o;
        c[j] = f * c_prev[j] + i * g;
        c_tanh[j] = std::tanh(c[j]);
        h[j] = o * c_tanh[j];
    }
}

LstmOutput run_forward(const LstmParams& params, LstmCache cache, const LstmState* initial) {
    params.validate();
    const std::size_t H = params.hidden();
    const std::size_t T = cache.steps;
    cache.hidden = H;
    cache.gates.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(4 * H));
    cache.cells.resize(static_cast<Eigen::Index>(T + 1), static_cast<Eigen::Index>(H));
    cache.hiddens.resize(static_cast<Eigen::Index>(T + 1), static_cast<Eigen::Index>(H));
    cache.cell_tanh.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(H));
    if (initial) {
        if (static_cast<std::size_t>(initial->h.size()) != H || static_cast<std::size_t>(initial->c.size()) != H) {
            throw Error(ErrorCode::ShapeMismatch, "initial LSTM state does not match hidden size");
        }
        cache.hiddens.row(0) = initial->h.transpose();
        cache.cells.row(0) = initial->c.transpose();
    } else {
        cache.hiddens.row(0).setZero();
        cache.cells.row(0).setZero();
    }

    const auto W = params.W.matrix();
    const auto U = params.U.matrix();
    const auto b = params.b.vector();
    for (std::size_t t = 0; t < T; ++t) {
        const auto ti = static_cast<Eigen::Index>(t);
        auto z = cache.gates.row(ti);
        z.noalias() = (U * cache.hiddens.row(ti).transpose()).transpose();
        z += b.transpose();
        if (cache.one_hot()) {
            z += W.col(cache.indices[t]).transpose();
        } else {
            z.noalias() += (W * cache.dense_input.matrix().row(ti).transpose()).transpose();
        }
        step_cell(z, cache.cells.row(ti), cache.cells.row(ti + 1), cache.cell_tanh.row(ti),
                  cache.hiddens.row(ti + 1), H);
    }

    LstmOutput out;
    out.outputs = Tensor({T, H});
    out.outputs.matrix() = cache.hiddens.bottomRows(static_cast<Eigen::Index>(T));
    out.outputs.check_finite("lstm_forward outputs");
    out.final_state.h = cache.hiddens.row(static_cast<Eigen::Index>(T)).transpose();
    out.final_state.c = cache.cells.row(static_cast<Eigen::Index>(T)).transpose();
    out.cache = std::move(cache);
    return out;
}

}  // namespace

void LstmParams::validate() const {
    const std::size_t H = U.cols();
    if (U.rank() != 2 || U.rows() != 4 * H) throw Error(ErrorCode::ShapeMismatch, "U must be 4H x H, got " + U.shape_string());
    if (W.rank() != 2 || W.rows() != 4 * H) throw Error(ErrorCode::ShapeMismatch, "W must be 4H x V, got " + W.shape_string());
    if (b.rank() != 1 || b.size() != 4 * H) throw Error(ErrorCode::ShapeMismatch, "b must be 4H, got " + b.shape_string());
}

LstmParams init_lstm(std::size_t input, std::size_t hidden, Rng& rng, double forget_bias) {
    LstmParams p{Tensor({4 * hidden, input}), Tensor({4 * hidden, hidden}), Tensor({4 * hidden})};
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double& w : p.W.values()) w = rng.uniform(-k, k);
    for (double& w : p.U.values()) w = rng.uniform(-k, k);
    for (std::size_t j = 0; j < 4 * hidden; ++j) p.b[j] = rng.uniform(-k, k);
    for (std::size_t j = hidden; j < 2 * hidden; ++j) p.b[j] = forget_bias;
    return p;
}

LstmState LstmState::zeros(std::size_t hidden) {
    return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(hidden)),
            Eigen::VectorXd::Zero(static_cast<Eigen::Index>(hidden))};
}

LstmOutput lstm_forward(const LstmParams& params, const Tensor& inputs, const LstmState* initial) {
    if (inputs.rank() != 2 || inputs.cols() != params.input()) {
        throw Error(ErrorCode::ShapeMismatch,
                    "inputs must be T x " + std::to_string(params.input()) + ", got " + inputs.shape_string());
    }
    inputs.check_finite("lstm_forward inputs");
    LstmCache cache;
    cache.steps = inputs.rows();
    cache.dense_input = inputs;
    return run_forward(params, std::move(cache), initial);
}

LstmOutput lstm_forward(const LstmParams& params, std::span<const std::uint32_t> indices, const LstmState* initial) {
    for (auto idx : indices) require_index(idx, params.input());
    LstmCache cache;
    cache.steps = indices.size();
    cache.indices.assign(indices.begin(), indices.end());
    return run_forward(params, std::move(cache), initial);
}

LstmGrads lstm_backward(const LstmParams& params, const LstmCache& cache, const Tensor& d_outputs,
                        const LstmState* d_final) {
    params.validate();
    const std::size_t H = params.hidden();
    const std::size_t T = cache.steps;
    if (cache.hidden != H) throw Error(ErrorCode::ShapeMismatch, "cache built with a different hidden size");
    require_shape(d_outputs, {T, H}, "lstm_backward d_outputs");

    LstmGrads g{Tensor(params.W.shape()), Tensor(params.U.shape()), Tensor(params.b.shape()), Tensor(),
                LstmState::zeros(H)};
    if (!cache.one_hot()) g.d_inputs = Tensor(cache.dense_input.shape());

    RowMatrix dz(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(4 * H));
    Eigen::RowVectorXd dh_next = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(H));
    Eigen::RowVectorXd dc_next = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(H));
    if (d_final) {
        dh_next = d_final->h.transpose();
        dc_next = d_final->c.transpose();
    }
    const auto U = params.U.matrix();
    const auto dout = d_outputs.matrix();

    for (std::size_t tt = T; tt-- > 0;) {
        const auto t = static_cast<Eigen::Index>(tt);
        const auto gates = cache.gates.row(t);
        auto dzt = dz.row(t);
        for (std::size_t j = 0; j < H; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            const double i = gates[jj];
            const double f = gates[jj + static_cast<Eigen::Index>(H)];
            const double gg = gates[jj + static_cast<Eigen::Index>(2 * H)];
            const double o = gates[jj + static_cast<Eigen::Index>(3 * H)];
            const double tc = cache.cell_tanh(t, jj);
            const double dh = dout(t, jj) + dh_next[jj];
            const double dc = dh * o * (1.0 - tc * tc) + dc_next[jj];
            dzt[jj] = dc * gg * i * (1.0 - i);
            dzt[jj + static_cast<Eigen::Index>(H)] = dc * cache.cells(t, jj) * f * (1.0 - f);
            dzt[jj + static_cast<Eigen::Index>(2 * H)] = dc * i * (1.0 - gg * gg);
            dzt[jj + static_cast<Eigen::Index>(3 * H)] = dh * tc * o * (1.0 - o);
            dc_next[jj] = dc * f;
        }
        dh_next.noalias() = dzt * U;
    }

    // Parameter gradients as whole-sequence products.
    g.dU.matrix().noalias() = dz.transpose() * cache.hiddens.topRows(static_cast<Eigen::Index>(T));
    g.db.vector() = dz.colwise().sum().transpose();
    if (cache.one_hot()) {
        auto dW = g.dW.matrix();
        for (std::size_t t = 0; t < T; ++t) dW.col(cache.indices[t]) += dz.row(static_cast<Eigen::Index>(t)).transpose();
    } else {
        g.dW.matrix().noalias() = dz.transpose() * cache.dense_input.matrix();
        g.d_inputs.matrix().noalias() = dz * params.W.matrix();
    }
    g.d_initial.h = dh_next.transpose();
    g.d_initial.c = dc_next.transpose();
    return g;
}

Tensor lstm_last_hidden_batch(const LstmParams& params, std::span<const std::vector<std::uint32_t>> sequences) {
    params.validate();
    const std::size_t H = params.hidden();
    const std::size_t B = sequences.size();
    Tensor out({B, H});
    if (B == 0) return out;
    const std::size_t T = sequences.front().size();
    for (const auto& s : sequences) {
        if (s.size() != T) throw Error(ErrorCode::ShapeMismatch, "batched sequences must share a length");
        for (auto idx : s) require_index(idx, params.input());
    }
    const auto W = params.W.matrix();
    const auto U = params.U.matrix();
    const auto b = params.b.vector();
    RowMatrix h = RowMatrix::Zero(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(H));
    RowMatrix c = h;
    RowMatrix z(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(4 * H));
    Eigen::RowVectorXd scratch(static_cast<Eigen::Index>(H));
    for (std::size_t t = 0; t < T; ++t) {
        z.noalias() = h * U.transpose();
        for (std::size_t r = 0; r < B; ++r) {
            const auto ri = static_cast<Eigen::Index>(r);
            auto zr = z.row(ri);
            zr += b.transpose();
            zr += W.col(sequences[r][t]).transpose();
            Eigen::RowVectorXd c_prev = c.row(ri);
            step_cell(zr, c_prev, c.row(ri), scratch, h.row(ri), H);
        }
    }
    out.matrix() = h;
    out.check_finite("lstm_last_hidden_batch");
    return out;
}

}  // namespace sni_sight::nn
