#include "sni_sight/nn/layers.hpp"

#include <cmath>

#include "sni_sight/error.hpp"

namespace sni_sight::nn {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

DenseParams init_dense(std::size_t in, std::size_t out, Rng& rng) {
    DenseParams p{Tensor({out, in}), Tensor({out})};
    const double k = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : p.W.values()) w = rng.uniform(-k, k);
    for (double& w : p.b.values()) w = rng.uniform(-k, k);
    return p;
}

Tensor dense_forward(const DenseParams& p, const Tensor& x, Activation act, DenseCache* cache) {
    if (x.rank() != 2 || x.cols() != p.in()) {
        throw Error(ErrorCode::ShapeMismatch,
                    "dense input must be B x " + std::to_string(p.in()) + ", got " + x.shape_string());
    }
    if (p.b.size() != p.out()) throw Error(ErrorCode::ShapeMismatch, "dense bias " + p.b.shape_string());
    Tensor pre({x.rows(), p.out()});
    pre.matrix().noalias() = x.matrix() * p.W.matrix().transpose();
    pre.matrix().rowwise() += p.b.vector().transpose();
    pre.check_finite("dense_forward");
    Tensor y = pre;
    if (act == Activation::Relu) {
        for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
    }
    if (cache) {
        cache->input = x;
        cache->preactivation = std::move(pre);
        cache->activation = act;
    }
    return y;
}

DenseGrads dense_backward(const DenseParams& p, const DenseCache& cache, const Tensor& dy) {
    require_same_shape(dy, cache.preactivation, "dense_backward dy");
    Tensor dpre = dy;
    if (cache.activation == Activation::Relu) {
        for (std::size_t i = 0; i < dpre.size(); ++i) {
            if (cache.preactivation[i] <= 0.0) dpre[i] = 0.0;
        }
    }
    DenseGrads g{Tensor(p.W.shape()), Tensor(p.b.shape()), Tensor(cache.input.shape())};
    g.dW.matrix().noalias() = dpre.matrix().transpose() * cache.input.matrix();
    g.db.vector() = dpre.matrix().colwise().sum().transpose();
    g.dx.matrix().noalias() = dpre.matrix() * p.W.matrix();
    return g;
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training, Tensor* mask) {
    if (!(rate >= 0.0 && rate < 1.0)) throw Error(ErrorCode::BadRate, "dropout rate " + std::to_string(rate));
    Tensor m(x.shape(), 1.0);
    if (training && rate > 0.0) {
        const double keep_scale = 1.0 / (1.0 - rate);
        for (double& v : m.values()) v = rng.uniform01() < rate ? 0.0 : keep_scale;
    }
    Tensor y = x;
    y.vector().array() *= m.vector().array();
    if (mask) *mask = std::move(m);
    return y;
}

LossResult sigmoid_ce_loss(const Tensor& logits, const Tensor& targets) {
    require_same_shape(logits, targets, "sigmoid_ce_loss");
    logits.check_finite("sigmoid_ce_loss logits");
    const std::size_t n = logits.size();
    LossResult r;
    r.grad = Tensor(logits.shape());
    if (n == 0) return r;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = logits[i];
        const double y = targets[i];
        total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        r.grad[i] = (sigmoid(z) - y) / static_cast<double>(n);
    }
    r.loss = total / static_cast<double>(n);
    return r;
}

}  // namespace sni_sight::nn
