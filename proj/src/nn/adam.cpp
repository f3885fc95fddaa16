#include "sni_sight/nn/adam.hpp"

#include <cmath>

#include "sni_sight/error.hpp"

namespace sni_sight::nn {

AdamState adam_init(const ParamList& params, AdamConfig config) {
    AdamState s;
    s.config = config;
    for (const auto& p : params) {
        s.m.emplace_back(p.tensor->shape());
        s.v.emplace_back(p.tensor->shape());
    }
    return s;
}

void adam_step(const ParamList& params, const std::vector<const Tensor*>& grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw Error(ErrorCode::ShapeMismatch, "adam_step: parameter, gradient and moment counts differ");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        require_same_shape(*params[k].tensor, *grads[k], "adam_step " + params[k].name);
        require_same_shape(*params[k].tensor, state.m[k], "adam_step moments " + params[k].name);
    }
    ++state.t;
    const auto& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        double* p = params[k].tensor->data();
        const double* g = grads[k]->data();
        double* m = state.m[k].data();
        double* v = state.v[k].data();
        const std::size_t n = params[k].tensor->size();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
        }
    }
}

double clip_global_norm(const std::vector<Tensor*>& grads, double max_norm) {
    double sq = 0.0;
    for (const Tensor* g : grads) sq += g->vector().squaredNorm();
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (Tensor* g : grads) g->vector() *= scale;
    }
    return norm;
}

}  // namespace sni_sight::nn
