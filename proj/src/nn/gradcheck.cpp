#include "sni_sight/nn/gradcheck.hpp"

#include <algorithm>

namespace sni_sight::nn {

Tensor numeric_gradient(const std::function<double()>& loss, Tensor& param, double step) {
    Tensor grad(param.shape());
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + step;
        const double up = loss();
        param[i] = saved - step;
        const double down = loss();
        param[i] = saved;
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

double relative_error(const Tensor& analytic, const Tensor& numeric) {
    require_same_shape(analytic, numeric, "relative_error");
    const double diff = (analytic.vector() - numeric.vector()).norm();
    const double scale = std::max(analytic.vector().norm(), numeric.vector().norm());
    return scale == 0.0 ? 0.0 : diff / scale;
}

}  // namespace sni_sight::nn
