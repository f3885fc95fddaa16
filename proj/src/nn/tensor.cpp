#include "sni_sight/nn/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "sni_sight/error.hpp"

namespace sni_sight::nn {

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
    const std::size_t n = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
    data_.assign(shape_.empty() ? 0 : n, fill);
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
    Tensor t(std::move(shape));
    if (t.size() != values.size()) {
        throw Error(ErrorCode::ShapeMismatch, "shape " + t.shape_string() + " needs " + std::to_string(t.size()) +
                                                  " values, got " + std::to_string(values.size()));
    }
    t.data_.assign(values.begin(), values.end());
    return t;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

void Tensor::check_finite(std::string_view where) const {
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw Error(ErrorCode::NonFiniteValue, std::string(where) + " entry " + std::to_string(i));
        }
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view where) {
    if (!a.same_shape(b)) {
        throw Error(ErrorCode::ShapeMismatch, std::string(where) + ": " + a.shape_string() + " vs " + b.shape_string());
    }
}

void require_shape(const Tensor& t, const std::vector<std::size_t>& shape, std::string_view where) {
    if (t.shape() != shape) {
        Tensor want(shape);
        throw Error(ErrorCode::ShapeMismatch,
                    std::string(where) + ": expected " + want.shape_string() + ", got " + t.shape_string());
    }
}

double squared_norm(std::span<const Tensor* const> tensors) {
    double s = 0.0;
    for (const Tensor* t : tensors) s += t->vector().squaredNorm();
    return s;
}

}  // namespace sni_sight::nn
