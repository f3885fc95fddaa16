#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/StdVector>

namespace sni_sight::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

/// Dense row-major array of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::initializer_list<std::size_t> shape, double fill = 0.0)
        : Tensor(std::vector<std::size_t>(shape), fill) {}

    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);

    [[nodiscard]] const std::vector<std::size_t>& shape() const { return shape_; }
    [[nodiscard]] std::size_t rank() const { return shape_.size(); }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] std::size_t dim(std::size_t i) const { return shape_.at(i); }
    /// For rank-2 tensors; a rank-1 tensor reads as a single row.
    [[nodiscard]] std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
    [[nodiscard]] std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

    [[nodiscard]] std::span<double> values() { return data_; }
    [[nodiscard]] std::span<const double> values() const { return data_; }
    [[nodiscard]] double* data() { return data_.data(); }
    [[nodiscard]] const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    [[nodiscard]] MatrixMap matrix() { return {data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())}; }
    [[nodiscard]] ConstMatrixMap matrix() const {
        return {data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
    }
    [[nodiscard]] VectorMap vector() { return {data_.data(), static_cast<Eigen::Index>(data_.size())}; }
    [[nodiscard]] ConstVectorMap vector() const { return {data_.data(), static_cast<Eigen::Index>(data_.size())}; }

    void fill(double v);
    void set_zero() { fill(0.0); }
    [[nodiscard]] bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    [[nodiscard]] std::string shape_string() const;

    /// Throws NonFiniteValue naming where.
    void check_finite(std::string_view where) const;

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    std::vector<std::size_t> shape_;
    // Aligned storage keeps Eigen's vectorized summation order independent of where the buffer lands.
    std::vector<double, Eigen::aligned_allocator<double>> data_;
};

/// Throws ShapeMismatch unless a and b have equal shapes.
void require_same_shape(const Tensor& a, const Tensor& b, std::string_view where);
void require_shape(const Tensor& t, const std::vector<std::size_t>& shape, std::string_view where);

/// Non-owning (name, tensor) view used by optimizers and checkpoints.
struct ParamRef {
    std::string name;
    Tensor* tensor;
};
using ParamList = std::vector<ParamRef>;

double squared_norm(std::span<const Tensor* const> tensors);

}  // namespace sni_sight::nn
