#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "d2nn/error.hpp"

namespace d2nn {

using Index = std::int64_t;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
    Index n = 1;
    for (Index d : shape) n *= d;
    return n;
}

inline std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Shape without the leading batch dimension.
inline Shape example_shape(const Shape& shape) {
    return shape.empty() ? Shape{} : Shape(shape.begin() + 1, shape.end());
}

inline Shape with_batch(Index n, const Shape& example) {
    Shape s{n};
    s.insert(s.end(), example.begin(), example.end());
    return s;
}

/// Dense row-major n-d array. The leading dimension is the batch dimension
/// whenever a tensor travels along a data edge.
template <typename Scalar_>
class Tensor {
public:
    using Scalar = Scalar_;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MatrixMap = Eigen::Map<RowMatrix>;
    using ConstMatrixMap = Eigen::Map<const RowMatrix>;

    Tensor() = default;

    explicit Tensor(Shape shape, Scalar fill = Scalar(0))
        : shape_(std::move(shape)), data_(Vector::Constant(checked_size(shape_), fill)) {}

    Tensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_size(shape_) != data_.size())
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
    }

    Tensor(Shape shape, std::initializer_list<Scalar> values)
        : Tensor(std::move(shape), Vector(Eigen::Map<const Vector>(values.begin(),
                                                                   static_cast<Index>(values.size())))) {}

    const Shape& shape() const noexcept { return shape_; }
    Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
    Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i)); }
    Index size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.size() == 0 && shape_.empty(); }

    /// Leading dimension; 1 for a scalar.
    Index rows() const noexcept { return shape_.empty() ? 1 : shape_[0]; }
    Index row_size() const noexcept { return rows() == 0 ? 0 : size() / rows(); }

    Scalar* data() noexcept { return data_.data(); }
    const Scalar* data() const noexcept { return data_.data(); }
    Vector& values() noexcept { return data_; }
    const Vector& values() const noexcept { return data_; }

    Scalar& operator[](Index i) { return data_[i]; }
    Scalar operator[](Index i) const { return data_[i]; }

    /// Row-major [rows, size/rows] view.
    MatrixMap matrix(Index rows) { return MatrixMap(data(), rows, rows ? size() / rows : 0); }
    ConstMatrixMap matrix(Index rows) const {
        return ConstMatrixMap(data(), rows, rows ? size() / rows : 0);
    }
    MatrixMap matrix() { return matrix(rows()); }
    ConstMatrixMap matrix() const { return matrix(rows()); }

    Tensor reshaped(Shape shape) const {
        if (shape_size(shape) != size())
            throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        return Tensor(std::move(shape), data_);
    }

    template <typename Other>
    Tensor<Other> cast() const {
        return Tensor<Other>(shape_, data_.template cast<Other>().eval());
    }

    /// Bitwise equality of shape and data.
    friend bool operator==(const Tensor& a, const Tensor& b) {
        if (a.shape_ != b.shape_) return false;
        for (Index i = 0; i < a.size(); ++i)
            if (a.data_[i] != b.data_[i]) return false;
        return true;
    }

private:
    static Index checked_size(const Shape& shape) {
        for (Index d : shape)
            if (d < 0) throw ShapeError("negative dimension in shape " + shape_string(shape));
        return shape_size(shape);
    }

    Shape shape_;
    Vector data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace d2nn
