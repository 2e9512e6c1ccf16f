#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "d2nn/tensor.hpp"

/// Forward and backward kernels for the layer set. Every kernel is a pure
/// function of its arguments; autodiff bookkeeping lives in tape.hpp.
namespace d2nn::ops {

namespace detail {

inline void require(bool ok, const std::string& what, const Shape& a, const Shape& b) {
    if (!ok) throw ShapeError(what + ": " + shape_string(a) + " vs " + shape_string(b));
}

inline Index out_extent(Index in, Index kernel, Index stride, Index pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

/// Unfolds one example into a [c*k*k, oh*ow] column matrix.
template <typename Scalar, typename Cols>
void im2col(const Scalar* img, Index c, Index h, Index w, Index k, Index stride, Index pad, Index oh,
            Index ow, Cols& cols) {
    for (Index ch = 0; ch < c; ++ch)
        for (Index ky = 0; ky < k; ++ky)
            for (Index kx = 0; kx < k; ++kx) {
                const Index row = (ch * k + ky) * k + kx;
                for (Index oy = 0; oy < oh; ++oy) {
                    const Index iy = oy * stride - pad + ky;
                    for (Index ox = 0; ox < ow; ++ox) {
                        const Index ix = ox * stride - pad + kx;
                        cols(row, oy * ow + ox) = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                                      ? img[(ch * h + iy) * w + ix]
                                                      : Scalar(0);
                    }
                }
            }
}

template <typename Scalar, typename Cols>
void col2im(const Cols& cols, Index c, Index h, Index w, Index k, Index stride, Index pad, Index oh,
            Index ow, Scalar* img) {
    for (Index ch = 0; ch < c; ++ch)
        for (Index ky = 0; ky < k; ++ky)
            for (Index kx = 0; kx < k; ++kx) {
                const Index row = (ch * k + ky) * k + kx;
                for (Index oy = 0; oy < oh; ++oy) {
                    const Index iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (Index ox = 0; ox < ow; ++ox) {
                        const Index ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) img[(ch * h + iy) * w + ix] += cols(row, oy * ow + ox);
                    }
                }
            }
}

}  // namespace detail

// ---------------------------------------------------------------- linear

template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weights,
                      const Tensor<Scalar>& bias) {
    detail::require(x.rank() == 2 && weights.rank() == 2 && x.dim(1) == weights.dim(1),
                    "linear: input and weight shapes differ", x.shape(), weights.shape());
    detail::require(bias.rank() == 1 && bias.dim(0) == weights.dim(0),
                    "linear: bias does not match weights", bias.shape(), weights.shape());
    Tensor<Scalar> y({x.dim(0), weights.dim(0)});
    y.matrix().noalias() = x.matrix() * weights.matrix().transpose();
    y.matrix().rowwise() += bias.values().transpose();
    return y;
}

template <typename Scalar>
struct LinearGrads {
    Tensor<Scalar> input, weights, bias;
};

template <typename Scalar>
LinearGrads<Scalar> linear_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& weights,
                                    const Tensor<Scalar>& dy) {
    LinearGrads<Scalar> g{Tensor<Scalar>(x.shape()), Tensor<Scalar>(weights.shape()),
                          Tensor<Scalar>({weights.dim(0)})};
    g.input.matrix().noalias() = dy.matrix() * weights.matrix();
    g.weights.matrix().noalias() = dy.matrix().transpose() * x.matrix();
    g.bias.values() = dy.matrix().colwise().sum().transpose();
    return g;
}

// ---------------------------------------------------------------- conv2d

/// Cross-correlation of x [n,c,h,w] with weights [oc,c,k,k], zero padding.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weights,
                      const Tensor<Scalar>& bias, Index stride, Index pad) {
    detail::require(x.rank() == 4 && weights.rank() == 4 && x.dim(1) == weights.dim(1) &&
                        weights.dim(2) == weights.dim(3),
                    "conv2d: input and weight shapes differ", x.shape(), weights.shape());
    detail::require(bias.rank() == 1 && bias.dim(0) == weights.dim(0),
                    "conv2d: bias does not match weights", bias.shape(), weights.shape());
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const Index oc = weights.dim(0), k = weights.dim(2);
    detail::require(k <= h + 2 * pad && k <= w + 2 * pad,
                    "conv2d: kernel larger than padded input", weights.shape(), x.shape());
    const Index oh = detail::out_extent(h, k, stride, pad), ow = detail::out_extent(w, k, stride, pad);

    using RowMatrix = typename Tensor<Scalar>::RowMatrix;
    Tensor<Scalar> y({n, oc, oh, ow});
    RowMatrix cols(c * k * k, oh * ow);
    const auto wmat = weights.matrix(oc);
    for (Index i = 0; i < n; ++i) {
        detail::im2col(x.data() + i * c * h * w, c, h, w, k, stride, pad, oh, ow, cols);
        Eigen::Map<RowMatrix> out(y.data() + i * oc * oh * ow, oc, oh * ow);
        out.noalias() = wmat * cols;
        out.colwise() += bias.values();
    }
    return y;
}

template <typename Scalar>
struct ConvGrads {
    Tensor<Scalar> input, weights, bias;
};

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& weights,
                                  const Tensor<Scalar>& dy, Index stride, Index pad) {
    const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const Index oc = weights.dim(0), k = weights.dim(2);
    const Index oh = dy.dim(2), ow = dy.dim(3);
    using RowMatrix = typename Tensor<Scalar>::RowMatrix;
    ConvGrads<Scalar> g{Tensor<Scalar>(x.shape()), Tensor<Scalar>(weights.shape()),
                        Tensor<Scalar>({oc})};
    RowMatrix cols(c * k * k, oh * ow);
    RowMatrix dcols(c * k * k, oh * ow);
    auto dw = g.weights.matrix(oc);
    const auto wmat = weights.matrix(oc);
    for (Index i = 0; i < n; ++i) {
        Eigen::Map<const RowMatrix> dout(dy.data() + i * oc * oh * ow, oc, oh * ow);
        detail::im2col(x.data() + i * c * h * w, c, h, w, k, stride, pad, oh, ow, cols);
        dw.noalias() += dout * cols.transpose();
        g.bias.values() += dout.rowwise().sum();
        dcols.noalias() = wmat.transpose() * dout;
        detail::col2im(dcols, c, h, w, k, stride, pad, oh, ow, g.input.data() + i * c * h * w);
    }
    return g;
}

// ---------------------------------------------------------------- maxpool2d

template <typename Scalar>
struct PoolResult {
    Tensor<Scalar> output;
    std::vector<Index> argmax;  // flat input index per output element
};

/// Window maximum without padding; ties go to the first element in row-major scan order.
template <typename Scalar>
PoolResult<Scalar> maxpool2d(const Tensor<Scalar>& x, Index kernel, Index stride) {
    if (x.rank() != 4) throw ShapeError("maxpool2d: expected [n,c,h,w], got " + shape_string(x.shape()));
    if (stride < 1) throw ShapeError("maxpool2d: stride must be >= 1");
    const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (kernel < 1 || kernel > h || kernel > w)
        throw ShapeError("maxpool2d: window " + std::to_string(kernel) + " exceeds input " +
                         shape_string(x.shape()));
    const Index oh = detail::out_extent(h, kernel, stride, 0);
    const Index ow = detail::out_extent(w, kernel, stride, 0);
    PoolResult<Scalar> r{Tensor<Scalar>({n, c, oh, ow}), std::vector<Index>(n * c * oh * ow)};
    Index o = 0;
    for (Index plane = 0; plane < n * c; ++plane) {
        const Index base = plane * h * w;
        for (Index oy = 0; oy < oh; ++oy)
            for (Index ox = 0; ox < ow; ++ox, ++o) {
                Index best = base + (oy * stride) * w + ox * stride;
                for (Index ky = 0; ky < kernel; ++ky)
                    for (Index kx = 0; kx < kernel; ++kx) {
                        const Index idx = base + (oy * stride + ky) * w + ox * stride + kx;
                        if (x[idx] > x[best]) best = idx;
                    }
                r.output[o] = x[best];
                r.argmax[o] = best;
            }
    }
    return r;
}

template <typename Scalar>
Tensor<Scalar> maxpool2d_backward(const Shape& input_shape, const std::vector<Index>& argmax,
                                  const Tensor<Scalar>& dy) {
    Tensor<Scalar> dx(input_shape);
    for (Index o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
    return dx;
}

// ---------------------------------------------------------------- elementwise / structural

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
    return Tensor<Scalar>(x.shape(), x.values().cwiseMax(Scalar(0)).eval());
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& dy) {
    return Tensor<Scalar>(
        x.shape(), (x.values().array() > Scalar(0)).select(dy.values().array(), Scalar(0)).matrix().eval());
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require(a.shape() == b.shape(), "add: operand shapes differ", a.shape(), b.shape());
    return Tensor<Scalar>(a.shape(), (a.values() + b.values()).eval());
}

template <typename Scalar>
Tensor<Scalar> identity(const Tensor<Scalar>& x) {
    return x;
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, const Shape& shape) {
    return x.reshaped(shape);
}

/// Row-wise softmax of a [n,k] tensor.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x) {
    if (x.rank() != 2) throw ShapeError("softmax: expected [n,k], got " + shape_string(x.shape()));
    Tensor<Scalar> y(x.shape());
    auto in = x.matrix();
    auto out = y.matrix();
    for (Index i = 0; i < x.dim(0); ++i) {
        const Scalar m = in.row(i).maxCoeff();
        out.row(i) = (in.row(i).array() - m).exp().matrix();
        out.row(i) /= out.row(i).sum();
    }
    return y;
}

template <typename Scalar>
Tensor<Scalar> softmax_backward(const Tensor<Scalar>& y, const Tensor<Scalar>& dy) {
    Tensor<Scalar> dx(y.shape());
    auto out = y.matrix();
    auto g = dy.matrix();
    auto d = dx.matrix();
    for (Index i = 0; i < y.dim(0); ++i) {
        const Scalar dot = out.row(i).dot(g.row(i));
        d.row(i) = out.row(i).array() * (g.row(i).array() - dot);
    }
    return dx;
}

}  // namespace d2nn::ops
