#pragma once

// Independent reference implementations used only by tests. Nothing here
// calls into the optimized kernels it is used to check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "d2nn/tape.hpp"

namespace oracle {

using d2nn::Index;
using d2nn::Shape;
using d2nn::Tensor;

template <typename Scalar>
Tensor<Scalar> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor<Scalar> t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(dist(rng));
    return t;
}

/// y[r][o] = b[o] + sum_i x[r][i] * w[o][i], counting multiplies.
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b,
                      Index* mults = nullptr) {
    const Index n = x.dim(0), in = x.dim(1), out = w.dim(0);
    Tensor<Scalar> y({n, out});
    for (Index r = 0; r < n; ++r)
        for (Index o = 0; o < out; ++o) {
            double acc = static_cast<double>(b[o]);
            for (Index i = 0; i < in; ++i) {
                acc += static_cast<double>(x[r * in + i]) * static_cast<double>(w[o * in + i]);
                if (mults) ++*mults;
            }
            y[r * out + o] = static_cast<Scalar>(acc);
        }
    return y;
}

/// Six nested loops (plus batch); every kernel tap is one multiply, padded
/// taps included.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b, Index stride,
                      Index pad, Index* mults = nullptr) {
    const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const Index oc = w.dim(0), k = w.dim(2);
    const Index oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
    Tensor<Scalar> y({n, oc, oh, ow});
    for (Index s = 0; s < n; ++s)
        for (Index o = 0; o < oc; ++o)
            for (Index oy = 0; oy < oh; ++oy)
                for (Index ox = 0; ox < ow; ++ox) {
                    double acc = static_cast<double>(b[o]);
                    for (Index ch = 0; ch < c; ++ch)
                        for (Index ky = 0; ky < k; ++ky)
                            for (Index kx = 0; kx < k; ++kx) {
                                const Index iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                                const double v = (iy >= 0 && iy < h && ix >= 0 && ix < wd)
                                                     ? static_cast<double>(x[((s * c + ch) * h + iy) * wd + ix])
                                                     : 0.0;
                                acc += v * static_cast<double>(w[((o * c + ch) * k + ky) * k + kx]);
                                if (mults) ++*mults;
                            }
                    y[((s * oc + o) * oh + oy) * ow + ox] = static_cast<Scalar>(acc);
                }
    return y;
}

template <typename Scalar>
Tensor<Scalar> maxpool(const Tensor<Scalar>& x, Index k, Index stride) {
    const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const Index oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
    Tensor<Scalar> y({n, c, oh, ow});
    for (Index s = 0; s < n * c; ++s)
        for (Index oy = 0; oy < oh; ++oy)
            for (Index ox = 0; ox < ow; ++ox) {
                Scalar m = -std::numeric_limits<Scalar>::infinity();
                for (Index ky = 0; ky < k; ++ky)
                    for (Index kx = 0; kx < k; ++kx)
                        m = std::max(m, x[(s * h + oy * stride + ky) * w + ox * stride + kx]);
                y[(s * oh + oy) * ow + ox] = m;
            }
    return y;
}

/// Result of comparing reverse-mode gradients with central differences.
struct GradCheck {
    double worst_relative_error = 0.0;
    bool ok(double tol) const { return worst_relative_error < tol; }
};

/// Norm-wise relative error ||a-n|| / max(||a||, ||n||); zero when both vanish.
inline double relative_error(const Tensor<double>& analytic, const Tensor<double>& numeric) {
    const double diff = (analytic.values() - numeric.values()).norm();
    const double scale = std::max(analytic.values().norm(), numeric.values().norm());
    if (scale < 1e-12) return diff;
    return diff / scale;
}

/// Checks d(sum(probe * f(leaves)))/d(leaf) for every leaf. `build` records
/// the computation on a fresh tape from the given leaf vars.
inline GradCheck check_gradients(std::vector<Tensor<double>> leaves,
                                 const std::function<d2nn::Var(d2nn::Tape<double>&, const std::vector<d2nn::Var>&)>& build,
                                 std::mt19937_64& rng, double h = 1e-5) {
    auto run = [&](const std::vector<Tensor<double>>& values, d2nn::Tape<double>& tape, std::vector<d2nn::Var>& vars) {
        vars.clear();
        for (const auto& v : values) vars.push_back(tape.variable(v));
        return build(tape, vars);
    };
    d2nn::Tape<double> tape;
    std::vector<d2nn::Var> vars;
    const d2nn::Var out = run(leaves, tape, vars);
    const Tensor<double> probe = random_tensor<double>(tape.value(out).shape(), rng);
    auto loss_of = [&](const std::vector<Tensor<double>>& values) {
        d2nn::Tape<double> t;
        std::vector<d2nn::Var> vs;
        const d2nn::Var o = run(values, t, vs);
        return t.value(o).values().dot(probe.values());
    };
    std::vector<d2nn::Tape<double>::Seed> seeds{{out, probe}};
    tape.backward(seeds);

    GradCheck result;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        Tensor<double> numeric(leaves[l].shape());
        for (Index i = 0; i < leaves[l].size(); ++i) {
            auto plus = leaves, minus = leaves;
            plus[l][i] += h;
            minus[l][i] -= h;
            numeric[i] = (loss_of(plus) - loss_of(minus)) / (2 * h);
        }
        result.worst_relative_error =
            std::max(result.worst_relative_error, relative_error(tape.grad(vars[l]), numeric));
    }
    return result;
}

}  // namespace oracle
