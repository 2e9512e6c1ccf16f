#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "d2nn/layer.hpp"
#include "d2nn/ops.hpp"

namespace d2nn {

/// Handle to a tensor recorded on a Tape.
struct Var {
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
    std::size_t id = npos;

    bool valid() const noexcept { return id != npos; }
    friend bool operator==(Var, Var) = default;
};

/// Records executed ops and replays them in reverse to accumulate gradients.
/// Single-writer: one forward/backward pair per tape.
template <typename Scalar>
class Tape {
public:
    using TensorT = Tensor<Scalar>;
    /// Receives the gradient of the op's output and pushes gradients to its inputs.
    using BackwardFn = std::function<void(const TensorT& out_grad, Tape& tape)>;

    struct Seed {
        Var var;
        TensorT grad;
    };

    Var constant(TensorT value) { return push(std::move(value), false, {}); }
    Var variable(TensorT value) { return push(std::move(value), true, {}); }

    /// Records an op output. The backward step runs only if some input needs a gradient.
    Var record(TensorT value, std::vector<Var> inputs, BackwardFn backward) {
        bool needs = false;
        for (Var v : inputs) needs = needs || entry(v).requires_grad;
        Var out = push(std::move(value), needs, std::move(backward));
        entries_[out.id].inputs = std::move(inputs);
        return out;
    }

    const TensorT& value(Var v) const { return entry(v).value; }
    bool requires_grad(Var v) const { return entry(v).requires_grad; }
    bool has_grad(Var v) const { return entry(v).grad_set; }

    /// Gradient of the seeded outputs w.r.t. v; zeros when nothing reached v.
    TensorT grad(Var v) const {
        const Entry& e = entry(v);
        return e.grad_set ? e.grad : TensorT(e.value.shape());
    }

    void accumulate(Var v, const TensorT& g) {
        Entry& e = entry(v);
        if (!e.requires_grad) return;
        if (g.shape() != e.value.shape())
            throw ShapeError("gradient shape " + shape_string(g.shape()) + " does not match value " +
                             shape_string(e.value.shape()));
        if (!e.grad_set) {
            e.grad = g;
            e.grad_set = true;
        } else {
            e.grad.values() += g.values();
        }
    }

    /// Reverse sweep from the seeds over every recorded op, newest first.
    void backward(std::span<const Seed> seeds) {
        if (entries_.empty()) throw Error("backward called on an empty tape (no forward pass recorded)");
        for (const Seed& s : seeds) accumulate(s.var, s.grad);
        for (std::size_t i = entries_.size(); i-- > 0;) {
            Entry& e = entries_[i];
            if (!e.grad_set || !e.backward || !e.requires_grad) continue;
            const TensorT g = e.grad;
            e.backward(g, *this);
        }
    }

    /// Same as backward, but seed rows of examples with mask[i] == false are zeroed
    /// first, so masked examples contribute no gradient anywhere.
    void backward(std::span<const Seed> seeds, std::span<const bool> example_mask) {
        std::vector<Seed> masked(seeds.begin(), seeds.end());
        for (Seed& s : masked) {
            if (s.grad.rows() != static_cast<Index>(example_mask.size()))
                throw ShapeError("example mask length does not match seed rows " +
                                 shape_string(s.grad.shape()));
            auto m = s.grad.matrix();
            for (Index i = 0; i < m.rows(); ++i)
                if (!example_mask[static_cast<std::size_t>(i)]) m.row(i).setZero();
        }
        backward(std::span<const Seed>(masked));
    }

    std::size_t size() const noexcept { return entries_.size(); }

private:
    struct Entry {
        TensorT value;
        TensorT grad;
        bool requires_grad = false;
        bool grad_set = false;
        std::vector<Var> inputs;
        BackwardFn backward;
    };

    Var push(TensorT value, bool requires_grad, BackwardFn backward) {
        entries_.push_back(Entry{std::move(value), {}, requires_grad, false, {}, std::move(backward)});
        return Var{entries_.size() - 1};
    }

    Entry& entry(Var v) {
        if (v.id >= entries_.size()) throw Error("variable is not recorded on this tape");
        return entries_[v.id];
    }
    const Entry& entry(Var v) const {
        if (v.id >= entries_.size()) throw Error("variable is not recorded on this tape");
        return entries_[v.id];
    }

    std::vector<Entry> entries_;
};

/// Differentiable versions of the kernels in ops.hpp.
namespace ad {

template <typename Scalar>
Var linear(Tape<Scalar>& tape, Var x, Var weights, Var bias) {
    auto y = ops::linear(tape.value(x), tape.value(weights), tape.value(bias));
    return tape.record(std::move(y), {x, weights, bias},
                       [x, weights, bias](const Tensor<Scalar>& dy, Tape<Scalar>& t) {
                           auto g = ops::linear_backward(t.value(x), t.value(weights), dy);
                           t.accumulate(x, g.input);
                           t.accumulate(weights, g.weights);
                           t.accumulate(bias, g.bias);
                       });
}

template <typename Scalar>
Var conv2d(Tape<Scalar>& tape, Var x, Var weights, Var bias, Index stride, Index pad) {
    auto y = ops::conv2d(tape.value(x), tape.value(weights), tape.value(bias), stride, pad);
    return tape.record(std::move(y), {x, weights, bias},
                       [=](const Tensor<Scalar>& dy, Tape<Scalar>& t) {
                           auto g = ops::conv2d_backward(t.value(x), t.value(weights), dy, stride, pad);
                           t.accumulate(x, g.input);
                           t.accumulate(weights, g.weights);
                           t.accumulate(bias, g.bias);
                       });
}

template <typename Scalar>
Var maxpool2d(Tape<Scalar>& tape, Var x, Index kernel, Index stride) {
    auto r = ops::maxpool2d(tape.value(x), kernel, stride);
    auto argmax = std::make_shared<std::vector<Index>>(std::move(r.argmax));
    return tape.record(std::move(r.output), {x},
                       [x, argmax](const Tensor<Scalar>& dy, Tape<Scalar>& t) {
                           t.accumulate(x, ops::maxpool2d_backward(t.value(x).shape(), *argmax, dy));
                       });
}

template <typename Scalar>
Var relu(Tape<Scalar>& tape, Var x) {
    return tape.record(ops::relu(tape.value(x)), {x}, [x](const Tensor<Scalar>& dy, Tape<Scalar>& t) {
        t.accumulate(x, ops::relu_backward(t.value(x), dy));
    });
}

template <typename Scalar>
Var add(Tape<Scalar>& tape, Var a, Var b) {
    return tape.record(ops::add(tape.value(a), tape.value(b)), {a, b},
                       [a, b](const Tensor<Scalar>& dy, Tape<Scalar>& t) {
                           t.accumulate(a, dy);
                           t.accumulate(b, dy);
                       });
}

template <typename Scalar>
Var identity(Tape<Scalar>& tape, Var x) {
    return tape.record(tape.value(x), {x},
                       [x](const Tensor<Scalar>& dy, Tape<Scalar>& t) { t.accumulate(x, dy); });
}

template <typename Scalar>
Var reshape(Tape<Scalar>& tape, Var x, Shape shape) {
    return tape.record(ops::reshape(tape.value(x), shape), {x},
                       [x](const Tensor<Scalar>& dy, Tape<Scalar>& t) {
                           t.accumulate(x, dy.reshaped(t.value(x).shape()));
                       });
}

template <typename Scalar>
Var softmax(Tape<Scalar>& tape, Var x) {
    auto y = ops::softmax(tape.value(x));
    auto saved = std::make_shared<Tensor<Scalar>>(y);
    return tape.record(std::move(y), {x}, [x, saved](const Tensor<Scalar>& dy, Tape<Scalar>& t) {
        t.accumulate(x, ops::softmax_backward(*saved, dy));
    });
}

/// Packs rows of `src` into a new tensor: output row j copies src row
/// `rows[j]`, or `fill` (one example) when rows[j] < 0. Backward scatters
/// gradients back to the source rows; filled rows receive none.
template <typename Scalar>
Var gather_rows(Tape<Scalar>& tape, Var src, std::vector<Index> rows, const Tensor<Scalar>& fill) {
    const Tensor<Scalar>& s = tape.value(src);
    const Index width = s.row_size();
    if (fill.size() != width)
        throw ShapeError("gather_rows: fill " + shape_string(fill.shape()) + " does not match rows of " +
                         shape_string(s.shape()));
    Shape shape = s.shape();
    shape[0] = static_cast<Index>(rows.size());
    Tensor<Scalar> out(shape);
    auto om = out.matrix();
    const auto sm = s.matrix();
    for (std::size_t j = 0; j < rows.size(); ++j) {
        if (rows[j] >= 0)
            om.row(static_cast<Index>(j)) = sm.row(rows[j]);
        else
            om.row(static_cast<Index>(j)) = fill.values().transpose();
    }
    auto saved = std::make_shared<std::vector<Index>>(std::move(rows));
    return tape.record(std::move(out), {src}, [src, saved](const Tensor<Scalar>& dy, Tape<Scalar>& t) {
        Tensor<Scalar> dx(t.value(src).shape());
        auto dm = dx.matrix();
        const auto gm = dy.matrix();
        for (std::size_t j = 0; j < saved->size(); ++j)
            if ((*saved)[j] >= 0) dm.row((*saved)[j]) += gm.row(static_cast<Index>(j));
        t.accumulate(src, dx);
    });
}

/// Applies one layer. `params` holds {weights, bias} vars for linear/conv2d.
template <typename Scalar>
Var apply_layer(Tape<Scalar>& tape, const LayerSpec& layer, Var x, std::span<const Var> params) {
    switch (layer.kind) {
    case LayerKind::linear:
        return linear(tape, x, params[0], params[1]);
    case LayerKind::conv2d:
        return conv2d(tape, x, params[0], params[1], layer.stride, layer.pad);
    case LayerKind::maxpool2d:
        return maxpool2d(tape, x, layer.kernel, layer.stride);
    case LayerKind::relu:
        return relu(tape, x);
    case LayerKind::add:
    case LayerKind::identity:
        return identity(tape, x);
    case LayerKind::reshape:
        return reshape(tape, x, with_batch(tape.value(x).rows(), layer.shape));
    case LayerKind::flatten:
        return reshape(tape, x, Shape{tape.value(x).rows(), tape.value(x).row_size()});
    }
    throw ShapeError("unknown layer kind");
}

}  // namespace ad

/// Non-differentiable single-layer evaluation, shared by the reference interpreter.
template <typename Scalar>
Tensor<Scalar> eval_layer(const LayerSpec& layer, const Tensor<Scalar>& x, const LayerParams<Scalar>& p) {
    switch (layer.kind) {
    case LayerKind::linear:
        return ops::linear(x, p.weights, p.bias);
    case LayerKind::conv2d:
        return ops::conv2d(x, p.weights, p.bias, layer.stride, layer.pad);
    case LayerKind::maxpool2d:
        return ops::maxpool2d(x, layer.kernel, layer.stride).output;
    case LayerKind::relu:
        return ops::relu(x);
    case LayerKind::add:
    case LayerKind::identity:
        return ops::identity(x);
    case LayerKind::reshape:
        return ops::reshape(x, with_batch(x.rows(), layer.shape));
    case LayerKind::flatten:
        return ops::reshape(x, Shape{x.rows(), x.row_size()});
    }
    throw ShapeError("unknown layer kind");
}

}  // namespace d2nn
