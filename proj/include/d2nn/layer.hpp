#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "d2nn/tensor.hpp"

namespace d2nn {

enum class LayerKind { linear, conv2d, maxpool2d, relu, add, identity, reshape, flatten };

std::string_view layer_kind_name(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(std::string_view name);

/// Static description of one layer inside a node's subnet.
struct LayerSpec {
    LayerKind kind = LayerKind::identity;
    Index out = 0;     // linear: output features; conv2d: output channels
    Index kernel = 0;  // conv2d / maxpool2d square window
    Index stride = 1;
    Index pad = 0;
    Shape shape;       // reshape target, per example

    static LayerSpec linear(Index out) { return {LayerKind::linear, out, 0, 1, 0, {}}; }
    static LayerSpec conv2d(Index out, Index kernel, Index stride = 1, Index pad = 1) {
        return {LayerKind::conv2d, out, kernel, stride, pad, {}};
    }
    static LayerSpec maxpool(Index kernel, Index stride) {
        return {LayerKind::maxpool2d, 0, kernel, stride, 0, {}};
    }
    static LayerSpec relu() { return {LayerKind::relu, 0, 0, 1, 0, {}}; }
    static LayerSpec add() { return {LayerKind::add, 0, 0, 1, 0, {}}; }
    static LayerSpec identity() { return {LayerKind::identity, 0, 0, 1, 0, {}}; }
    static LayerSpec flatten() { return {LayerKind::flatten, 0, 0, 1, 0, {}}; }
    static LayerSpec reshape(Shape s) { return {LayerKind::reshape, 0, 0, 1, 0, std::move(s)}; }

    bool has_params() const { return kind == LayerKind::linear || kind == LayerKind::conv2d; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Trainable parameters of one layer; kind is none for parameter-free layers.
template <typename Scalar>
struct LayerParams {
    enum class Kind { none, linear, conv2d };
    Kind kind = Kind::none;
    Tensor<Scalar> weights;
    Tensor<Scalar> bias;
};

/// Output shape of a layer for a per-example input shape (batch dimension excluded).
Shape layer_output_shape(const LayerSpec& layer, const Shape& input);

/// Shapes of the parameters a layer needs for the given per-example input.
struct ParamShapes {
    Shape weights;
    Shape bias;
};
std::optional<ParamShapes> layer_param_shapes(const LayerSpec& layer, const Shape& input);

/// Number of scalar multiplications the layer performs on `input_shape`
/// (batch dimension included). Additions, comparisons and bias adds count zero.
Index mult_count(const LayerSpec& layer, const Shape& input_shape);

}  // namespace d2nn
