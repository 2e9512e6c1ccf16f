#include "d2nn/layer.hpp"

#include <array>
#include <utility>

namespace d2nn {

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 8> kLayerNames{{
    {LayerKind::linear, "linear"},
    {LayerKind::conv2d, "conv2d"},
    {LayerKind::maxpool2d, "maxpool"},
    {LayerKind::relu, "relu"},
    {LayerKind::add, "add"},
    {LayerKind::identity, "identity"},
    {LayerKind::reshape, "reshape"},
    {LayerKind::flatten, "flatten"},
}};

Index window_out(Index in, Index kernel, Index stride, Index pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

void require_spatial(const LayerSpec& layer, const Shape& input) {
    if (input.size() != 3)
        throw ShapeError(std::string(layer_kind_name(layer.kind)) +
                         " expects a [c,h,w] example shape, got " + shape_string(input));
    if (layer.stride < 1)
        throw ShapeError(std::string(layer_kind_name(layer.kind)) + " stride must be >= 1");
    if (layer.kernel < 1 || layer.kernel > input[1] + 2 * layer.pad ||
        layer.kernel > input[2] + 2 * layer.pad)
        throw ShapeError(std::string(layer_kind_name(layer.kind)) + " kernel " +
                         std::to_string(layer.kernel) + " does not fit padded input " +
                         shape_string(input) + " (pad " + std::to_string(layer.pad) + ")");
}

}  // namespace

std::string_view layer_kind_name(LayerKind kind) {
    for (const auto& [k, name] : kLayerNames)
        if (k == kind) return name;
    return "unknown";
}

std::optional<LayerKind> parse_layer_kind(std::string_view name) {
    for (const auto& [k, n] : kLayerNames)
        if (n == name) return k;
    return std::nullopt;
}

Shape layer_output_shape(const LayerSpec& layer, const Shape& input) {
    switch (layer.kind) {
    case LayerKind::linear:
        if (input.size() != 1)
            throw ShapeError("linear expects a flat example shape, got " + shape_string(input) +
                             " (insert flatten)");
        if (layer.out < 1) throw ShapeError("linear needs out >= 1");
        return {layer.out};
    case LayerKind::conv2d: {
        require_spatial(layer, input);
        if (layer.out < 1) throw ShapeError("conv2d needs out >= 1");
        return {layer.out, window_out(input[1], layer.kernel, layer.stride, layer.pad),
                window_out(input[2], layer.kernel, layer.stride, layer.pad)};
    }
    case LayerKind::maxpool2d:
        require_spatial(layer, input);
        return {input[0], window_out(input[1], layer.kernel, layer.stride, 0),
                window_out(input[2], layer.kernel, layer.stride, 0)};
    case LayerKind::relu:
    case LayerKind::add:
    case LayerKind::identity:
        return input;
    case LayerKind::flatten:
        return {shape_size(input)};
    case LayerKind::reshape:
        if (shape_size(layer.shape) != shape_size(input))
            throw ShapeError("cannot reshape " + shape_string(input) + " to " +
                             shape_string(layer.shape));
        return layer.shape;
    }
    throw ShapeError("unknown layer kind");
}

std::optional<ParamShapes> layer_param_shapes(const LayerSpec& layer, const Shape& input) {
    if (layer.kind == LayerKind::linear) {
        layer_output_shape(layer, input);
        return ParamShapes{{layer.out, input[0]}, {layer.out}};
    }
    if (layer.kind == LayerKind::conv2d) {
        layer_output_shape(layer, input);
        return ParamShapes{{layer.out, input[0], layer.kernel, layer.kernel}, {layer.out}};
    }
    return std::nullopt;
}

Index mult_count(const LayerSpec& layer, const Shape& input_shape) {
    if (input_shape.empty()) throw ShapeError("mult_count needs a batched input shape");
    const Index n = input_shape[0];
    const Shape in = example_shape(input_shape);
    const Shape out = layer_output_shape(layer, in);
    switch (layer.kind) {
    case LayerKind::linear:
        return n * in[0] * layer.out;
    case LayerKind::conv2d:
        return n * out[1] * out[2] * layer.out * in[0] * layer.kernel * layer.kernel;
    default:
        return 0;
    }
}

}  // namespace d2nn
