#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "d2nn/network.hpp"
#include "d2nn/tape.hpp"

namespace d2nn {

/// Trainable parameters of a network, indexed [node][layer].
template <typename Scalar>
struct ParamStore {
    std::vector<std::vector<LayerParams<Scalar>>> nodes;

    LayerParams<Scalar>& at(std::size_t node, std::size_t layer) { return nodes.at(node).at(layer); }
    const LayerParams<Scalar>& at(std::size_t node, std::size_t layer) const {
        return nodes.at(node).at(layer);
    }

    /// Zero-valued store with the parameter shapes of `net`.
    static ParamStore zeros_like(const Network& net) {
        ParamStore s;
        s.nodes.resize(net.size());
        for (std::size_t v = 0; v < net.size(); ++v) {
            Shape in = net.input_shape(v);
            for (const auto& layer : net.node(v).layers) {
                LayerParams<Scalar> p;
                if (auto ps = layer_param_shapes(layer, in)) {
                    p.kind = layer.kind == LayerKind::linear ? LayerParams<Scalar>::Kind::linear
                                                             : LayerParams<Scalar>::Kind::conv2d;
                    p.weights = Tensor<Scalar>(ps->weights);
                    p.bias = Tensor<Scalar>(ps->bias);
                }
                s.nodes[v].push_back(std::move(p));
                in = layer_output_shape(layer, in);
            }
        }
        return s;
    }

    /// Fan-in scaled uniform weights in [-sqrt(3/fan_in), sqrt(3/fan_in)], zero biases.
    static ParamStore init(const Network& net, std::uint64_t seed) {
        ParamStore s = zeros_like(net);
        std::mt19937_64 rng(seed);
        for (auto& node : s.nodes)
            for (auto& p : node) {
                if (p.kind == LayerParams<Scalar>::Kind::none) continue;
                const Index fan_in = p.weights.size() / p.weights.dim(0);
                const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
                for (Index i = 0; i < p.weights.size(); ++i) {
                    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
                    p.weights[i] = static_cast<Scalar>((2.0 * u - 1.0) * bound);
                }
            }
        return s;
    }

    Index scalar_count() const {
        Index n = 0;
        for (const auto& node : nodes)
            for (const auto& p : node) n += p.weights.size() + p.bias.size();
        return n;
    }

    template <typename Other>
    ParamStore<Other> cast() const {
        ParamStore<Other> out;
        out.nodes.resize(nodes.size());
        for (std::size_t v = 0; v < nodes.size(); ++v)
            for (const auto& p : nodes[v]) {
                LayerParams<Other> q;
                q.kind = static_cast<typename LayerParams<Other>::Kind>(p.kind);
                if (p.kind != LayerParams<Scalar>::Kind::none) {
                    q.weights = p.weights.template cast<Other>();
                    q.bias = p.bias.template cast<Other>();
                }
                out.nodes[v].push_back(std::move(q));
            }
        return out;
    }

    friend bool operator==(const ParamStore& a, const ParamStore& b) {
        if (a.nodes.size() != b.nodes.size()) return false;
        for (std::size_t v = 0; v < a.nodes.size(); ++v) {
            if (a.nodes[v].size() != b.nodes[v].size()) return false;
            for (std::size_t l = 0; l < a.nodes[v].size(); ++l) {
                const auto& x = a.nodes[v][l];
                const auto& y = b.nodes[v][l];
                if (x.kind != y.kind || !(x.weights == y.weights) || !(x.bias == y.bias)) return false;
            }
        }
        return true;
    }
};

}  // namespace d2nn
