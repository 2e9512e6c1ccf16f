#pragma once

// Generator of small valid dynamic graphs for property tests.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "d2nn/graph.hpp"

namespace oracle {

struct RandomGraphOptions {
    int min_nodes = 3;
    int max_nodes = 9;
    bool image_input = false;  // conv stem on a 1x4x4 input instead of a flat vector
};

namespace detail {

template <typename Rng>
std::size_t pick(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % n);
}

template <typename Rng>
bool coin(Rng& rng, double p) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

}  // namespace detail

/// Random graph satisfying every structural rule. All function nodes emit
/// a width-D vector so any of them can feed any other.
template <typename Rng>
d2nn::GraphDef random_graph(Rng& rng, const RandomGraphOptions& opt = {}) {
    using namespace d2nn;
    for (;;) {
        GraphDef g;
        std::vector<std::string> sources;  // nodes whose output may feed a data edge
        const d2nn::Index width = opt.image_input ? 4 : 2 + static_cast<d2nn::Index>(detail::pick(rng, 3));
        if (opt.image_input) {
            g.add_node({"x", NodeKind::input, {}, {1, 4, 4}});
            g.add_node({"stem", NodeKind::regular,
                        {LayerSpec::conv2d(1, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool(2, 2), LayerSpec::flatten()}});
            g.connect("x", "stem");
            sources.push_back("stem");
        } else {
            g.add_node({"x", NodeKind::input, {}, {width}});
            sources.push_back("x");
        }

        auto random_default = [&]() -> std::optional<DefaultValue> {
            if (!detail::coin(rng, 0.3)) return std::nullopt;
            if (detail::coin(rng, 0.5)) return DefaultValue{};
            return DefaultValue{DefaultValue::Kind::constant,
                                std::round(std::uniform_real_distribution<double>(-2, 2)(rng) * 4) / 4};
        };
        auto add_data_parents = [&](const std::string& id, std::size_t count) {
            std::vector<std::string> chosen;
            while (chosen.size() < count) {
                const std::string& p = sources[detail::pick(rng, sources.size())];
                if (std::find(chosen.begin(), chosen.end(), p) == chosen.end()) chosen.push_back(p);
                if (chosen.size() == sources.size()) break;
            }
            for (const auto& p : chosen) g.connect(p, id, p == "x" ? std::nullopt : random_default());
            return chosen.size();
        };

        struct Slot {
            std::string controller;
        };
        std::vector<Slot> open_slots;
        int counter = 0;
        auto make_function = [&](bool allow_control) {
            const std::string id = "n" + std::to_string(counter++);
            const bool control = allow_control && detail::coin(rng, 0.35);
            const bool dummy = !control && detail::coin(rng, 0.12);
            if (control) {
                const d2nn::Index k = 2 + static_cast<d2nn::Index>(detail::pick(rng, 2));
                std::vector<LayerSpec> layers;
                if (detail::coin(rng, 0.5)) layers = {LayerSpec::linear(width), LayerSpec::relu()};
                layers.push_back(LayerSpec::linear(k));
                g.add_node({id, NodeKind::control, layers});
                add_data_parents(id, 1);
                for (d2nn::Index a = 0; a < k; ++a) open_slots.push_back({id});
                return;
            }
            if (dummy) {
                NodeDef d{id, NodeKind::dummy, {}, {width}};
                d.constant = std::round(std::uniform_real_distribution<double>(-1, 1)(rng) * 8) / 8;
                g.add_node(d);
            } else {
                g.add_node({id, NodeKind::regular, {}});
            }
            if (!open_slots.empty() && detail::coin(rng, 0.7)) {
                const std::size_t s = detail::pick(rng, open_slots.size());
                // Control edges are numbered in edge order, so actions follow slot order.
                g.control(open_slots[s].controller, id);
                open_slots.erase(open_slots.begin() + static_cast<std::ptrdiff_t>(s));
            }
            if (!dummy) {
                const std::size_t parents = add_data_parents(id, 1 + detail::pick(rng, 2));
                auto& layers = g.nodes.back().layers;
                if (parents > 1) layers.push_back(LayerSpec::add());
                layers.push_back(LayerSpec::linear(width));
                if (detail::coin(rng, 0.6)) layers.push_back(LayerSpec::relu());
                if (detail::coin(rng, 0.1)) layers.push_back(LayerSpec::reshape({width}));
                if (detail::coin(rng, 0.1)) layers.push_back(LayerSpec::identity());
            }
            sources.push_back(id);
        };

        const int n = opt.min_nodes + static_cast<int>(detail::pick(rng, static_cast<std::size_t>(opt.max_nodes - opt.min_nodes + 1)));
        for (int i = 0; i < n; ++i) make_function(i + 2 < n);
        while (!open_slots.empty()) {
            const std::size_t before = open_slots.size();
            make_function(false);
            if (open_slots.size() == before) {
                // Not assigned by chance; force the next one.
                const std::string& id = g.nodes.back().id;
                g.control(open_slots.front().controller, id);
                open_slots.erase(open_slots.begin());
            }
        }

        const int outputs = 1 + static_cast<int>(detail::pick(rng, 2));
        std::vector<std::string> fn_sources(sources.begin() + 1, sources.end());
        if (fn_sources.empty()) continue;
        for (int o = 0; o < outputs; ++o) {
            const std::string id = "y" + std::to_string(o);
            g.add_node({id, NodeKind::output});
            const std::size_t k = 1 + detail::pick(rng, std::min<std::size_t>(2, fn_sources.size()));
            std::vector<std::string> chosen;
            while (chosen.size() < k) {
                const std::string& p = fn_sources[fn_sources.size() - 1 - detail::pick(rng, std::min<std::size_t>(4, fn_sources.size()))];
                if (std::find(chosen.begin(), chosen.end(), p) == chosen.end()) chosen.push_back(p);
            }
            for (const auto& p : chosen) g.connect(p, id, random_default());
        }
        if (validate(g).ok()) return g;
    }
}

}  // namespace oracle
