#include "d2nn/archlib.hpp"

#include <algorithm>
#include <limits>

#include "d2nn/error.hpp"

namespace d2nn {

namespace {

NodeDef regular(std::string id, std::vector<LayerSpec> layers) {
    return {std::move(id), NodeKind::regular, std::move(layers)};
}

NodeDef control(std::string id, std::vector<LayerSpec> layers) {
    return {std::move(id), NodeKind::control, std::move(layers)};
}

NodeDef dummy(std::string id) {
    NodeDef d{std::move(id), NodeKind::dummy, {}, {1}};
    return d;
}

std::vector<LayerSpec> stem(const ArchParams& p) {
    return {LayerSpec::conv2d(p.stem_filters, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool(2, 2)};
}

// Pools a spatial map down to `out` x `out` and reads out one value per action.
std::vector<LayerSpec> tiny_controller(Index spatial, Index actions, Index out = 2) {
    std::vector<LayerSpec> layers;
    if (spatial > out) layers.push_back(LayerSpec::maxpool(spatial / out, spatial / out));
    layers.push_back(LayerSpec::flatten());
    layers.push_back(LayerSpec::linear(actions));
    return layers;
}

std::vector<LayerSpec> mlp_head(Index hidden, Index classes) {
    return {LayerSpec::flatten(), LayerSpec::linear(hidden), LayerSpec::relu(), LayerSpec::linear(classes)};
}

void check(const ArchParams& p) {
    if (p.image_size < 8 || p.channels < 1 || p.classes < 1 || p.stem_filters < 1 || p.high_filters < 1 ||
        p.high_hidden < 1 || p.low_hidden < 1 || p.exit_hidden < 1 || p.control_hidden < 1 || p.head_hidden < 1)
        throw GraphError("architecture parameters must be positive (image size at least 8)");
}

GraphDef finish(GraphDef g) {
    const Network net(g);
    const auto bad = controller_budget_violations(net);
    if (!bad.empty()) {
        std::string msg = "controller budget exceeded:";
        for (const auto& b : bad) msg += "\n  " + b;
        throw GraphError(msg);
    }
    return g;
}

}  // namespace

std::vector<std::string> controller_budget_violations(const Network& net, double ratio) {
    std::vector<std::string> out;
    for (std::size_t q : net.control_nodes()) {
        Index cheapest = std::numeric_limits<Index>::max();
        for (std::size_t t : net.control_targets(q))
            if (net.node(t).kind == NodeKind::regular) cheapest = std::min(cheapest, net.node_cost(t));
        if (cheapest == std::numeric_limits<Index>::max()) continue;
        if (static_cast<double>(net.node_cost(q)) > ratio * static_cast<double>(cheapest))
            out.push_back("control node " + net.node(q).id + " costs " + std::to_string(net.node_cost(q)) +
                          " multiplications, more than " + std::to_string(ratio) + " of " +
                          std::to_string(cheapest));
    }
    return out;
}

GraphDef build_high_low(const ArchParams& p) {
    check(p);
    GraphDef g;
    g.add_node({"x", NodeKind::input, {}, {p.channels, p.image_size, p.image_size}});
    g.add_node(regular("N1", stem(p)));
    g.add_node(control("Q", tiny_controller(p.image_size / 2, 2, 1)));
    g.add_node(regular("N2", {LayerSpec::conv2d(p.high_filters, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool(2, 2),
                              LayerSpec::flatten(), LayerSpec::linear(p.high_hidden), LayerSpec::relu(),
                              LayerSpec::linear(p.classes)}));
    std::vector<LayerSpec> low{LayerSpec::maxpool(4, 4)};
    for (auto& l : mlp_head(p.low_hidden, p.classes)) low.push_back(l);
    g.add_node(regular("N3", std::move(low)));
    g.add_node({"y", NodeKind::output});
    g.connect("x", "N1").connect("N1", "Q").connect("N1", "N2").connect("N1", "N3");
    g.control("Q", "N3").control("Q", "N2");
    g.connect("N2", "y").connect("N3", "y");
    return finish(std::move(g));
}

GraphDef build_cascade(const ArchParams& p) {
    check(p);
    if (p.stages < 2) throw GraphError("cascade needs at least 2 stages");
    GraphDef g;
    g.add_node({"x", NodeKind::input, {}, {p.channels, p.image_size, p.image_size}});
    g.add_node(regular("N1", stem(p)));
    g.add_node({"y", NodeKind::output});
    g.connect("x", "N1");

    std::string features = "N1";
    Index width = p.stem_filters, spatial = p.image_size / 2;
    int next = 2;
    for (Index s = 1; s < p.stages; ++s) {
        const std::string q = "Q" + std::to_string(s);
        const std::string head = "N" + std::to_string(next++);
        const std::string cont = "N" + std::to_string(next++);
        g.add_node(control(q, tiny_controller(spatial, 2, 1)));
        g.add_node(regular(head, mlp_head(p.exit_hidden, p.classes)));
        if (s + 1 < p.stages) {
            width *= 2;
            std::vector<LayerSpec> block{LayerSpec::conv2d(width, 3, 1, 1), LayerSpec::relu()};
            if (spatial > 4) {
                block.push_back(LayerSpec::maxpool(2, 2));
                spatial /= 2;
            }
            g.add_node(regular(cont, block));
        } else {
            g.add_node(regular(cont, mlp_head(p.high_hidden, p.classes)));
        }
        g.connect(features, q).connect(features, head).connect(features, cont);
        g.control(q, head).control(q, cont);
        g.connect(head, "y");
        if (s + 1 == p.stages) g.connect(cont, "y");
        features = cont;
    }
    return finish(std::move(g));
}

GraphDef build_chain(const ArchParams& p) {
    check(p);
    if (p.stages < 1) throw GraphError("chain needs at least 1 link");
    GraphDef g;
    g.add_node({"x", NodeKind::input, {}, {p.channels, p.image_size, p.image_size}});
    g.add_node(regular("N1", stem(p)));
    g.connect("x", "N1");
    const Index spatial = p.image_size / 2;
    std::string prev = "N1";
    for (Index i = 1; i <= p.stages; ++i) {
        const std::string k = std::to_string(i);
        g.add_node(control("Q" + k, tiny_controller(spatial, 2)));
        g.add_node(regular("L" + k, {LayerSpec::conv2d(p.stem_filters, 1, 1, 0)}));
        g.add_node(regular("H" + k, {LayerSpec::conv2d(p.stem_filters, 3, 1, 1)}));
        g.add_node(regular("M" + k, {LayerSpec::add(), LayerSpec::relu()}));
        g.connect(prev, "Q" + k).connect(prev, "L" + k).connect(prev, "H" + k);
        g.control("Q" + k, "L" + k).control("Q" + k, "H" + k);
        g.connect("L" + k, "M" + k, DefaultValue{}).connect("H" + k, "M" + k, DefaultValue{});
        prev = "M" + k;
    }
    g.add_node(regular("head", {LayerSpec::flatten(), LayerSpec::linear(p.classes)}));
    g.add_node({"y", NodeKind::output});
    g.connect(prev, "head").connect("head", "y");
    return finish(std::move(g));
}

GraphDef build_hierarchical(const ArchParams& p) {
    check(p);
    GraphDef g;
    g.add_node({"x", NodeKind::input, {}, {p.channels, p.image_size, p.image_size}});
    g.add_node(regular("N1", stem(p)));
    g.connect("x", "N1");
    const Index spatial = p.image_size / 4;  // after the branch pooling
    const std::vector<std::pair<std::string, std::vector<std::string>>> branches = {
        {"N2", {"N4", "N5"}}, {"N3", {"N6", "N7", "N8"}}};
    int output = 1, leaf_control = 3;
    std::vector<std::string> outputs;
    for (std::size_t b = 0; b < branches.size(); ++b) {
        const auto& [branch, leaves] = branches[b];
        const std::string q = "Q" + std::to_string(b + 1), d = "D" + std::to_string(b + 1);
        g.add_node(control(q, {LayerSpec::maxpool(3, 2), LayerSpec::flatten(), LayerSpec::linear(p.control_hidden),
                               LayerSpec::relu(), LayerSpec::linear(2)}));
        g.add_node(dummy(d));
        g.add_node(regular(branch, {LayerSpec::conv2d(2 * p.stem_filters, 3, 1, 1), LayerSpec::relu(),
                                    LayerSpec::maxpool(2, 2)}));
        g.connect("N1", q).connect("N1", branch);
        g.control(q, d).control(q, branch);
        for (const auto& leaf : leaves) {
            g.add_node(regular(leaf, mlp_head(p.head_hidden, p.classes)));
            g.connect(branch, leaf);
            if (p.leaf_controllers) {
                const std::string lq = "Q" + std::to_string(leaf_control), ld = "D" + std::to_string(leaf_control);
                ++leaf_control;
                g.add_node(control(lq, tiny_controller(spatial, 2)));
                g.add_node(dummy(ld));
                g.connect(branch, lq);
                g.control(lq, ld).control(lq, leaf);
            }
            outputs.push_back(leaf);
        }
    }
    for (const auto& leaf : outputs) {
        const std::string y = "y" + std::to_string(output++);
        g.add_node({y, NodeKind::output});
        g.connect(leaf, y);
    }
    return finish(std::move(g));
}

}  // namespace d2nn
