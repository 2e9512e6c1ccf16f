#include "d2nn/graph.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <tuple>
#include <unordered_map>

namespace d2nn {

namespace {

constexpr std::array<std::pair<NodeKind, std::string_view>, 5> kNodeNames{{
    {NodeKind::input, "input"},
    {NodeKind::output, "output"},
    {NodeKind::regular, "regular"},
    {NodeKind::control, "control"},
    {NodeKind::dummy, "dummy"},
}};

std::unordered_map<std::string_view, std::size_t> index_nodes(const GraphDef& g) {
    std::unordered_map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) index.emplace(g.nodes[i].id, i);
    return index;
}

std::string edge_name(const EdgeDef& e) {
    return e.from + " -> " + e.to + (e.kind == EdgeKind::control ? " [control]" : "");
}

}  // namespace

std::string_view node_kind_name(NodeKind kind) {
    for (const auto& [k, name] : kNodeNames)
        if (k == kind) return name;
    return "unknown";
}

std::optional<NodeKind> parse_node_kind(std::string_view name) {
    for (const auto& [k, n] : kNodeNames)
        if (n == name) return k;
    return std::nullopt;
}

const NodeDef* GraphDef::find(std::string_view id) const {
    for (const auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

std::vector<std::string> GraphDef::input_ids() const {
    std::vector<std::string> ids;
    for (const auto& n : nodes)
        if (n.kind == NodeKind::input) ids.push_back(n.id);
    return ids;
}

std::vector<std::string> GraphDef::output_ids() const {
    std::vector<std::string> ids;
    for (const auto& n : nodes)
        if (n.kind == NodeKind::output) ids.push_back(n.id);
    return ids;
}

bool ValidationReport::has(Violation::Kind kind) const {
    return std::any_of(violations.begin(), violations.end(),
                       [kind](const Violation& v) { return v.kind == kind; });
}

namespace {

/// Kahn's algorithm over the resolvable edges; returns the order and whether it is complete.
std::pair<std::vector<std::size_t>, bool> kahn(const GraphDef& g) {
    const auto index = index_nodes(g);
    const std::size_t n = g.nodes.size();
    std::vector<std::vector<std::size_t>> children(n);
    std::vector<std::size_t> indegree(n, 0);
    for (const auto& e : g.edges) {
        auto f = index.find(e.from), t = index.find(e.to);
        if (f == index.end() || t == index.end()) continue;
        children[f->second].push_back(t->second);
        ++indegree[t->second];
    }
    auto later = [&](std::size_t a, std::size_t b) { return g.nodes[a].id > g.nodes[b].id; };
    std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(later)> ready(later);
    for (std::size_t i = 0; i < n; ++i)
        if (indegree[i] == 0) ready.push(i);
    std::vector<std::size_t> order;
    order.reserve(n);
    while (!ready.empty()) {
        const std::size_t v = ready.top();
        ready.pop();
        order.push_back(v);
        for (std::size_t c : children[v])
            if (--indegree[c] == 0) ready.push(c);
    }
    const bool complete = order.size() == n;
    return {std::move(order), complete};
}

}  // namespace

std::vector<std::size_t> topo_order(const GraphDef& g) {
    auto [order, complete] = kahn(g);
    if (!complete) throw GraphError("graph contains a cycle");
    return order;
}

NodeShapes infer_shapes(const GraphDef& g, const std::vector<std::size_t>& order) {
    const auto index = index_nodes(g);
    NodeShapes s{std::vector<Shape>(g.nodes.size()), std::vector<Shape>(g.nodes.size())};
    std::vector<std::vector<std::size_t>> data_parents(g.nodes.size());
    for (const auto& e : g.edges) {
        if (e.kind != EdgeKind::data) continue;
        auto f = index.find(e.from), t = index.find(e.to);
        if (f != index.end() && t != index.end()) data_parents[t->second].push_back(f->second);
    }
    for (std::size_t v : order) {
        const NodeDef& node = g.nodes[v];
        const auto& parents = data_parents[v];
        switch (node.kind) {
        case NodeKind::input:
        case NodeKind::dummy:
            s.input[v] = node.shape;
            s.output[v] = node.shape;
            continue;
        case NodeKind::output:
        case NodeKind::regular:
        case NodeKind::control:
            break;
        }
        if (parents.empty()) continue;
        Shape in = s.output[parents.front()];
        for (std::size_t p : parents)
            if (s.output[p] != in)
                throw ShapeError("node " + node.id + ": data inputs disagree in shape, " +
                                 shape_string(in) + " from " + g.nodes[parents.front()].id + " vs " +
                                 shape_string(s.output[p]) + " from " + g.nodes[p].id);
        s.input[v] = in;
        for (const auto& layer : node.layers) {
            try {
                in = layer_output_shape(layer, in);
            } catch (const ShapeError& err) {
                throw ShapeError("node " + node.id + ": " + err.what());
            }
        }
        s.output[v] = in;
    }
    return s;
}

ValidationReport validate(const GraphDef& g) {
    ValidationReport report;
    auto violate = [&](Violation::Kind k, std::string msg) {
        report.violations.push_back({k, std::move(msg)});
    };

    if (g.nodes.empty()) violate(Violation::Kind::node_kind, "no nodes defined");

    std::unordered_map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
        if (!index.emplace(g.nodes[i].id, i).second)
            violate(Violation::Kind::duplicate_node, "duplicate node id " + g.nodes[i].id);

    const std::size_t n = g.nodes.size();
    std::vector<std::vector<const EdgeDef*>> out(n), in(n);
    std::set<std::tuple<std::string, std::string, EdgeKind>> seen;
    for (const auto& e : g.edges) {
        auto f = index.find(e.from), t = index.find(e.to);
        if (f == index.end() || t == index.end()) {
            violate(Violation::Kind::dangling_edge,
                    "dangling edge " + edge_name(e) + ": unknown node " +
                        (f == index.end() ? e.from : e.to));
            continue;
        }
        if (!seen.emplace(e.from, e.to, e.kind).second) {
            violate(Violation::Kind::duplicate_edge, "duplicate edge " + edge_name(e));
            continue;
        }
        if (e.from == e.to) violate(Violation::Kind::cycle, "self loop on " + e.from);
        if (e.kind == EdgeKind::control && e.default_value)
            violate(Violation::Kind::node_kind,
                    "control edge " + edge_name(e) + " cannot carry a default value");
        out[f->second].push_back(&e);
        in[t->second].push_back(&e);
    }

    auto count = [](const std::vector<const EdgeDef*>& edges, EdgeKind kind) {
        return std::count_if(edges.begin(), edges.end(),
                             [kind](const EdgeDef* e) { return e->kind == kind; });
    };

    for (std::size_t i = 0; i < n; ++i) {
        const NodeDef& node = g.nodes[i];
        const auto out_data = count(out[i], EdgeKind::data);
        const auto out_ctrl = count(out[i], EdgeKind::control);
        const auto in_data = count(in[i], EdgeKind::data);
        const auto in_ctrl = count(in[i], EdgeKind::control);
        const std::string& id = node.id;

        if (out_data > 0 && out_ctrl > 0)
            violate(Violation::Kind::mixed_outgoing_edges,
                    "node " + id + " mixes outgoing data and control edges");
        if (in_ctrl > 0 && out_ctrl > 0)
            violate(Violation::Kind::controlled_node_controls,
                    "node " + id + " has an incoming control edge and an outgoing control edge");

        switch (node.kind) {
        case NodeKind::input:
            if (!in[i].empty())
                violate(Violation::Kind::node_kind, "input node " + id + " has incoming edges");
            if (out_ctrl > 0)
                violate(Violation::Kind::node_kind, "input node " + id + " has outgoing control edges");
            if (node.shape.empty())
                violate(Violation::Kind::shape, "input node " + id + " declares no shape");
            break;
        case NodeKind::output:
            if (!out[i].empty())
                violate(Violation::Kind::node_kind, "output node " + id + " has outgoing edges");
            if (in_ctrl > 0)
                violate(Violation::Kind::node_kind, "output node " + id + " has incoming control edges");
            if (in_data == 0)
                violate(Violation::Kind::node_kind, "output node " + id + " has no data input");
            break;
        case NodeKind::control: {
            if (out_data > 0)
                violate(Violation::Kind::node_kind, "control node " + id + " has outgoing data edges");
            if (out_ctrl == 0)
                violate(Violation::Kind::control_arity, "control node " + id + " has no control edges");
            if (in_data == 0)
                violate(Violation::Kind::node_kind, "control node " + id + " has no data input");
            if (node.layers.empty() || node.layers.back().kind != LayerKind::linear)
                violate(Violation::Kind::control_arity,
                        "control node " + id + " must end in a linear layer with one output per action");
            else if (out_ctrl > 0 && node.layers.back().out != out_ctrl)
                violate(Violation::Kind::control_arity,
                        "control node " + id + " emits " + std::to_string(node.layers.back().out) +
                            " action values for " + std::to_string(out_ctrl) + " control edges");
            if (out_ctrl == 1)
                report.warnings.push_back("control node " + id +
                                          " has a single control edge; it is always active");
            break;
        }
        case NodeKind::regular:
            if (out_ctrl > 0)
                violate(Violation::Kind::node_kind,
                        "regular node " + id + " has outgoing control edges (declare it control)");
            if (in_data == 0)
                violate(Violation::Kind::node_kind,
                        "regular node " + id + " has no data input (declare it dummy)");
            if (node.layers.empty())
                violate(Violation::Kind::node_kind, "regular node " + id + " has an empty subnet");
            break;
        case NodeKind::dummy:
            if (in_data > 0)
                violate(Violation::Kind::node_kind, "dummy node " + id + " has data inputs");
            if (out_ctrl > 0)
                violate(Violation::Kind::node_kind, "dummy node " + id + " has outgoing control edges");
            if (!node.layers.empty())
                violate(Violation::Kind::node_kind, "dummy node " + id + " has a subnet");
            if (node.shape.empty())
                violate(Violation::Kind::shape, "dummy node " + id + " declares no shape");
            break;
        }
        if ((node.kind == NodeKind::regular || node.kind == NodeKind::control) && in_data > 1 &&
            (node.layers.empty() || node.layers.front().kind != LayerKind::add))
            violate(Violation::Kind::node_kind,
                    "node " + id + " has " + std::to_string(in_data) +
                        " data inputs but its subnet does not start with add");
        for (const EdgeDef* e : out[i]) {
            if (e->kind != EdgeKind::control) continue;
            const NodeDef& target = g.nodes[index.at(e->to)];
            if (target.kind == NodeKind::input || target.kind == NodeKind::output)
                violate(Violation::Kind::node_kind,
                        "control edge " + edge_name(*e) + " targets a non-function node");
        }
    }

    auto [order, acyclic] = kahn(g);
    if (!acyclic) {
        std::vector<bool> placed(n, false);
        for (std::size_t v : order) placed[v] = true;
        std::string members;
        for (std::size_t i = 0; i < n; ++i)
            if (!placed[i]) members += (members.empty() ? "" : ", ") + g.nodes[i].id;
        violate(Violation::Kind::cycle, "cycle through nodes " + members);
    }

    // Every output must be reachable from some input along data edges.
    std::vector<bool> reached(n, false);
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < n; ++i)
        if (g.nodes[i].kind == NodeKind::input) {
            reached[i] = true;
            stack.push_back(i);
        }
    while (!stack.empty()) {
        const std::size_t v = stack.back();
        stack.pop_back();
        for (const EdgeDef* e : out[v]) {
            if (e->kind != EdgeKind::data) continue;
            const std::size_t t = index.at(e->to);
            if (!reached[t]) {
                reached[t] = true;
                stack.push_back(t);
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (g.nodes[i].kind == NodeKind::output && !reached[i])
            violate(Violation::Kind::unreachable_output,
                    "output node " + g.nodes[i].id + " is not reachable from any input");
    if (g.output_ids().empty() && !g.nodes.empty())
        violate(Violation::Kind::node_kind, "graph declares no output node");
    if (g.input_ids().empty() && !g.nodes.empty())
        violate(Violation::Kind::node_kind, "graph declares no input node");

    if (report.ok()) {
        try {
            infer_shapes(g, order);
        } catch (const ShapeError& err) {
            violate(Violation::Kind::shape, err.what());
        }
    }
    return report;
}

}  // namespace d2nn
