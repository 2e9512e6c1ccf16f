#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "d2nn/layer.hpp"

namespace d2nn {

enum class NodeKind { input, output, regular, control, dummy };

std::string_view node_kind_name(NodeKind kind);
std::optional<NodeKind> parse_node_kind(std::string_view name);

struct NodeDef {
    std::string id;
    NodeKind kind = NodeKind::regular;
    std::vector<LayerSpec> layers;  // empty for input / output / dummy
    Shape shape;                    // input: per-example input shape; dummy: emitted shape
    double constant = 0.0;          // dummy only

    bool is_function() const {
        return kind == NodeKind::regular || kind == NodeKind::control || kind == NodeKind::dummy;
    }

    friend bool operator==(const NodeDef&, const NodeDef&) = default;
};

enum class EdgeKind { data, control };

/// Value a data edge carries when its producer does not execute.
struct DefaultValue {
    enum class Kind { zeros, constant };
    Kind kind = Kind::zeros;
    double value = 0.0;

    double fill() const { return kind == Kind::zeros ? 0.0 : value; }
    friend bool operator==(const DefaultValue&, const DefaultValue&) = default;
};

struct EdgeDef {
    std::string from;
    std::string to;
    EdgeKind kind = EdgeKind::data;
    std::optional<DefaultValue> default_value;

    friend bool operator==(const EdgeDef&, const EdgeDef&) = default;
};

/// Static model description. Edge order is significant: the i-th outgoing
/// control edge of a control node is action i, and a node's data inputs are
/// ordered by their position in `edges`.
struct GraphDef {
    std::vector<NodeDef> nodes;
    std::vector<EdgeDef> edges;

    const NodeDef* find(std::string_view id) const;
    std::vector<std::string> input_ids() const;
    std::vector<std::string> output_ids() const;

    GraphDef& add_node(NodeDef node) {
        nodes.push_back(std::move(node));
        return *this;
    }
    GraphDef& connect(std::string from, std::string to,
                      std::optional<DefaultValue> default_value = std::nullopt) {
        edges.push_back({std::move(from), std::move(to), EdgeKind::data, default_value});
        return *this;
    }
    GraphDef& control(std::string from, std::string to) {
        edges.push_back({std::move(from), std::move(to), EdgeKind::control, std::nullopt});
        return *this;
    }

    friend bool operator==(const GraphDef&, const GraphDef&) = default;
};

struct Violation {
    enum class Kind {
        cycle,
        duplicate_edge,
        mixed_outgoing_edges,      // restriction 1
        controlled_node_controls,  // restriction 2
        dangling_edge,
        duplicate_node,
        control_arity,
        node_kind,
        unreachable_output,
        shape,
    };
    Kind kind;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    std::vector<std::string> warnings;

    bool ok() const { return violations.empty(); }
    bool has(Violation::Kind kind) const;
};

/// Reports every structural violation, not only the first.
ValidationReport validate(const GraphDef& g);

/// Indices into g.nodes; parents (data and control) precede children, ties
/// broken by lexicographic node id. Throws GraphError on a cycle.
std::vector<std::size_t> topo_order(const GraphDef& g);

/// Per-example shapes flowing through each node (batch dimension excluded).
struct NodeShapes {
    std::vector<Shape> input;   // shape entering the subnet (after merging data inputs)
    std::vector<Shape> output;  // shape the node emits; empty for nodes without data output
};

/// Static shape propagation from the declared input shapes. Throws ShapeError
/// naming the node on the first nonconforming layer.
NodeShapes infer_shapes(const GraphDef& g, const std::vector<std::size_t>& order);

}  // namespace d2nn
