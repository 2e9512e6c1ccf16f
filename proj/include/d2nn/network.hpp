#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "d2nn/graph.hpp"

namespace d2nn {

/// A validated graph with its execution order, resolved edge relationships,
/// static shapes and per-node multiplication cost. Immutable once built.
class Network {
public:
    struct DataInput {
        std::size_t producer;
        std::optional<DefaultValue> default_value;
    };
    struct ControlInput {
        std::size_t controller;
        int action;  // index of the edge among the controller's outgoing control edges
    };

    /// Throws GraphError listing every violation when the graph is invalid.
    explicit Network(GraphDef graph);

    const GraphDef& def() const noexcept { return graph_; }
    std::size_t size() const noexcept { return graph_.nodes.size(); }
    const NodeDef& node(std::size_t v) const { return graph_.nodes.at(v); }
    std::size_t index_of(std::string_view id) const;
    const std::vector<std::size_t>& order() const noexcept { return order_; }
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }

    const std::vector<DataInput>& data_inputs(std::size_t v) const { return data_in_[v]; }
    const std::vector<ControlInput>& control_inputs(std::size_t v) const { return control_in_[v]; }
    /// Controllees of a control node, indexed by action.
    const std::vector<std::size_t>& control_targets(std::size_t v) const { return control_out_[v]; }
    std::size_t num_actions(std::size_t v) const { return control_out_[v].size(); }
    /// True when some outgoing data edge of v carries a default value.
    bool has_default_out(std::size_t v) const { return default_out_[v]; }

    const std::vector<std::size_t>& inputs() const noexcept { return inputs_; }
    const std::vector<std::size_t>& outputs() const noexcept { return outputs_; }
    const std::vector<std::size_t>& control_nodes() const noexcept { return controls_; }

    /// Per-example shape entering / leaving node v.
    const Shape& input_shape(std::size_t v) const { return shapes_.input[v]; }
    const Shape& output_shape(std::size_t v) const { return shapes_.output[v]; }

    /// Multiplications node v performs on one example (0 for dummies, inputs, outputs).
    Index node_cost(std::size_t v) const { return cost_[v]; }
    Index path_cost(const std::vector<std::size_t>& nodes) const;

    /// Total readout width over declared outputs and the class offset of each.
    Index class_count() const noexcept { return class_count_; }
    Index class_offset(std::size_t output_position) const { return class_offset_[output_position]; }

    /// Which function nodes execute, structurally, when every control node
    /// takes the given action (indexed by node; ignored for non-control nodes).
    std::vector<bool> simulate(const std::vector<int>& actions) const;

    /// Regular nodes executed when every control node takes its last action.
    /// Builders place the highest-capacity branch last, so this is the
    /// conventional network that costs are normalized against.
    std::vector<std::size_t> reference_path() const;

    /// Regular nodes executed when every control node takes `action`.
    std::vector<std::size_t> static_path(int action) const;

private:
    GraphDef graph_;
    std::vector<std::size_t> order_;
    std::vector<std::string> warnings_;
    std::vector<std::vector<DataInput>> data_in_;
    std::vector<std::vector<ControlInput>> control_in_;
    std::vector<std::vector<std::size_t>> control_out_;
    std::vector<bool> default_out_;
    std::vector<std::size_t> inputs_, outputs_, controls_;
    NodeShapes shapes_;
    std::vector<Index> cost_;
    Index class_count_ = 0;
    std::vector<Index> class_offset_;
};

}  // namespace d2nn
