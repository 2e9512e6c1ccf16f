#include "d2nn/network.hpp"

#include <algorithm>
#include <unordered_map>

namespace d2nn {

Network::Network(GraphDef graph) : graph_(std::move(graph)) {
    const ValidationReport report = validate(graph_);
    if (!report.ok()) {
        std::string msg = "invalid graph:";
        for (const auto& v : report.violations) msg += "\n  " + v.message;
        throw GraphError(msg);
    }
    warnings_ = report.warnings;
    order_ = topo_order(graph_);

    const std::size_t n = graph_.nodes.size();
    std::unordered_map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) index.emplace(graph_.nodes[i].id, i);

    data_in_.resize(n);
    control_in_.resize(n);
    control_out_.resize(n);
    default_out_.assign(n, false);
    for (const auto& e : graph_.edges) {
        const std::size_t f = index.at(e.from), t = index.at(e.to);
        if (e.kind == EdgeKind::data) {
            data_in_[t].push_back({f, e.default_value});
            if (e.default_value) default_out_[f] = true;
        } else {
            control_in_[t].push_back({f, static_cast<int>(control_out_[f].size())});
            control_out_[f].push_back(t);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        switch (graph_.nodes[i].kind) {
        case NodeKind::input: inputs_.push_back(i); break;
        case NodeKind::output: outputs_.push_back(i); break;
        case NodeKind::control: controls_.push_back(i); break;
        default: break;
        }
    }

    shapes_ = infer_shapes(graph_, order_);
    cost_.assign(n, 0);
    for (std::size_t v = 0; v < n; ++v) {
        Shape in = shapes_.input[v];
        for (const auto& layer : graph_.nodes[v].layers) {
            cost_[v] += mult_count(layer, with_batch(1, in));
            in = layer_output_shape(layer, in);
        }
    }
    for (std::size_t o : outputs_) {
        class_offset_.push_back(class_count_);
        class_count_ += shape_size(shapes_.output[o]);
    }
}

std::size_t Network::index_of(std::string_view id) const {
    for (std::size_t i = 0; i < graph_.nodes.size(); ++i)
        if (graph_.nodes[i].id == id) return i;
    throw GraphError("unknown node " + std::string(id));
}

Index Network::path_cost(const std::vector<std::size_t>& nodes) const {
    Index total = 0;
    for (std::size_t v : nodes) total += cost_.at(v);
    return total;
}

std::vector<bool> Network::simulate(const std::vector<int>& actions) const {
    const std::size_t n = size();
    std::vector<bool> executed(n, false), non_null(n, false);
    for (std::size_t v : order_) {
        const NodeDef& node = graph_.nodes[v];
        if (node.kind == NodeKind::input) {
            non_null[v] = true;
            continue;
        }
        bool inputs_ok = true;
        bool any_input = false;
        for (const auto& d : data_in_[v]) {
            const bool ok = non_null[d.producer] || d.default_value.has_value();
            inputs_ok = inputs_ok && ok;
            any_input = any_input || ok;
        }
        if (node.kind == NodeKind::output) {
            non_null[v] = any_input;
            continue;
        }
        bool control_ok = control_in_[v].empty();
        for (const auto& c : control_in_[v])
            control_ok = control_ok || (executed[c.controller] && actions[c.controller] == c.action);
        executed[v] = inputs_ok && control_ok;
        non_null[v] = executed[v];
    }
    return executed;
}

std::vector<std::size_t> Network::static_path(int action) const {
    std::vector<int> actions(size(), 0);
    for (std::size_t q : controls_) {
        const int last = static_cast<int>(num_actions(q)) - 1;
        actions[q] = action < 0 ? last : std::min(action, last);
    }
    const auto executed = simulate(actions);
    std::vector<std::size_t> path;
    for (std::size_t v = 0; v < size(); ++v)
        if (executed[v] && graph_.nodes[v].kind == NodeKind::regular) path.push_back(v);
    return path;
}

std::vector<std::size_t> Network::reference_path() const { return static_path(-1); }

}  // namespace d2nn
