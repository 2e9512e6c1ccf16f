#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "d2nn/network.hpp"
#include "d2nn/params.hpp"
#include "d2nn/tape.hpp"

namespace d2nn {

enum class Activation : std::uint8_t { skipped, executed };
enum class OutputStatus : std::uint8_t { null, default_value, value };

/// Per-example record of one forward pass. Vectors are indexed by node.
struct ExecutionTrace {
    std::size_t example = 0;
    std::vector<Activation> activation;
    std::vector<OutputStatus> output_status;
    std::vector<int> action;                         // -1 unless an executed control node
    std::vector<std::vector<double>> action_values;  // empty unless an executed control node
    std::vector<std::vector<double>> outputs;        // per declared output; empty when null
    Index multiplications = 0;
    int prediction = -1;  // argmax over the concatenated non-null outputs
    std::uint64_t policy_seed = 0;

    bool executed(std::size_t v) const { return activation[v] == Activation::executed; }
    bool no_output() const { return prediction < 0; }
};

/// How control nodes turn action values into decisions.
struct Policy {
    enum class Kind { greedy, epsilon, forced };
    Kind kind = Kind::greedy;
    double epsilon = 0.0;
    std::uint64_t seed = 0;
    /// Control node id -> action per example; a single entry applies to every example.
    /// Control nodes missing from the map act greedily.
    std::map<std::string, std::vector<int>> forced;

    static Policy greedy() { return {}; }
    static Policy explore(double epsilon, std::uint64_t seed) { return {Kind::epsilon, epsilon, seed, {}}; }
    static Policy force(std::map<std::string, std::vector<int>> decisions) {
        return {Kind::forced, 0.0, 0, std::move(decisions)};
    }
};

/// Strict maximum; the lowest index wins ties.
int greedy_action(std::span<const double> q);

/// Decision of control node `node` for batch example `example`. Exploration
/// draws are a pure function of (seed, node, example), so they do not depend
/// on how examples are packed.
int select_action(const Policy& policy, const std::string& node_id, std::size_t node,
                  std::size_t example, std::span<const double> q);

struct ForwardOptions {
    bool track_gradients = true;   // parameters become tape variables
    bool input_gradients = false;  // inputs become tape variables
};

template <typename Scalar>
struct ForwardPass {
    struct NodeValue {
        Var var;                 // packed rows of the examples that produced a value
        std::vector<Index> row;  // example -> packed row, -1 when absent
    };

    Tape<Scalar> tape;
    std::vector<ExecutionTrace> traces;
    std::vector<NodeValue> values;
    std::vector<std::vector<std::array<Var, 2>>> params;  // [node][layer] -> {weights, bias}
    std::vector<Var> inputs;

    /// Packed row and column of example i's score for global class `cls`
    /// in each executed producer feeding the owning output node.
    struct ScoreSite {
        Var var;
        Index row;
        Index column;
    };
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::vector<ExecutionTrace> blank_traces(const Network& net, std::size_t n) {
    std::vector<ExecutionTrace> traces(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& t = traces[i];
        t.example = i;
        t.activation.assign(net.size(), Activation::skipped);
        t.output_status.assign(net.size(), OutputStatus::null);
        t.action.assign(net.size(), -1);
        t.action_values.assign(net.size(), {});
        t.outputs.assign(net.outputs().size(), {});
    }
    return traces;
}

void finish_trace(const Network& net, ExecutionTrace& trace);

template <typename Scalar>
std::vector<double> row_to_vector(const Tensor<Scalar>& t, Index row) {
    std::vector<double> out(static_cast<std::size_t>(t.row_size()));
    const auto m = t.matrix();
    for (Index c = 0; c < t.row_size(); ++c) out[static_cast<std::size_t>(c)] = static_cast<double>(m(row, c));
    return out;
}

}  // namespace detail

/// Batched forward pass. Each node runs once on the packed subset of examples
/// that activate it; skipped examples take the edge default or null.
template <typename Scalar>
ForwardPass<Scalar> forward(const Network& net, const ParamStore<Scalar>& params,
                            std::span<const Tensor<Scalar>> inputs, const Policy& policy,
                            ForwardOptions options = {}) {
    using TensorT = Tensor<Scalar>;
    if (inputs.size() != net.inputs().size())
        throw ShapeError("forward: expected " + std::to_string(net.inputs().size()) + " input tensors, got " +
                         std::to_string(inputs.size()));
    const Index n = inputs.empty() ? 0 : inputs[0].rows();
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Shape expected = with_batch(n, net.output_shape(net.inputs()[k]));
        if (inputs[k].shape() != expected)
            throw ShapeError("forward: input " + net.node(net.inputs()[k]).id + " has shape " +
                             shape_string(inputs[k].shape()) + ", expected " + shape_string(expected));
    }
    if (params.nodes.size() != net.size()) throw ShapeError("forward: parameter store does not match network");

    const std::size_t count = static_cast<std::size_t>(n);
    ForwardPass<Scalar> fp;
    fp.traces = detail::blank_traces(net, count);
    for (auto& t : fp.traces) t.policy_seed = policy.seed;
    fp.values.resize(net.size());
    fp.params.resize(net.size());
    auto& tape = fp.tape;

    auto executed = [&](std::size_t v, std::size_t i) { return fp.traces[i].executed(v); };
    auto edge_status = [&](const Network::DataInput& d, std::size_t i) {
        if (fp.traces[i].output_status[d.producer] == OutputStatus::value) return OutputStatus::value;
        return d.default_value ? OutputStatus::default_value : OutputStatus::null;
    };
    // Packs the value on edge d for examples `subset`; default or zero rows where absent.
    auto gather = [&](const Network::DataInput& d, const std::vector<std::size_t>& subset) {
        const auto& src = fp.values[d.producer];
        const Shape& shape = net.output_shape(d.producer);
        const TensorT fill(shape, static_cast<Scalar>(d.default_value ? d.default_value->fill() : 0.0));
        std::vector<Index> rows(subset.size(), -1);
        bool any = false;
        for (std::size_t j = 0; j < subset.size(); ++j)
            if (src.var.valid() && src.row[subset[j]] >= 0) {
                rows[j] = src.row[subset[j]];
                any = true;
            }
        if (!any) {
            TensorT block(with_batch(static_cast<Index>(subset.size()), shape));
            block.matrix().rowwise() = fill.values().transpose();
            return tape.constant(std::move(block));
        }
        return ad::gather_rows(tape, src.var, std::move(rows), fill);
    };
    auto merge = [&](std::size_t v, const std::vector<std::size_t>& subset) {
        Var x;
        for (const auto& d : net.data_inputs(v)) {
            const Var g = gather(d, subset);
            x = x.valid() ? ad::add(tape, x, g) : g;
        }
        return x;
    };

    for (std::size_t v : net.order()) {
        const NodeDef& node = net.node(v);
        auto& value = fp.values[v];
        value.row.assign(count, -1);

        if (node.kind == NodeKind::input) {
            const std::size_t k = static_cast<std::size_t>(
                std::find(net.inputs().begin(), net.inputs().end(), v) - net.inputs().begin());
            value.var = options.input_gradients ? tape.variable(inputs[k]) : tape.constant(inputs[k]);
            fp.inputs.push_back(value.var);
            for (std::size_t i = 0; i < count; ++i) {
                value.row[i] = static_cast<Index>(i);
                fp.traces[i].activation[v] = Activation::executed;
                fp.traces[i].output_status[v] = OutputStatus::value;
            }
            continue;
        }

        if (node.kind == NodeKind::output) {
            std::vector<std::size_t> subset;
            for (std::size_t i = 0; i < count; ++i) {
                OutputStatus best = OutputStatus::null;
                for (const auto& d : net.data_inputs(v)) best = std::max(best, edge_status(d, i));
                fp.traces[i].output_status[v] = best;
                if (best != OutputStatus::null) subset.push_back(i);
            }
            if (subset.empty()) continue;
            value.var = merge(v, subset);
            for (std::size_t j = 0; j < subset.size(); ++j) {
                value.row[subset[j]] = static_cast<Index>(j);
                if (fp.traces[subset[j]].output_status[v] == OutputStatus::value)
                    fp.traces[subset[j]].activation[v] = Activation::executed;
            }
            continue;
        }

        // Function node: filter examples with a null input or no active control edge.
        std::vector<std::size_t> subset;
        for (std::size_t i = 0; i < count; ++i) {
            bool control_ok = net.control_inputs(v).empty();
            for (const auto& c : net.control_inputs(v))
                control_ok = control_ok || (executed(c.controller, i) && fp.traces[i].action[c.controller] == c.action);
            bool inputs_ok = true;
            for (const auto& d : net.data_inputs(v)) inputs_ok = inputs_ok && edge_status(d, i) != OutputStatus::null;
            if (control_ok && inputs_ok) subset.push_back(i);
        }
        const OutputStatus skipped_status = net.has_default_out(v) ? OutputStatus::default_value : OutputStatus::null;
        for (std::size_t i = 0; i < count; ++i) fp.traces[i].output_status[v] = skipped_status;
        if (subset.empty()) continue;

        const Index rows = static_cast<Index>(subset.size());
        if (node.kind == NodeKind::dummy) {
            value.var = tape.constant(TensorT(with_batch(rows, node.shape), static_cast<Scalar>(node.constant)));
        } else {
            Var x = merge(v, subset);
            auto& pvars = fp.params[v];
            pvars.assign(node.layers.size(), {Var{}, Var{}});
            for (std::size_t l = 0; l < node.layers.size(); ++l) {
                const auto& p = params.at(v, l);
                if (p.kind != LayerParams<Scalar>::Kind::none) {
                    pvars[l][0] = options.track_gradients ? tape.variable(p.weights) : tape.constant(p.weights);
                    pvars[l][1] = options.track_gradients ? tape.variable(p.bias) : tape.constant(p.bias);
                }
                x = ad::apply_layer(tape, node.layers[l], x, std::span<const Var>(pvars[l]));
            }
            value.var = x;
        }
        const TensorT& out = tape.value(value.var);
        for (std::size_t j = 0; j < subset.size(); ++j) {
            const std::size_t i = subset[j];
            auto& trace = fp.traces[i];
            value.row[i] = static_cast<Index>(j);
            trace.activation[v] = Activation::executed;
            trace.output_status[v] = OutputStatus::value;
            trace.multiplications += net.node_cost(v);
            if (node.kind == NodeKind::control) {
                trace.action_values[v] = detail::row_to_vector(out, static_cast<Index>(j));
                trace.action[v] = select_action(policy, node.id, v, i, trace.action_values[v]);
            }
        }
    }

    for (std::size_t k = 0; k < net.outputs().size(); ++k) {
        const auto& value = fp.values[net.outputs()[k]];
        for (std::size_t i = 0; i < count; ++i)
            if (value.row[i] >= 0)
                fp.traces[i].outputs[k] = detail::row_to_vector(tape.value(value.var), value.row[i]);
    }
    for (auto& t : fp.traces) detail::finish_trace(net, t);
    return fp;
}

template <typename Scalar>
ForwardPass<Scalar> forward(const Network& net, const ParamStore<Scalar>& params, const Tensor<Scalar>& input,
                            const Policy& policy, ForwardOptions options = {}) {
    return forward(net, params, std::span<const Tensor<Scalar>>(&input, 1), policy, options);
}

/// Packed locations of example i's score for global class `cls`: one site per
/// executed producer feeding the owning output node. Empty when the class
/// belongs to a null output or only default values reached it.
template <typename Scalar>
std::vector<typename ForwardPass<Scalar>::ScoreSite> score_sites(const Network& net, const ForwardPass<Scalar>& fp,
                                                                  std::size_t example, Index cls) {
    std::vector<typename ForwardPass<Scalar>::ScoreSite> sites;
    for (std::size_t k = 0; k < net.outputs().size(); ++k) {
        const std::size_t o = net.outputs()[k];
        const Index width = shape_size(net.output_shape(o));
        const Index local = cls - net.class_offset(k);
        if (local < 0 || local >= width) continue;
        for (const auto& d : net.data_inputs(o)) {
            const auto& src = fp.values[d.producer];
            if (src.var.valid() && src.row[example] >= 0 && fp.traces[example].executed(d.producer))
                sites.push_back({src.var, src.row[example], local});
        }
    }
    return sites;
}

/// Naive per-example interpreter: recursive evaluation with memoization, no
/// batching or packing. Semantically identical to forward(); used as its oracle.
template <typename Scalar>
ExecutionTrace reference_forward(const Network& net, const ParamStore<Scalar>& params,
                                 std::span<const Tensor<Scalar>> example,
                                 const std::map<std::string, int>& forced = {}) {
    using TensorT = Tensor<Scalar>;
    if (example.size() != net.inputs().size()) throw ShapeError("reference_forward: wrong number of inputs");
    for (std::size_t k = 0; k < example.size(); ++k)
        if (example[k].shape() != with_batch(1, net.output_shape(net.inputs()[k])))
            throw ShapeError("reference_forward: input " + net.node(net.inputs()[k]).id + " has shape " +
                             shape_string(example[k].shape()));

    struct State {
        bool done = false;
        bool executed = false;
        OutputStatus status = OutputStatus::null;
        std::optional<TensorT> value;
        int action = -1;
        std::vector<double> q;
    };
    std::vector<State> state(net.size());

    std::function<const State&(std::size_t)> eval = [&](std::size_t v) -> const State& {
        State& s = state[v];
        if (s.done) return s;
        const NodeDef& node = net.node(v);

        // Resolved value on data edge d, nullopt when null.
        auto edge_value = [&](const Network::DataInput& d) -> std::optional<TensorT> {
            const State& p = eval(d.producer);
            if (p.executed || (net.node(d.producer).kind == NodeKind::input)) return p.value;
            if (d.default_value)
                return TensorT(with_batch(1, net.output_shape(d.producer)), static_cast<Scalar>(d.default_value->fill()));
            return std::nullopt;
        };

        switch (node.kind) {
        case NodeKind::input: {
            const auto pos = std::find(net.inputs().begin(), net.inputs().end(), v) - net.inputs().begin();
            s.value = example[static_cast<std::size_t>(pos)];
            s.executed = true;
            s.status = OutputStatus::value;
            break;
        }
        case NodeKind::output: {
            bool any_value = false;
            for (const auto& d : net.data_inputs(v)) {
                auto x = edge_value(d);
                if (!x) continue;
                any_value = any_value || eval(d.producer).executed;
                s.value = s.value ? ops::add(*s.value, *x) : *x;
            }
            s.status = !s.value ? OutputStatus::null : any_value ? OutputStatus::value : OutputStatus::default_value;
            s.executed = any_value;
            break;
        }
        default: {
            bool control_ok = net.control_inputs(v).empty();
            for (const auto& c : net.control_inputs(v)) {
                const State& q = eval(c.controller);
                if (q.executed && q.action == c.action) control_ok = true;
            }
            std::optional<TensorT> x;
            bool inputs_ok = true;
            for (const auto& d : net.data_inputs(v)) {
                auto in = edge_value(d);
                if (!in) {
                    inputs_ok = false;
                    continue;
                }
                x = x ? ops::add(*x, *in) : *in;
            }
            if (!(control_ok && inputs_ok)) {
                s.status = net.has_default_out(v) ? OutputStatus::default_value : OutputStatus::null;
                break;
            }
            s.executed = true;
            s.status = OutputStatus::value;
            if (node.kind == NodeKind::dummy) {
                s.value = TensorT(with_batch(1, node.shape), static_cast<Scalar>(node.constant));
                break;
            }
            for (std::size_t l = 0; l < node.layers.size(); ++l) *x = eval_layer(node.layers[l], *x, params.at(v, l));
            s.value = std::move(x);
            if (node.kind == NodeKind::control) {
                s.q = detail::row_to_vector(*s.value, 0);
                auto f = forced.find(node.id);
                s.action = f != forced.end() ? f->second : greedy_action(s.q);
            }
            break;
        }
        }
        s.done = true;
        return s;
    };

    ExecutionTrace trace = detail::blank_traces(net, 1).front();
    for (std::size_t v = 0; v < net.size(); ++v) {
        const State& s = eval(v);
        trace.activation[v] = s.executed ? Activation::executed : Activation::skipped;
        trace.output_status[v] = s.status;
        if (s.executed && net.node(v).is_function()) trace.multiplications += net.node_cost(v);
        if (net.node(v).kind == NodeKind::control && s.executed) {
            trace.action[v] = s.action;
            trace.action_values[v] = s.q;
        }
    }
    for (std::size_t k = 0; k < net.outputs().size(); ++k) {
        const State& s = state[net.outputs()[k]];
        if (s.value) trace.outputs[k] = detail::row_to_vector(*s.value, 0);
    }
    detail::finish_trace(net, trace);
    return trace;
}

template <typename Scalar>
ExecutionTrace reference_forward(const Network& net, const ParamStore<Scalar>& params, const Tensor<Scalar>& example,
                                 const std::map<std::string, int>& forced = {}) {
    return reference_forward(net, params, std::span<const Tensor<Scalar>>(&example, 1), forced);
}

/// Multiplications executed by the example, control nodes included.
Index trace_cost(const ExecutionTrace& trace);

/// Executed multiplications divided by the multiplications of `reference_path`.
double normalized_cost(const ExecutionTrace& trace, const Network& net, const std::vector<std::size_t>& reference_path);

/// Sorted ids of executed function nodes joined by '+'.
std::string path_signature(const Network& net, const ExecutionTrace& trace);

/// Example count per execution path; no-output examples are excluded.
std::map<std::string, std::size_t> path_histogram(const Network& net, std::span<const ExecutionTrace> traces);

/// One CSV row per example: id, path signature, multiplications, normalized cost, chosen actions, prediction.
void write_trace_csv(std::ostream& os, const Network& net, std::span<const ExecutionTrace> traces);

}  // namespace d2nn
