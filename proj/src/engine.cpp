#include "d2nn/engine.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

namespace d2nn {

int greedy_action(std::span<const double> q) {
    int best = 0;
    for (std::size_t a = 1; a < q.size(); ++a)
        if (q[a] > q[static_cast<std::size_t>(best)]) best = static_cast<int>(a);
    return best;
}

int select_action(const Policy& policy, const std::string& node_id, std::size_t node, std::size_t example,
                  std::span<const double> q) {
    const int k = static_cast<int>(q.size());
    switch (policy.kind) {
    case Policy::Kind::greedy:
        return greedy_action(q);
    case Policy::Kind::forced: {
        auto f = policy.forced.find(node_id);
        if (f == policy.forced.end() || f->second.empty()) return greedy_action(q);
        const int a = f->second.size() == 1 ? f->second.front() : f->second.at(example);
        if (a < 0 || a >= k)
            throw GraphError("forced action " + std::to_string(a) + " out of range for control node " + node_id);
        return a;
    }
    case Policy::Kind::epsilon: {
        const std::uint64_t h = detail::splitmix64(policy.seed ^ detail::splitmix64((node + 1) * 0x100000001B3ull) ^
                                                   detail::splitmix64(example * 0x9E3779B97F4A7C15ull + 7));
        const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
        if (u < policy.epsilon) return static_cast<int>(detail::splitmix64(h) % static_cast<std::uint64_t>(k));
        return greedy_action(q);
    }
    }
    return greedy_action(q);
}

namespace detail {

void finish_trace(const Network& net, ExecutionTrace& trace) {
    trace.prediction = -1;
    double best = 0.0;
    for (std::size_t k = 0; k < trace.outputs.size(); ++k) {
        const auto& out = trace.outputs[k];
        for (std::size_t c = 0; c < out.size(); ++c) {
            if (trace.prediction < 0 || out[c] > best) {
                best = out[c];
                trace.prediction = static_cast<int>(net.class_offset(k) + static_cast<Index>(c));
            }
        }
    }
}

}  // namespace detail

Index trace_cost(const ExecutionTrace& trace) { return trace.multiplications; }

double normalized_cost(const ExecutionTrace& trace, const Network& net, const std::vector<std::size_t>& reference_path) {
    if (reference_path.empty()) throw GraphError("normalized_cost: empty reference path");
    const Index ref = net.path_cost(reference_path);
    if (ref <= 0) throw GraphError("normalized_cost: reference path performs no multiplications");
    return static_cast<double>(trace_cost(trace)) / static_cast<double>(ref);
}

std::string path_signature(const Network& net, const ExecutionTrace& trace) {
    std::vector<std::string> ids;
    for (std::size_t v = 0; v < net.size(); ++v)
        if (net.node(v).is_function() && trace.executed(v)) ids.push_back(net.node(v).id);
    std::sort(ids.begin(), ids.end());
    std::string sig;
    for (const auto& id : ids) sig += (sig.empty() ? "" : "+") + id;
    return sig;
}

std::map<std::string, std::size_t> path_histogram(const Network& net, std::span<const ExecutionTrace> traces) {
    std::map<std::string, std::size_t> hist;
    for (const auto& t : traces)
        if (!t.no_output()) ++hist[path_signature(net, t)];
    return hist;
}

void write_trace_csv(std::ostream& os, const Network& net, std::span<const ExecutionTrace> traces) {
    const auto reference = net.reference_path();
    os << "example,path,multiplications,normalized_cost,actions,prediction\n";
    for (const auto& t : traces) {
        std::string actions;
        for (std::size_t q : net.control_nodes())
            if (t.action[q] >= 0) actions += (actions.empty() ? "" : ";") + net.node(q).id + "=" + std::to_string(t.action[q]);
        os << t.example << ",\"" << path_signature(net, t) << "\"," << t.multiplications << ','
           << std::setprecision(9) << normalized_cost(t, net, reference) << ",\"" << actions << "\","
           << t.prediction << '\n';
    }
}

}  // namespace d2nn
