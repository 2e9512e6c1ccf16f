#include "d2nn/learn.hpp"

#include <iomanip>

namespace d2nn {

double reward(double accuracy, double efficiency, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw TrainingError("lambda must lie in [0, 1], got " + std::to_string(lambda));
    if (lambda == 1.0) return accuracy;
    if (lambda == 0.0) return efficiency;
    return lambda * accuracy + (1.0 - lambda) * efficiency;
}

double efficiency_metric(std::span<const double> normalized_costs) {
    if (normalized_costs.empty()) throw Error("efficiency_metric: empty set");
    double mean = 0.0;
    for (double c : normalized_costs) mean += c;
    mean /= static_cast<double>(normalized_costs.size());
    return std::clamp(1.0 - mean, 0.0, 1.0);
}

BagLoss bag_q_loss(std::span<const double> chosen_q, double r) {
    if (chosen_q.empty()) throw TrainingError("bag_q_loss: empty bag");
    double sum = 0.0;
    for (double q : chosen_q) sum += q;
    const double diff = r - sum;
    return {diff * diff, 2.0 * diff};
}

std::vector<int> greedy_joint_action(const std::vector<std::vector<double>>& q_rows) {
    std::vector<int> out;
    out.reserve(q_rows.size());
    for (const auto& row : q_rows) out.push_back(greedy_action(row));
    return out;
}

double epsilon_at(const EpsilonSchedule& s, std::int64_t step) {
    if (step <= 0) return s.initial;
    if (step >= s.horizon) return s.final;
    const double t = static_cast<double>(step) / static_cast<double>(s.horizon);
    return s.initial + (s.final - s.initial) * t;
}

double example_cost(const Network& net, const ExecutionTrace& t, bool include_controllers) {
    if (include_controllers) return normalized_cost(t, net, net.reference_path());
    const Index ref = net.path_cost(net.reference_path());
    Index used = 0;
    for (std::size_t v = 0; v < net.size(); ++v)
        if (net.node(v).kind == NodeKind::regular && t.executed(v)) used += net.node_cost(v);
    return static_cast<double>(used) / static_cast<double>(ref);
}

Policy forced_policy(const Network& net, int action) {
    std::map<std::string, std::vector<int>> forced;
    for (std::size_t q : net.control_nodes()) {
        const int last = static_cast<int>(net.num_actions(q)) - 1;
        forced[net.node(q).id] = {action < 0 ? last : std::min(action, last)};
    }
    return Policy::force(std::move(forced));
}

void write_history_csv(std::ostream& os, const Network& net, std::span<const EpochRecord> history) {
    std::vector<std::string> ids;
    for (std::size_t q : net.control_nodes()) ids.push_back(net.node(q).id);
    for (std::size_t o : net.outputs()) ids.push_back(net.node(o).id);
    os << "epoch";
    for (const auto& id : ids) os << ",loss_" << id;
    os << ",accuracy,efficiency,reward,epsilon,cost_mean,cost_std\n";
    os << std::setprecision(9);
    for (const auto& r : history) {
        os << r.epoch;
        for (const auto& id : ids) {
            auto it = r.node_loss.find(id);
            os << ',' << (it == r.node_loss.end() ? 0.0 : it->second);
        }
        os << ',' << r.accuracy << ',' << r.efficiency << ',' << r.reward << ',' << r.epsilon << ',' << r.cost_mean
           << ',' << r.cost_std << '\n';
    }
}

}  // namespace d2nn
