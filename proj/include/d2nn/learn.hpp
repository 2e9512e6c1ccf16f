#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "d2nn/data.hpp"
#include "d2nn/engine.hpp"
#include "d2nn/metrics.hpp"

namespace d2nn {

/// r = lambda * A + (1 - lambda) * E. Throws TrainingError for lambda outside [0, 1].
double reward(double accuracy, double efficiency, double lambda);

/// 1 - mean normalized cost, clamped to [0, 1]. Throws on an empty set.
double efficiency_metric(std::span<const double> normalized_costs);

struct BagLoss {
    double loss = 0.0;   // (r - sum Q)^2
    double scale = 0.0;  // 2 (r - sum Q); dL/dQ_i = -scale for every chosen Q_i
};

/// Squared error between the bag reward and the summed chosen-action values.
BagLoss bag_q_loss(std::span<const double> chosen_q, double r);

/// Per-row argmax (lowest index on ties). Because the bag value is a sum of
/// per-example terms this is also the argmax over all joint actions.
std::vector<int> greedy_joint_action(const std::vector<std::vector<double>>& q_rows);

struct EpsilonSchedule {
    double initial = 1.0;
    double final = 0.05;
    std::int64_t horizon = 1;  // steps over which epsilon decays linearly
};

double epsilon_at(const EpsilonSchedule& s, std::int64_t step);

enum class OutputLoss { unified, cross_entropy };
enum class Optimizer { sgd, adam };

struct TrainConfig {
    double lambda = 1.0;
    Index bag_size = 4;
    Index bags_per_batch = 4;
    Index epochs = 30;
    Optimizer optimizer = Optimizer::adam;
    double learning_rate = 0.002;
    double momentum = 0.9;  // sgd momentum, adam first-moment decay
    double beta2 = 0.999;   // adam second-moment decay
    double weight_decay = 0.0;
    double grad_clip = 0.0;  // global gradient norm cap, 0 disables
    double epsilon_initial = 1.0;
    double epsilon_final = 0.05;
    double epsilon_decay_fraction = 1.0;  // of all training steps
    Metric metric = Metric::f1;
    int positive_class = 1;
    OutputLoss output_loss = OutputLoss::unified;
    /// Under the unified loss, also regress every class the output did not
    /// pick toward the bag reward it would have earned (the bag's other
    /// predictions held fixed). Labels are known, so these rewards are exact.
    bool counterfactual_classes = true;
    double cross_entropy_weight = 1.0;
    /// When set, every control node takes this action (clamped to its arity)
    /// and controllers are not trained: the static baselines.
    std::optional<int> forced_action;
    std::uint64_t seed = 1;

    Index batch_size() const { return bag_size * bags_per_batch; }
};

/// Per-example cost with or without controller overhead, normalized by the
/// network's reference path.
double example_cost(const Network& net, const ExecutionTrace& t, bool include_controllers = true);

Policy forced_policy(const Network& net, int action);

struct StepReport {
    double loss = 0.0;
    std::map<std::string, double> node_loss;
    double accuracy = 0.0;  // mean over bags of the configured metric
    double efficiency = 0.0;
    double reward = 0.0;
    double epsilon = 0.0;
    std::vector<double> costs;  // per unmasked example
    std::vector<std::string> paths;
};

struct EpochRecord {
    Index epoch = 0;
    std::map<std::string, double> node_loss;
    double accuracy = 0.0, efficiency = 0.0, reward = 0.0, epsilon = 0.0;
    double cost_mean = 0.0, cost_std = 0.0;
    std::map<std::string, std::size_t> paths;
};

/// Parameters plus optimizer state; everything needed to resume training.
template <typename Scalar>
struct TrainState {
    ParamStore<Scalar> params;
    ParamStore<Scalar> velocity;
    ParamStore<Scalar> second;  // adam only
    std::int64_t step = 0;
    Index epoch = 0;

    static TrainState init(const Network& net, std::uint64_t seed) {
        return from(net, ParamStore<Scalar>::init(net, seed));
    }

    /// Fresh optimizer state around existing parameters (warm start).
    static TrainState from(const Network& net, ParamStore<Scalar> params) {
        return {std::move(params), ParamStore<Scalar>::zeros_like(net), ParamStore<Scalar>::zeros_like(net), 0, 0};
    }
};

namespace detail {

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ull)); }

}  // namespace detail

/// Mini-bag Q-learning. Every control node regresses its chosen action
/// values, summed over each bag, onto the bag reward; output nodes do the
/// same with the predicted class score (or use cross-entropy when configured).
template <typename Scalar>
class Trainer {
public:
    Trainer(const Network& net, TrainConfig cfg) : net_(net), cfg_(std::move(cfg)), reference_(net.reference_path()) {
        if (cfg_.lambda < 0 || cfg_.lambda > 1) throw TrainingError("lambda must lie in [0, 1]");
        if (cfg_.bag_size < 1 || cfg_.bags_per_batch < 1) throw TrainingError("bag size and bags per batch must be positive");
        if (cfg_.epsilon_initial < 0 || cfg_.epsilon_initial > 1 || cfg_.epsilon_final < 0 || cfg_.epsilon_final > 1)
            throw TrainingError("epsilon must lie in [0, 1]");
    }

    const TrainConfig& config() const { return cfg_; }

    Index steps_per_epoch(Index examples) const { return examples / cfg_.batch_size(); }

    EpsilonSchedule schedule(Index examples) const {
        const auto total = static_cast<std::int64_t>(steps_per_epoch(examples) * cfg_.epochs);
        const auto horizon = static_cast<std::int64_t>(std::ceil(static_cast<double>(total) * cfg_.epsilon_decay_fraction));
        return {cfg_.epsilon_initial, cfg_.epsilon_final, std::max<std::int64_t>(1, horizon)};
    }

    /// One update from the examples `indices` of `data`, split into
    /// consecutive bags of bag_size. Examples with mask[j] == false are left
    /// out of every bag (and so contribute neither reward nor gradient).
    StepReport train_step(TrainState<Scalar>& state, const Dataset& data, std::span<const std::size_t> indices,
                          const EpsilonSchedule& schedule, std::span<const bool> mask = {}) {
        StepReport report;
        const std::size_t n = indices.size();
        if (n == 0) throw TrainingError("train_step: empty batch");
        const Tensor<Scalar> x = data.template batch<Scalar>(indices);

        report.epsilon = epsilon_at(schedule, state.step);
        const Policy policy =
            cfg_.forced_action ? forced_policy(net_, *cfg_.forced_action)
                               : Policy::explore(report.epsilon, detail::mix(cfg_.seed, static_cast<std::uint64_t>(state.step)));
        auto fp = forward(net_, state.params, std::span<const Tensor<Scalar>>(&x, 1), policy);

        std::vector<int> labels(n), preds(n);
        std::vector<double> costs(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = data.labels[indices[i]];
            preds[i] = fp.traces[i].prediction;
            costs[i] = example_cost(net_, fp.traces[i], !cfg_.forced_action.has_value());
        }

        // Bags of consecutive examples, masked ones dropped.
        std::vector<std::vector<std::size_t>> bags;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg_.bag_size)) {
            std::vector<std::size_t> bag;
            for (std::size_t i = start; i < std::min(n, start + static_cast<std::size_t>(cfg_.bag_size)); ++i)
                if (mask.empty() || mask[i]) bag.push_back(i);
            if (!bag.empty()) bags.push_back(std::move(bag));
        }
        if (bags.empty()) throw TrainingError("train_step: every example is masked");
        const double inv_bags = 1.0 / static_cast<double>(bags.size());

        std::unordered_map<std::size_t, Tensor<Scalar>> seeds;  // var id -> gradient
        auto seed_at = [&](Var var, Index row, Index col, double g) {
            auto it = seeds.find(var.id);
            if (it == seeds.end()) it = seeds.emplace(var.id, Tensor<Scalar>(fp.tape.value(var).shape())).first;
            it->second.matrix()(row, col) += static_cast<Scalar>(g);
        };
        auto add_loss = [&](const std::string& id, double value) {
            report.node_loss[id] += value;
            report.loss += value;
        };

        std::size_t counted = 0;
        for (const auto& bag : bags) {
            std::vector<int> bp, bl;
            std::vector<double> bc;
            for (std::size_t i : bag) {
                bp.push_back(preds[i]);
                bl.push_back(labels[i]);
                bc.push_back(costs[i]);
                report.costs.push_back(costs[i]);
                report.paths.push_back(path_signature(net_, fp.traces[i]));
                ++counted;
            }
            const double a = evaluate_metric(cfg_.metric, bp, bl, cfg_.positive_class);
            const double e = efficiency_metric(bc);
            const double r = d2nn::reward(a, e, cfg_.lambda);
            report.accuracy += a * inv_bags;
            report.efficiency += e * inv_bags;
            report.reward += r * inv_bags;

            if (!cfg_.forced_action) {
                for (std::size_t q : net_.control_nodes()) {
                    const auto& val = fp.values[q];
                    std::vector<double> chosen;
                    for (std::size_t i : bag)
                        if (fp.traces[i].executed(q))
                            chosen.push_back(fp.traces[i].action_values[q][static_cast<std::size_t>(fp.traces[i].action[q])]);
                    if (chosen.empty()) continue;
                    const BagLoss bl_q = bag_q_loss(chosen, r);
                    add_loss(net_.node(q).id, bl_q.loss * inv_bags);
                    for (std::size_t i : bag)
                        if (fp.traces[i].executed(q))
                            seed_at(val.var, val.row[i], fp.traces[i].action[q], -bl_q.scale * inv_bags);
                }
            }
            if (cfg_.output_loss == OutputLoss::unified) {
                // The classes of all outputs form one action space; each
                // example's chosen action is its predicted class.
                std::vector<std::size_t> pos_of, out_of;
                std::vector<double> chosen;
                for (std::size_t pos = 0; pos < bag.size(); ++pos) {
                    const std::size_t i = bag[pos];
                    const std::size_t k = output_holding(fp, i, preds[i]);
                    if (k == npos) continue;
                    pos_of.push_back(pos);
                    out_of.push_back(k);
                    chosen.push_back(fp.traces[i].outputs[k][static_cast<std::size_t>(preds[i] - net_.class_offset(k))]);
                }
                if (chosen.empty()) continue;
                const BagLoss bl_o = bag_q_loss(chosen, r);
                const double total = std::accumulate(chosen.begin(), chosen.end(), 0.0);
                for (std::size_t w = 0; w < chosen.size(); ++w) {
                    const std::size_t i = bag[pos_of[w]], k = out_of[w];
                    const std::size_t o = net_.outputs()[k];
                    add_loss(net_.node(o).id, bl_o.loss * inv_bags / static_cast<double>(chosen.size()));
                    seed_at(fp.values[o].var, fp.values[o].row[i], preds[i] - net_.class_offset(k), -bl_o.scale * inv_bags);
                }
                if (!cfg_.counterfactual_classes) continue;
                for (std::size_t w = 0; w < chosen.size(); ++w) {
                    const std::size_t pos = pos_of[w], i = bag[pos];
                    const double rest = total - chosen[w];
                    std::vector<std::pair<std::size_t, Index>> alternatives;  // (output, local class)
                    for (std::size_t k = 0; k < net_.outputs().size(); ++k) {
                        if (!has_value(fp, i, k)) continue;
                        for (Index c = 0; c < static_cast<Index>(fp.traces[i].outputs[k].size()); ++c)
                            if (c + net_.class_offset(k) != preds[i]) alternatives.emplace_back(k, c);
                    }
                    const double share = inv_bags / static_cast<double>(std::max<std::size_t>(1, alternatives.size()));
                    for (const auto& [k, c] : alternatives) {
                        const std::size_t o = net_.outputs()[k];
                        bp[pos] = static_cast<int>(c + net_.class_offset(k));
                        const double rc = d2nn::reward(evaluate_metric(cfg_.metric, bp, bl, cfg_.positive_class), e, cfg_.lambda);
                        const double d = rc - rest - fp.traces[i].outputs[k][static_cast<std::size_t>(c)];
                        add_loss(net_.node(o).id, d * d * share);
                        seed_at(fp.values[o].var, fp.values[o].row[i], c, -2.0 * d * share);
                    }
                    bp[pos] = preds[i];
                }
            }
        }

        if (cfg_.output_loss == OutputLoss::cross_entropy) {
            for (std::size_t k = 0; k < net_.outputs().size(); ++k) {
                const std::size_t o = net_.outputs()[k];
                const auto& val = fp.values[o];
                const Index offset = net_.class_offset(k), width = shape_size(net_.output_shape(o));
                const double w = cfg_.cross_entropy_weight / static_cast<double>(counted);
                for (const auto& bag : bags)
                    for (std::size_t i : bag) {
                        const Index local = labels[i] - offset;
                        if (local < 0 || local >= width || val.row[i] < 0) continue;
                        if (fp.traces[i].output_status[o] != OutputStatus::value) continue;
                        const auto& s = fp.traces[i].outputs[k];
                        const double m = *std::max_element(s.begin(), s.end());
                        double z = 0.0;
                        for (double v : s) z += std::exp(v - m);
                        add_loss(net_.node(o).id, w * (std::log(z) + m - s[static_cast<std::size_t>(local)]));
                        for (Index c = 0; c < width; ++c) {
                            const double p = std::exp(s[static_cast<std::size_t>(c)] - m) / z;
                            seed_at(val.var, val.row[i], c, w * (p - (c == local ? 1.0 : 0.0)));
                        }
                    }
            }
        }
        if (!std::isfinite(report.loss))
            throw TrainingError("loss diverged (non-finite) at step " + std::to_string(state.step) +
                                "; lower the learning rate");

        std::vector<typename Tape<Scalar>::Seed> seed_list;
        for (auto& [id, g] : seeds) seed_list.push_back({Var{id}, std::move(g)});
        std::sort(seed_list.begin(), seed_list.end(), [](const auto& a, const auto& b) { return a.var.id < b.var.id; });
        if (!seed_list.empty()) fp.tape.backward(seed_list);
        apply_update(state, fp);
        ++state.step;
        return report;
    }

    /// Runs the configured epochs from the state's current epoch, stopping
    /// early once `stop_epoch` epochs are done (when non-negative). `on_epoch`
    /// (optional) sees each record as it is produced.
    template <typename Callback = std::nullptr_t>
    std::vector<EpochRecord> train(TrainState<Scalar>& state, const Dataset& data, Callback on_epoch = nullptr,
                                   Index stop_epoch = -1) {
        const Index n = data.size();
        const Index per_epoch = steps_per_epoch(n);
        if (cfg_.epochs > 0 && per_epoch == 0)
            throw TrainingError("dataset has " + std::to_string(n) + " examples, fewer than one batch of " +
                                std::to_string(cfg_.batch_size()));
        const EpsilonSchedule sched = schedule(n);
        std::vector<EpochRecord> history;
        const Index last = stop_epoch < 0 ? cfg_.epochs : std::min(stop_epoch, cfg_.epochs);
        for (; state.epoch < last; ++state.epoch) {
            std::vector<std::size_t> order(static_cast<std::size_t>(n));
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::mt19937_64 rng(detail::mix(cfg_.seed, static_cast<std::uint64_t>(state.epoch) + 1));
            std::shuffle(order.begin(), order.end(), rng);

            EpochRecord rec;
            rec.epoch = state.epoch + 1;
            std::vector<double> costs;
            for (Index s = 0; s < per_epoch; ++s) {
                const auto first = order.begin() + s * cfg_.batch_size();
                const std::vector<std::size_t> batch(first, first + cfg_.batch_size());
                const StepReport r = train_step(state, data, batch, sched);
                const double w = 1.0 / static_cast<double>(per_epoch);
                for (const auto& [id, l] : r.node_loss) rec.node_loss[id] += l * w;
                rec.accuracy += r.accuracy * w;
                rec.efficiency += r.efficiency * w;
                rec.reward += r.reward * w;
                rec.epsilon = r.epsilon;
                costs.insert(costs.end(), r.costs.begin(), r.costs.end());
                for (const auto& p : r.paths) ++rec.paths[p];
            }
            double mean = 0.0, sq = 0.0;
            for (double c : costs) mean += c;
            mean /= static_cast<double>(std::max<std::size_t>(1, costs.size()));
            for (double c : costs) sq += (c - mean) * (c - mean);
            rec.cost_mean = mean;
            rec.cost_std = std::sqrt(sq / static_cast<double>(std::max<std::size_t>(1, costs.size())));
            if constexpr (!std::is_same_v<Callback, std::nullptr_t>) on_epoch(rec);
            history.push_back(std::move(rec));
        }
        return history;
    }

private:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    bool has_value(const ForwardPass<Scalar>& fp, std::size_t i, std::size_t k) const {
        const std::size_t o = net_.outputs()[k];
        return fp.values[o].row[i] >= 0 && fp.traces[i].output_status[o] == OutputStatus::value;
    }

    // Output whose class range holds `cls` for example i, npos if none.
    std::size_t output_holding(const ForwardPass<Scalar>& fp, std::size_t i, int cls) const {
        if (cls < 0) return npos;
        for (std::size_t k = 0; k < net_.outputs().size(); ++k) {
            const Index local = cls - net_.class_offset(k);
            if (local >= 0 && local < static_cast<Index>(fp.traces[i].outputs[k].size()))
                return has_value(fp, i, k) ? k : npos;
        }
        return npos;
    }

    void apply_update(TrainState<Scalar>& state, ForwardPass<Scalar>& fp) {
        // Collect gradients; nodes that did not run get zero.
        auto grads = ParamStore<Scalar>::zeros_like(net_);
        double norm2 = 0.0;
        for (std::size_t v = 0; v < fp.params.size(); ++v)
            for (std::size_t l = 0; l < fp.params[v].size(); ++l)
                for (int k = 0; k < 2; ++k) {
                    const Var var = fp.params[v][l][static_cast<std::size_t>(k)];
                    if (!var.valid() || !fp.tape.has_grad(var)) continue;
                    auto& g = k == 0 ? grads.nodes[v][l].weights : grads.nodes[v][l].bias;
                    g = fp.tape.grad(var);
                    norm2 += static_cast<double>(g.values().squaredNorm());
                }
        if (!std::isfinite(norm2))
            throw TrainingError("gradient diverged (non-finite) at step " + std::to_string(state.step));
        const double clip = cfg_.grad_clip > 0 && std::sqrt(norm2) > cfg_.grad_clip ? cfg_.grad_clip / std::sqrt(norm2) : 1.0;
        const auto lr = static_cast<Scalar>(cfg_.learning_rate), mu = static_cast<Scalar>(cfg_.momentum),
                   wd = static_cast<Scalar>(cfg_.weight_decay), c = static_cast<Scalar>(clip);
        for (std::size_t v = 0; v < grads.nodes.size(); ++v)
            for (std::size_t l = 0; l < grads.nodes[v].size(); ++l) {
                auto& p = state.params.nodes[v][l];
                if (p.kind == LayerParams<Scalar>::Kind::none) continue;
                auto& vel = state.velocity.nodes[v][l];
                auto& g = grads.nodes[v][l];
                g.weights.values() = c * g.weights.values() + wd * p.weights.values();
                g.bias.values() *= c;
                if (cfg_.optimizer == Optimizer::sgd) {
                    vel.weights.values() = mu * vel.weights.values() + g.weights.values();
                    vel.bias.values() = mu * vel.bias.values() + g.bias.values();
                    p.weights.values() -= lr * vel.weights.values();
                    p.bias.values() -= lr * vel.bias.values();
                    continue;
                }
                auto& sec = state.second.nodes[v][l];
                adam(p.weights, vel.weights, sec.weights, g.weights, state.step + 1);
                adam(p.bias, vel.bias, sec.bias, g.bias, state.step + 1);
            }
    }

    void adam(Tensor<Scalar>& p, Tensor<Scalar>& m, Tensor<Scalar>& s, const Tensor<Scalar>& g, std::int64_t t) const {
        const double b1 = cfg_.momentum, b2 = cfg_.beta2;
        const auto k1 = static_cast<Scalar>(1.0 - b1), k2 = static_cast<Scalar>(1.0 - b2);
        m.values() = static_cast<Scalar>(b1) * m.values() + k1 * g.values();
        s.values() = static_cast<Scalar>(b2) * s.values() + k2 * g.values().cwiseAbs2();
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t)), c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        const auto step = static_cast<Scalar>(cfg_.learning_rate / c1);
        const auto eps = static_cast<Scalar>(1e-8);
        p.values().array() -= step * m.values().array() / ((s.values().array() / static_cast<Scalar>(c2)).sqrt() + eps);
    }

    const Network& net_;
    TrainConfig cfg_;
    std::vector<std::size_t> reference_;
};

struct EvalReport {
    double metric = 0.0;    // configured metric over the whole set
    double accuracy = 0.0;  // plain accuracy, for reference
    double cost_mean = 0.0, cost_std = 0.0;
    Index no_output = 0;
    std::vector<int> predictions;
    std::vector<double> costs;
    std::vector<ExecutionTrace> traces;
    std::map<std::string, std::size_t> paths;
};

/// Greedy inference over a whole dataset (forced actions for static
/// baselines, whose cost then excludes the idle controllers).
template <typename Scalar>
EvalReport evaluate(const Network& net, const ParamStore<Scalar>& params, const Dataset& data, Metric metric,
                    int positive_class = 1, std::optional<int> forced_action = std::nullopt, Index chunk = 256) {
    const Index n = data.size();
    if (n == 0) throw Error("evaluate: empty dataset");
    EvalReport rep;
    const Policy policy = forced_action ? forced_policy(net, *forced_action) : Policy::greedy();
    for (Index start = 0; start < n; start += chunk) {
        std::vector<std::size_t> idx;
        for (Index i = start; i < std::min(n, start + chunk); ++i) idx.push_back(static_cast<std::size_t>(i));
        const Tensor<Scalar> x = data.template batch<Scalar>(idx);
        auto fp = forward(net, params, std::span<const Tensor<Scalar>>(&x, 1), policy, {false, false});
        for (auto& t : fp.traces) {
            t.example = static_cast<std::size_t>(start) + t.example;
            rep.predictions.push_back(t.prediction);
            rep.costs.push_back(example_cost(net, t, !forced_action.has_value()));
            if (t.no_output()) ++rep.no_output;
            rep.traces.push_back(std::move(t));
        }
    }
    rep.metric = evaluate_metric(metric, rep.predictions, data.labels, positive_class);
    rep.accuracy = accuracy(rep.predictions, data.labels);
    double sq = 0.0;
    for (double c : rep.costs) rep.cost_mean += c;
    rep.cost_mean /= static_cast<double>(n);
    for (double c : rep.costs) sq += (c - rep.cost_mean) * (c - rep.cost_mean);
    rep.cost_std = std::sqrt(sq / static_cast<double>(n));
    rep.paths = path_histogram(net, rep.traces);
    return rep;
}

/// Header: epoch, loss_<node> per trained node, accuracy, efficiency, reward,
/// epsilon, cost_mean, cost_std.
void write_history_csv(std::ostream& os, const Network& net, std::span<const EpochRecord> history);

}  // namespace d2nn
