#include "d2nn/experiment.hpp"

#include <iomanip>
#include <map>

namespace d2nn {

RunResult train_and_evaluate(const Network& net, const Dataset& train, const Dataset& test, const TrainConfig& cfg,
                             const ParamStore<float>* init) {
    RunResult r;
    r.lambda = cfg.lambda;
    r.seed = cfg.seed;
    r.forced_action = cfg.forced_action;
    r.state = init ? TrainState<float>::from(net, *init) : TrainState<float>::init(net, cfg.seed);
    Trainer<float> trainer(net, cfg);
    r.history = trainer.train(r.state, train);
    r.eval = evaluate(net, r.state.params, test, cfg.metric, cfg.positive_class, cfg.forced_action);
    return r;
}

SweepResult sweep(const Network& net, const Dataset& train, const Dataset& test, const SweepOptions& opt) {
    if (opt.lambdas.empty() || opt.seeds.empty()) throw Error("sweep: need at least one lambda and one seed");
    SweepResult out;
    for (std::uint64_t seed : opt.seeds) {
        TrainConfig base = opt.config;
        base.seed = seed;
        base.lambda = 1.0;
        if (opt.baseline_epochs) base.epochs = *opt.baseline_epochs;
        base.forced_action = 0;
        out.low.push_back(train_and_evaluate(net, train, test, base));
        base.forced_action = -1;
        out.high.push_back(train_and_evaluate(net, train, test, base));
    }
    for (double lambda : opt.lambdas)
        for (std::size_t s = 0; s < opt.seeds.size(); ++s) {
            TrainConfig cfg = opt.config;
            cfg.lambda = lambda;
            cfg.seed = opt.seeds[s];
            cfg.forced_action.reset();
            out.runs.push_back(
                train_and_evaluate(net, train, test, cfg, opt.warm_start ? &out.high[s].state.params : nullptr));
        }
    return out;
}

namespace {

void row(std::ostream& os, const RunResult& r) {
    os << r.seed << ',' << r.eval.metric << ',' << r.eval.accuracy << ',' << r.eval.cost_mean << ',' << r.eval.cost_std;
}

}  // namespace

void write_curve_csv(std::ostream& os, const std::vector<RunResult>& runs) {
    os << "lambda,seed,metric,accuracy,cost_mean,cost_std,no_output\n" << std::setprecision(9);
    for (const auto& r : runs) {
        os << r.lambda << ',';
        row(os, r);
        os << ',' << r.eval.no_output << '\n';
    }
}

void write_baselines_csv(std::ostream& os, const SweepResult& r) {
    os << "baseline,seed,metric,accuracy,cost_mean,cost_std\n" << std::setprecision(9);
    for (const auto& b : r.low) {
        os << "low,";
        row(os, b);
        os << '\n';
    }
    for (const auto& b : r.high) {
        os << "high,";
        row(os, b);
        os << '\n';
    }
}

void write_paths_csv(std::ostream& os, const Network& net, const EvalReport& e) {
    std::map<std::string, std::pair<std::size_t, double>> acc;
    for (std::size_t i = 0; i < e.traces.size(); ++i) {
        if (e.traces[i].no_output()) continue;
        auto& [count, cost] = acc[path_signature(net, e.traces[i])];
        ++count;
        cost += e.costs[i];
    }
    os << "path,count,mean_cost\n" << std::setprecision(9);
    for (const auto& [path, v] : acc)
        os << '"' << path << "\"," << v.first << ',' << v.second / static_cast<double>(v.first) << '\n';
}

}  // namespace d2nn
