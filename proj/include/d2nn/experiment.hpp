#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "d2nn/learn.hpp"

namespace d2nn {

/// One trained network evaluated on held-out data.
struct RunResult {
    double lambda = 0.0;
    std::uint64_t seed = 0;
    std::optional<int> forced_action;  // set for static baselines
    std::vector<EpochRecord> history;
    TrainState<float> state;
    EvalReport eval;
};

/// Trains `cfg` on `train` (from `init` when given, else a fresh seeded
/// initialization) and evaluates greedily on `test` with the same metric.
RunResult train_and_evaluate(const Network& net, const Dataset& train, const Dataset& test, const TrainConfig& cfg,
                             const ParamStore<float>* init = nullptr);

struct SweepOptions {
    std::vector<double> lambdas{0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    TrainConfig config;
    /// Start every dynamic run from the same seed's full-path baseline
    /// instead of from scratch.
    bool warm_start = false;
    /// Epochs for the static baselines; the dynamic runs use config.epochs.
    std::optional<Index> baseline_epochs;
};

/// "low" forces every controller's first action, "high" its last (the
/// reference path). Baselines are trained at lambda 1 by the same harness.
struct SweepResult {
    std::vector<RunResult> runs;       // lambda-major, then seed
    std::vector<RunResult> low, high;  // one per seed
};

SweepResult sweep(const Network& net, const Dataset& train, const Dataset& test, const SweepOptions& opt);

/// Header: lambda,seed,metric,accuracy,cost_mean,cost_std,no_output
void write_curve_csv(std::ostream& os, const std::vector<RunResult>& runs);
/// Header: baseline,seed,metric,accuracy,cost_mean,cost_std
void write_baselines_csv(std::ostream& os, const SweepResult& r);
/// Header: path,count,mean_cost. Examples without output are left out.
void write_paths_csv(std::ostream& os, const Network& net, const EvalReport& e);

}  // namespace d2nn
