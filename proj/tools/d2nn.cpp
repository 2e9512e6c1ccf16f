// d2nn command-line interface. Exit codes: 0 success, 1 invalid input or
// failed run, 2 usage / unreadable or malformed file.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "d2nn/archlib.hpp"
#include "d2nn/checkpoint.hpp"
#include "d2nn/data.hpp"
#include "d2nn/experiment.hpp"
#include "d2nn/spec_format.hpp"

namespace {

using namespace d2nn;

constexpr int kFailure = 1;
constexpr int kIoError = 2;

struct IoFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_file(const std::string& path) {
    if (!std::filesystem::is_regular_file(path)) throw IoFailure(path + ": no such file");
}

Dataset load_data(const std::string& path, const std::string& labels) {
    require_file(path);
    if (labels.empty()) return load_raw(path);
    require_file(labels);
    return load_idx(path, labels);
}

GraphDef load_graph(const std::string& path) {
    require_file(path);
    return load_spec_file(path);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoFailure(path + ": cannot open for writing");
    return os;
}

// Writes to `path`, or to stdout when it is empty or "-".
template <typename Fn>
void emit(const std::string& path, Fn&& fn) {
    if (path.empty() || path == "-") {
        fn(std::cout);
        return;
    }
    auto os = open_out(path);
    fn(os);
}

struct TrainArgs {
    std::string spec, data, labels, out, history, init, resume;
    double lambda = 1.0;
    TrainConfig cfg;
    std::string metric = "f1", optimizer = "adam", loss = "unified";
    int forced = 0;
    bool has_forced = false;
    Index stop_after = -1;
};

void add_config_options(CLI::App* cmd, TrainArgs& a) {
    cmd->add_option("--bag-size", a.cfg.bag_size, "examples per mini-bag")->check(CLI::PositiveNumber);
    cmd->add_option("--bags-per-batch", a.cfg.bags_per_batch)->check(CLI::PositiveNumber);
    cmd->add_option("--epochs", a.cfg.epochs)->check(CLI::NonNegativeNumber);
    cmd->add_option("--lr", a.cfg.learning_rate);
    cmd->add_option("--optimizer", a.optimizer)->check(CLI::IsMember({"adam", "sgd"}));
    cmd->add_option("--momentum", a.cfg.momentum);
    cmd->add_option("--weight-decay", a.cfg.weight_decay);
    cmd->add_option("--grad-clip", a.cfg.grad_clip);
    cmd->add_option("--epsilon-initial", a.cfg.epsilon_initial);
    cmd->add_option("--epsilon-final", a.cfg.epsilon_final);
    cmd->add_option("--epsilon-decay", a.cfg.epsilon_decay_fraction, "fraction of training over which epsilon decays");
    cmd->add_option("--metric", a.metric)->check(CLI::IsMember({"f1", "accuracy"}));
    cmd->add_option("--positive-class", a.cfg.positive_class);
    cmd->add_option("--output-loss", a.loss)->check(CLI::IsMember({"unified", "cross-entropy"}));
    cmd->add_flag("--no-counterfactual", [&a](std::int64_t) { a.cfg.counterfactual_classes = false; },
                  "unified loss: train only the predicted class score");
    cmd->add_option("--seed", a.cfg.seed);
}

void finish_config(TrainArgs& a) {
    a.cfg.metric = *parse_metric(a.metric);
    a.cfg.optimizer = a.optimizer == "sgd" ? Optimizer::sgd : Optimizer::adam;
    a.cfg.output_loss = a.loss == "unified" ? OutputLoss::unified : OutputLoss::cross_entropy;
}

int cmd_validate(const std::string& path) {
    const GraphDef g = load_graph(path);
    const auto report = validate(g);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& v : report.violations) std::cerr << v.message << '\n';
    if (!report.ok()) return kFailure;
    const Network net(g);
    std::cout << "ok: " << g.nodes.size() << " nodes, " << g.edges.size() << " edges, reference path costs "
              << net.path_cost(net.reference_path()) << " multiplications\n";
    return 0;
}

int cmd_train(TrainArgs& a, const CLI::App& cmd) {
    finish_config(a);
    Checkpoint ck;
    if (!a.resume.empty()) {
        require_file(a.resume);
        ck = load_checkpoint(a.resume);
        if (cmd.count("--epochs")) ck.config.epochs = a.cfg.epochs;
    } else {
        ck.graph = load_graph(a.spec);
        ck.config = a.cfg;
        ck.config.lambda = a.lambda;
        if (a.has_forced) ck.config.forced_action = a.forced;
    }
    const Dataset data = load_data(a.data, a.labels);
    const Network net(ck.graph);
    Trainer<float> trainer(net, ck.config);
    if (a.resume.empty()) {
        if (a.init.empty()) {
            ck.state = TrainState<float>::init(net, ck.config.seed);
        } else {
            require_file(a.init);
            const Checkpoint warm = load_checkpoint(a.init);
            if (emit_spec(warm.graph) != emit_spec(ck.graph))
                throw GraphError(a.init + ": checkpoint holds a different graph");
            ck.state = TrainState<float>::from(net, warm.state.params);
        }
    }
    ck.horizon = ck.config.epochs > 0 ? trainer.schedule(data.size()).horizon : 0;
    const auto history = trainer.train(ck.state, data, nullptr, a.stop_after);
    save_checkpoint(ck, a.out);
    if (!a.history.empty()) emit(a.history, [&](std::ostream& os) { write_history_csv(os, net, history); });
    if (!history.empty()) {
        const auto& last = history.back();
        std::cerr << "epoch " << last.epoch << ": " << metric_name(ck.config.metric) << ' ' << last.accuracy
                  << ", cost " << last.cost_mean << ", reward " << last.reward << '\n';
    }
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_path, const std::string& labels,
             const std::string& trace_out) {
    require_file(ckpt);
    const Checkpoint ck = load_checkpoint(ckpt);
    const Dataset data = load_data(data_path, labels);
    const Network net(ck.graph);
    const auto rep = evaluate(net, ck.state.params, data, ck.config.metric, ck.config.positive_class,
                              ck.config.forced_action);
    Index total = 0;
    for (const auto& t : rep.traces) total += trace_cost(t);
    std::cout << std::setprecision(9) << "key,value\n"
              << "examples," << data.size() << '\n'
              << metric_name(ck.config.metric) << ',' << rep.metric << '\n'
              << "accuracy," << rep.accuracy << '\n'
              << "cost_mean," << rep.cost_mean << '\n'
              << "cost_std," << rep.cost_std << '\n'
              << "multiplications," << total << '\n'
              << "no_output," << rep.no_output << '\n';
    for (const auto& [path, count] : rep.paths) std::cout << "path " << path << ',' << count << '\n';
    if (!trace_out.empty()) emit(trace_out, [&](std::ostream& os) { write_trace_csv(os, net, rep.traces); });
    return 0;
}

int cmd_paths(const std::string& ckpt, const std::string& data_path, const std::string& labels,
              const std::string& out) {
    require_file(ckpt);
    const Checkpoint ck = load_checkpoint(ckpt);
    const Dataset data = load_data(data_path, labels);
    const Network net(ck.graph);
    const auto rep = evaluate(net, ck.state.params, data, ck.config.metric, ck.config.positive_class,
                              ck.config.forced_action);
    emit(out, [&](std::ostream& os) { write_paths_csv(os, net, rep); });
    std::cerr << "no_output," << rep.no_output << '\n';
    return 0;
}

struct SweepArgs {
    TrainArgs t;
    std::string test, test_labels, curve, baselines;
    std::vector<double> lambdas;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    bool warm_start = false;
};

int cmd_sweep(SweepArgs& a) {
    finish_config(a.t);
    if (a.lambdas.size() < 2) throw Error("sweep needs at least two lambda values");
    const GraphDef g = load_graph(a.t.spec);
    Dataset train = load_data(a.t.data, a.t.labels);
    Dataset test;
    if (a.test.empty()) {
        // Hold out the last fifth of the file.
        const std::size_t n = static_cast<std::size_t>(train.size()), cut = n - n / 5;
        std::vector<std::size_t> head(cut), tail(n - cut);
        std::iota(head.begin(), head.end(), std::size_t{0});
        std::iota(tail.begin(), tail.end(), cut);
        test = train.subset(tail);
        train = train.subset(head);
    } else {
        test = load_data(a.test, a.test_labels);
    }
    const Network net(g);
    SweepOptions opt;
    opt.lambdas = a.lambdas;
    opt.seeds = a.seeds;
    opt.config = a.t.cfg;
    opt.warm_start = a.warm_start;
    const auto result = sweep(net, train, test, opt);
    emit(a.curve, [&](std::ostream& os) { write_curve_csv(os, result.runs); });
    std::string companion = a.baselines;
    if (companion.empty() && !a.curve.empty() && a.curve != "-") {
        const std::filesystem::path p(a.curve);
        companion = (p.parent_path() / (p.stem().string() + "_baselines" + p.extension().string())).string();
    }
    if (!companion.empty()) emit(companion, [&](std::ostream& os) { write_baselines_csv(os, result); });
    return 0;
}

int cmd_gen_data(const std::string& task, SyntheticTask t, const std::string& out, const std::string& labels) {
    if (task == "binary") t.kind = SyntheticTask::Kind::binary;
    else if (task == "cascade") t.kind = SyntheticTask::Kind::cascade;
    else t.kind = SyntheticTask::Kind::hierarchical;
    const Dataset d = gen_synthetic(t);
    if (labels.empty()) save_raw(d, out);
    else save_idx(d, out, labels);
    return 0;
}

int cmd_emit_arch(const std::string& arch, const ArchParams& p, const std::string& out) {
    GraphDef g;
    if (arch == "high-low") g = build_high_low(p);
    else if (arch == "cascade") g = build_cascade(p);
    else if (arch == "chain") g = build_chain(p);
    else g = build_hierarchical(p);
    emit(out, [&](std::ostream& os) { os << emit_spec(g); });
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic deep neural networks: validate, train, evaluate and analyse D2NN graphs"};
    app.require_subcommand(1);
    std::function<int()> run;

    std::string path;
    auto* validate_cmd = app.add_subcommand("validate", "check a graph spec against the structural rules");
    validate_cmd->add_option("spec", path)->required();
    validate_cmd->callback([&] { run = [&] { return cmd_validate(path); }; });

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "train a graph with mini-bag Q-learning");
    train_cmd->add_option("spec", ta.spec, "graph spec (ignored with --resume)")->required();
    train_cmd->add_option("data", ta.data, "D2NR file, or IDX images with --labels")->required();
    train_cmd->add_option("--labels", ta.labels, "IDX label file");
    train_cmd->add_option("--lambda", ta.lambda, "accuracy weight in the reward")->check(CLI::Range(0.0, 1.0));
    train_cmd->add_option("--out", ta.out, "checkpoint to write")->required();
    train_cmd->add_option("--history", ta.history, "per-epoch CSV");
    train_cmd->add_option("--init", ta.init, "start from this checkpoint's parameters");
    train_cmd->add_option("--resume", ta.resume, "continue this checkpoint's run");
    train_cmd->add_option("--stop-after", ta.stop_after, "save after this many epochs; --resume continues the run")
        ->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--forced", ta.forced, "train a static baseline: every controller takes this action (-1 = last)")
        ->each([&](const std::string&) { ta.has_forced = true; });
    add_config_options(train_cmd, ta);
    train_cmd->callback([&] { run = [&] { return cmd_train(ta, *train_cmd); }; });

    std::string ckpt, data, labels, out;
    auto* eval_cmd = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
    eval_cmd->add_option("checkpoint", ckpt)->required();
    eval_cmd->add_option("data", data)->required();
    eval_cmd->add_option("--labels", labels);
    eval_cmd->add_option("--traces", out, "per-example CSV");
    eval_cmd->callback([&] { run = [&] { return cmd_eval(ckpt, data, labels, out); }; });

    auto* paths_cmd = app.add_subcommand("paths", "execution-path histogram of a checkpoint");
    paths_cmd->add_option("checkpoint", ckpt)->required();
    paths_cmd->add_option("data", data)->required();
    paths_cmd->add_option("--labels", labels);
    paths_cmd->add_option("--out", out, "CSV file (default stdout)");
    paths_cmd->callback([&] { run = [&] { return cmd_paths(ckpt, data, labels, out); }; });

    SweepArgs sa;
    auto* sweep_cmd = app.add_subcommand("sweep", "train over a lambda grid and several seeds");
    sweep_cmd->add_option("spec", sa.t.spec)->required();
    sweep_cmd->add_option("data", sa.t.data)->required();
    sweep_cmd->add_option("--labels", sa.t.labels);
    sweep_cmd->add_option("--lambdas", sa.lambdas)->delimiter(',')->required();
    sweep_cmd->add_option("--seeds", sa.seeds)->delimiter(',');
    sweep_cmd->add_option("--test", sa.test, "held-out set (default: last fifth of data)");
    sweep_cmd->add_option("--test-labels", sa.test_labels);
    sweep_cmd->add_option("--out", sa.curve, "curve CSV (default stdout)");
    sweep_cmd->add_option("--baselines", sa.baselines, "static baseline CSV (default: <out>_baselines.csv)");
    sweep_cmd->add_flag("--warm-start", sa.warm_start, "start dynamic runs from the full-path baseline");
    add_config_options(sweep_cmd, sa.t);
    sweep_cmd->callback([&] { run = [&] { return cmd_sweep(sa); }; });

    std::string task = "binary";
    SyntheticTask st;
    auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic dataset");
    gen_cmd->add_option("task", task)->check(CLI::IsMember({"binary", "cascade", "hierarchical"}));
    gen_cmd->add_option("--count", st.count)->check(CLI::PositiveNumber);
    gen_cmd->add_option("--size", st.image_size);
    gen_cmd->add_option("--hard-fraction", st.hard_fraction)->check(CLI::Range(0.0, 1.0));
    gen_cmd->add_option("--easy-negatives", st.easy_negative_fraction)->check(CLI::Range(0.0, 1.0));
    gen_cmd->add_option("--seed", st.seed);
    gen_cmd->add_option("--out", out, "D2NR file, or IDX images with --labels")->required();
    gen_cmd->add_option("--labels", labels, "write IDX and put labels here");
    gen_cmd->callback([&] { run = [&] { return cmd_gen_data(task, st, out, labels); }; });

    std::string arch;
    ArchParams ap;
    auto* arch_cmd = app.add_subcommand("emit-arch", "print a stock architecture as a graph spec");
    arch_cmd->add_option("arch", arch)->required()->check(CLI::IsMember({"high-low", "cascade", "chain", "hierarchical"}));
    arch_cmd->add_option("--size", ap.image_size);
    arch_cmd->add_option("--classes", ap.classes);
    arch_cmd->add_option("--stages", ap.stages);
    arch_cmd->add_option("--out", out);
    arch_cmd->callback([&] { run = [&] { return cmd_emit_arch(arch, ap, out); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kIoError;
    }
    try {
        return run();
    } catch (const IoFailure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIoError;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIoError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
}
