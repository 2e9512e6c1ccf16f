#include <doctest.h>

#include <random>
#include <sstream>

#include "d2nn/engine.hpp"
#include "support/oracles.hpp"
#include "support/random_graphs.hpp"

using namespace d2nn;

namespace {

// Q picks N2 (action 0) or N3 (action 1). N2 -> N4 -> N6 has no defaults;
// N8 merges N6 and N3 through zero defaults.
GraphDef skip_graph() {
    GraphDef g;
    g.add_node({"x", NodeKind::input, {}, {3}})
        .add_node({"N1", NodeKind::regular, {LayerSpec::linear(3), LayerSpec::relu()}})
        .add_node({"Q", NodeKind::control, {LayerSpec::linear(2)}})
        .add_node({"N2", NodeKind::regular, {LayerSpec::linear(3)}})
        .add_node({"N3", NodeKind::regular, {LayerSpec::linear(3)}})
        .add_node({"N4", NodeKind::regular, {LayerSpec::linear(3)}})
        .add_node({"N6", NodeKind::regular, {LayerSpec::linear(3)}})
        .add_node({"N8", NodeKind::regular, {LayerSpec::add(), LayerSpec::linear(2)}})
        .add_node({"y", NodeKind::output});
    g.connect("x", "N1").connect("N1", "Q").connect("N1", "N2").connect("N1", "N3");
    g.control("Q", "N2").control("Q", "N3");
    g.connect("N2", "N4").connect("N4", "N6");
    g.connect("N6", "N8", DefaultValue{}).connect("N3", "N8", DefaultValue{}).connect("N8", "y");
    return g;
}

std::map<std::string, std::vector<int>> random_decisions(const Network& net, std::size_t n, std::mt19937_64& rng) {
    std::map<std::string, std::vector<int>> forced;
    for (std::size_t q : net.control_nodes()) {
        auto& acts = forced[net.node(q).id];
        for (std::size_t i = 0; i < n; ++i) acts.push_back(static_cast<int>(rng() % net.num_actions(q)));
    }
    return forced;
}

Tensord example_row(const Tensord& batch, Index i) {
    Tensord row(with_batch(1, example_shape(batch.shape())));
    row.values() = batch.matrix().row(i).transpose();
    return row;
}

}  // namespace

TEST_CASE("forced skip nulls the chain but the defaulted merge executes") {
    Network net(skip_graph());
    auto params = ParamStore<double>::init(net, 1);
    Tensord x({1, 3}, {0.5, -0.2, 0.1});
    auto fp = forward(net, params, x, Policy::force({{"Q", {1}}}));
    const auto& t = fp.traces[0];
    CHECK_FALSE(t.executed(net.index_of("N2")));
    CHECK_FALSE(t.executed(net.index_of("N4")));
    CHECK_FALSE(t.executed(net.index_of("N6")));
    CHECK(t.output_status[net.index_of("N4")] == OutputStatus::null);
    CHECK(t.output_status[net.index_of("N6")] == OutputStatus::default_value);
    CHECK(t.executed(net.index_of("N3")));
    CHECK(t.executed(net.index_of("N8")));
    CHECK_FALSE(t.no_output());
    const Index expected = net.node_cost(net.index_of("N1")) + net.node_cost(net.index_of("Q")) +
                           net.node_cost(net.index_of("N3")) + net.node_cost(net.index_of("N8"));
    CHECK(trace_cost(t) == expected);
}

TEST_CASE("greedy ties go to the lowest index") {
    const double q[] = {0.5, 0.5, 0.1};
    CHECK(greedy_action(q) == 0);
    const double r[] = {0.1, 0.7, 0.7};
    CHECK(greedy_action(r) == 1);
}

TEST_CASE("batched forward matches the per-example interpreter on random graphs") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const Network net(oracle::random_graph(rng, {3, 9, trial % 4 == 0}));
        const auto params = ParamStore<double>::init(net, static_cast<std::uint64_t>(trial));
        const std::size_t n = 1 + rng() % 6;
        const Tensord x = oracle::random_tensor<double>(with_batch(static_cast<Index>(n), net.output_shape(net.inputs()[0])), rng);
        const auto forced = random_decisions(net, n, rng);
        const bool greedy = trial % 5 == 0;
        const auto fp = forward(net, params, x, greedy ? Policy::greedy() : Policy::force(forced), {false, false});
        for (std::size_t i = 0; i < n; ++i) {
            std::map<std::string, int> one;
            if (!greedy)
                for (const auto& [id, acts] : forced) one[id] = acts[i];
            const auto ref = reference_forward(net, params, example_row(x, static_cast<Index>(i)), one);
            const auto& got = fp.traces[i];
            CHECK(got.activation == ref.activation);
            CHECK(got.output_status == ref.output_status);
            CHECK(got.action == ref.action);
            CHECK(got.multiplications == ref.multiplications);
            CHECK(got.prediction == ref.prediction);
            REQUIRE(got.outputs.size() == ref.outputs.size());
            for (std::size_t k = 0; k < got.outputs.size(); ++k) {
                REQUIRE(got.outputs[k].size() == ref.outputs[k].size());
                for (std::size_t c = 0; c < got.outputs[k].size(); ++c)
                    CHECK(std::abs(got.outputs[k][c] - ref.outputs[k][c]) <= 1e-6);
            }
        }
    }
}

TEST_CASE("cost is the sum of executed node costs and nulls propagate") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 100; ++trial) {
        const Network net(oracle::random_graph(rng));
        const auto params = ParamStore<double>::init(net, 7);
        const std::size_t n = 5;
        const Tensord x = oracle::random_tensor<double>(with_batch(5, net.output_shape(net.inputs()[0])), rng);
        const auto fp = forward(net, params, x, Policy::force(random_decisions(net, n, rng)), {false, false});
        for (const auto& t : fp.traces) {
            Index total = 0;
            for (std::size_t v = 0; v < net.size(); ++v) {
                if (net.node(v).is_function() && t.executed(v)) total += net.node_cost(v);
                if (!net.node(v).is_function() || !t.executed(v)) continue;
                for (const auto& d : net.data_inputs(v)) {
                    // An executed node never consumed a null input.
                    CHECK((t.output_status[d.producer] != OutputStatus::null || d.default_value.has_value()));
                    if (!d.default_value) CHECK(t.executed(d.producer));
                }
            }
            CHECK(trace_cost(t) == total);
        }
        std::size_t counted = 0;
        for (const auto& [path, c] : path_histogram(net, fp.traces)) counted += c;
        std::size_t with_output = 0;
        for (const auto& t : fp.traces) with_output += t.no_output() ? 0 : 1;
        CHECK(counted == with_output);
    }
}

TEST_CASE("exploration decisions do not depend on batch composition") {
    std::mt19937_64 rng(23);
    const Network net(oracle::random_graph(rng, {6, 9, false}));
    const auto params = ParamStore<double>::init(net, 3);
    const Tensord x = oracle::random_tensor<double>(with_batch(8, net.output_shape(net.inputs()[0])), rng);
    const auto a = forward(net, params, x, Policy::explore(0.5, 99), {false, false});
    const auto b = forward(net, params, x, Policy::explore(0.5, 99), {false, false});
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(a.traces[i].action == b.traces[i].action);
        std::map<std::string, int> one;
        for (std::size_t q : net.control_nodes())
            if (a.traces[i].action[q] >= 0) one[net.node(q).id] = a.traces[i].action[q];
        const auto ref = reference_forward(net, params, example_row(x, static_cast<Index>(i)), one);
        CHECK(ref.activation == a.traces[i].activation);
    }
}

TEST_CASE("parameter gradients through routing match finite differences") {
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 20; ++trial) {
        const Network net(oracle::random_graph(rng, {3, 7, false}));
        auto params = ParamStore<double>::init(net, static_cast<std::uint64_t>(trial + 100));
        for (auto& node : params.nodes)
            for (auto& p : node)
                for (Index i = 0; i < p.bias.size(); ++i) p.bias[i] = 0.1 * static_cast<double>(i % 3) - 0.05;
        const Tensord x = oracle::random_tensor<double>(with_batch(4, net.output_shape(net.inputs()[0])), rng);
        const Policy policy = Policy::force(random_decisions(net, 4, rng));

        std::vector<Tensord> probes;
        auto loss = [&](const ParamStore<double>& ps) {
            const auto fp = forward(net, ps, x, policy, {false, false});
            double total = 0.0;
            for (std::size_t i = 0; i < 4; ++i)
                for (const auto& out : fp.traces[i].outputs)
                    for (std::size_t c = 0; c < out.size(); ++c) total += out[c] * (1.0 + 0.1 * static_cast<double>(c + i));
            return total;
        };

        auto fp = forward(net, params, x, policy);
        std::vector<Tape<double>::Seed> seeds;
        for (std::size_t o : net.outputs()) {
            const auto& val = fp.values[o];
            if (!val.var.valid()) continue;
            Tensord g(fp.tape.value(val.var).shape());
            auto m = g.matrix();
            for (std::size_t i = 0; i < 4; ++i)
                if (val.row[i] >= 0)
                    for (Index c = 0; c < m.cols(); ++c) m(val.row[i], c) = 1.0 + 0.1 * static_cast<double>(c + static_cast<Index>(i));
            seeds.push_back({val.var, g});
        }
        if (seeds.empty()) continue;
        fp.tape.backward(seeds);

        double worst = 0.0;
        for (std::size_t v = 0; v < net.size(); ++v)
            for (std::size_t l = 0; l < params.nodes[v].size(); ++l) {
                auto& p = params.nodes[v][l];
                if (p.kind == LayerParams<double>::Kind::none) continue;
                const bool ran = v < fp.params.size() && l < fp.params[v].size() && fp.params[v][l][0].valid();
                Tensord analytic = ran ? fp.tape.grad(fp.params[v][l][0]) : Tensord(p.weights.shape());
                Tensord numeric(p.weights.shape());
                for (Index i = 0; i < p.weights.size(); ++i) {
                    const double keep = p.weights[i];
                    p.weights[i] = keep + 1e-6;
                    const double up = loss(params);
                    p.weights[i] = keep - 1e-6;
                    const double down = loss(params);
                    p.weights[i] = keep;
                    numeric[i] = (up - down) / 2e-6;
                }
                worst = std::max(worst, oracle::relative_error(analytic, numeric));
            }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("trace CSV and normalized cost") {
    Network net(skip_graph());
    auto params = ParamStore<double>::init(net, 1);
    Tensord x({2, 3}, {0.5, -0.2, 0.1, 1, 2, 3});
    auto fp = forward(net, params, x, Policy::force({{"Q", {0, 1}}}), {false, false});
    const auto ref = net.reference_path();
    const double c1 = normalized_cost(fp.traces[1], net, ref);
    // Taking the last action everywhere costs the reference path plus the controller.
    CHECK(c1 == doctest::Approx(static_cast<double>(net.path_cost(ref) + net.node_cost(net.index_of("Q"))) /
                                static_cast<double>(net.path_cost(ref))));
    CHECK_THROWS_AS(normalized_cost(fp.traces[0], net, {}), GraphError);

    std::ostringstream os;
    write_trace_csv(os, net, fp.traces);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "example,path,multiplications,normalized_cost,actions,prediction");
    int rows = 0;
    while (std::getline(is, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), '"') == 4);
    }
    CHECK(rows == 2);
}
