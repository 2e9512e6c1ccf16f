#include <doctest.h>

#include <filesystem>

#include "d2nn/archlib.hpp"
#include "d2nn/engine.hpp"
#include "d2nn/spec_format.hpp"

using namespace d2nn;

namespace {

std::size_t count_kind(const GraphDef& g, NodeKind k) {
    return static_cast<std::size_t>(
        std::count_if(g.nodes.begin(), g.nodes.end(), [k](const NodeDef& n) { return n.kind == k; }));
}

std::string spec_path(const std::string& name) { return std::string(D2NN_SOURCE_DIR) + "/specs/" + name; }

}  // namespace

TEST_CASE("high-low topology") {
    const GraphDef g = build_high_low();
    CHECK(validate(g).ok());
    CHECK(count_kind(g, NodeKind::regular) + count_kind(g, NodeKind::control) == 4);
    const Network net(g);
    const auto q = net.index_of("Q");
    REQUIRE(net.num_actions(q) == 2);
    CHECK(net.node(net.control_targets(q)[0]).id == "N3");
    CHECK(net.node(net.control_targets(q)[1]).id == "N2");
    // The low path is much cheaper than the high one.
    CHECK(net.path_cost(net.static_path(0)) * 4 < net.path_cost(net.static_path(1)));
}

TEST_CASE("cascade topology") {
    const GraphDef g = build_cascade();
    CHECK(validate(g).ok());
    CHECK(count_kind(g, NodeKind::control) == 3);
    CHECK(count_kind(g, NodeKind::regular) == 7);
    ArchParams p;
    p.stages = 2;
    CHECK(count_kind(build_cascade(p), NodeKind::control) == 1);
    p.stages = 1;
    CHECK_THROWS_AS(build_cascade(p), GraphError);

    // Stopping at the first controller executes only the stem and one head.
    const Network net(g);
    const auto path = net.static_path(0);
    CHECK(path.size() == 2);
}

TEST_CASE("chain topology merges through zero defaults") {
    const GraphDef g = build_chain();
    CHECK(validate(g).ok());
    const Network net(g);
    CHECK(net.control_nodes().size() == 4);
    for (std::size_t v = 0; v < net.size(); ++v)
        if (net.node(v).id.starts_with("M"))
            for (const auto& d : net.data_inputs(v)) CHECK(d.default_value.has_value());
}

TEST_CASE("hierarchical topology allows both branches at once") {
    const GraphDef g = build_hierarchical();
    CHECK(validate(g).ok());
    const Network net(g);
    CHECK(net.outputs().size() == 5);
    CHECK(net.class_count() == 10);
    // Q1 and Q2 both choose their branch: every leaf can produce a value.
    auto params = ParamStore<float>::init(net, 1);
    Tensorf x({1, 1, 16, 16}, 0.5f);
    std::map<std::string, std::vector<int>> all_on;
    for (std::size_t q : net.control_nodes()) all_on[net.node(q).id] = {1};
    const auto fp = forward(net, params, x, Policy::force(all_on), {false, false});
    CHECK(fp.traces[0].executed(net.index_of("N2")));
    CHECK(fp.traces[0].executed(net.index_of("N3")));
    for (const char* leaf : {"N4", "N5", "N6", "N7", "N8"}) CHECK(fp.traces[0].executed(net.index_of(leaf)));
}

TEST_CASE("controllers stay within five percent of what they control") {
    for (const auto& g : {build_high_low(), build_cascade(), build_chain(), build_hierarchical()})
        CHECK(controller_budget_violations(Network(g)).empty());
    ArchParams p;
    p.image_size = 32;
    CHECK(controller_budget_violations(Network(build_high_low(p))).empty());
}

TEST_CASE("shipped specs equal the builders and validate") {
    const std::pair<const char*, GraphDef> shipped[] = {{"high_low.d2nn", build_high_low()},
                                                        {"cascade.d2nn", build_cascade()},
                                                        {"chain.d2nn", build_chain()},
                                                        {"hierarchical.d2nn", build_hierarchical()}};
    for (const auto& [file, built] : shipped) {
        CAPTURE(file);
        const GraphDef g = load_spec_file(spec_path(file));
        CHECK(g == built);
        CHECK(controller_budget_violations(Network(g)).empty());
    }
    for (const auto& e : std::filesystem::directory_iterator(spec_path("appendix_c")))
        CHECK(validate(load_spec_file(e.path().string())).ok());
}

TEST_CASE("bad architecture parameters") {
    ArchParams p;
    p.image_size = 4;
    CHECK_THROWS_AS(build_high_low(p), GraphError);
    p = {};
    p.high_filters = 0;
    CHECK_THROWS_AS(build_high_low(p), GraphError);
}
