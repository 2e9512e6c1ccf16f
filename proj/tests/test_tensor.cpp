#include <doctest.h>

#include <random>

#include "d2nn/layer.hpp"
#include "d2nn/tape.hpp"
#include "support/oracles.hpp"

using namespace d2nn;

namespace {

bool close(const Tensord& a, const Tensord& b, double tol) {
    return a.shape() == b.shape() && (a.values() - b.values()).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace

TEST_CASE("linear worked examples") {
    Tensord x({1, 2}, {1, 1});
    Tensord w({1, 2}, {2, 3});
    Tensord b({1}, {1});
    CHECK(ops::linear(x, w, b)[0] == 6.0);

    Tensord eye({2, 2}, {1, 0, 0, 1});
    Tensord xs({2, 2}, {1, 2, 3, 4});
    CHECK(ops::linear(xs, eye, Tensord({2})) == xs);
}

TEST_CASE("linear matches triple loop") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 30; ++trial) {
        const Index n = 1 + static_cast<Index>(rng() % 5), in = 1 + static_cast<Index>(rng() % 7),
                    out = 1 + static_cast<Index>(rng() % 6);
        auto x = oracle::random_tensor<double>({n, in}, rng);
        auto w = oracle::random_tensor<double>({out, in}, rng);
        auto b = oracle::random_tensor<double>({out}, rng);
        CHECK(close(ops::linear(x, w, b), oracle::linear(x, w, b), 1e-12));
    }
}

TEST_CASE("linear shape mismatch names both shapes") {
    Tensord x({2, 3});
    Tensord w({4, 5});
    try {
        ops::linear(x, w, Tensord({4}));
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4,5]") != std::string::npos);
    }
}

TEST_CASE("conv2d worked examples") {
    Tensord ones({1, 1, 3, 3}, 1.0);
    Tensord k({1, 1, 3, 3}, 1.0);
    auto y = ops::conv2d(ones, k, Tensord({1}), 1, 1);
    REQUIRE(y.shape() == Shape{1, 1, 3, 3});
    CHECK(y[4] == 9.0);
    CHECK(y[0] == 4.0);

    std::mt19937_64 rng(2);
    auto x = oracle::random_tensor<double>({2, 1, 4, 5}, rng);
    auto twice = ops::conv2d(x, Tensord({1, 1, 1, 1}, 2.0), Tensord({1}), 1, 0);
    CHECK(close(twice, Tensord(x.shape(), Tensord::Vector(2.0 * x.values())), 0.0));
}

TEST_CASE("conv2d matches six-loop oracle") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 40; ++trial) {
        const Index n = 1 + static_cast<Index>(rng() % 3), c = 1 + static_cast<Index>(rng() % 3),
                    k = 1 + static_cast<Index>(rng() % 3), stride = 1 + static_cast<Index>(rng() % 2),
                    pad = static_cast<Index>(rng() % 2);
        const Index h = k + static_cast<Index>(rng() % 5), w = k + static_cast<Index>(rng() % 5);
        const Index oc = 1 + static_cast<Index>(rng() % 4);
        auto x = oracle::random_tensor<double>({n, c, h, w}, rng);
        auto wt = oracle::random_tensor<double>({oc, c, k, k}, rng);
        auto b = oracle::random_tensor<double>({oc}, rng);
        CHECK(close(ops::conv2d(x, wt, b, stride, pad), oracle::conv2d(x, wt, b, stride, pad), 1e-12));
    }
}

TEST_CASE("conv2d rejects a kernel larger than the padded input") {
    CHECK_THROWS_AS(ops::conv2d(Tensord({1, 1, 2, 2}), Tensord({1, 1, 5, 5}), Tensord({1}), 1, 1), ShapeError);
}

TEST_CASE("maxpool worked examples and oracle") {
    Tensord x({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(ops::maxpool2d(x, 2, 2).output[0] == 4.0);
    Tensord c({1, 2, 4, 4}, 0.5);
    auto y = ops::maxpool2d(c, 2, 2).output;
    for (Index i = 0; i < y.size(); ++i) CHECK(y[i] == 0.5);

    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 30; ++trial) {
        const Index k = 1 + static_cast<Index>(rng() % 3), s = 1 + static_cast<Index>(rng() % 3);
        auto r = oracle::random_tensor<double>({2, 2, k + static_cast<Index>(rng() % 5), k + static_cast<Index>(rng() % 5)}, rng);
        CHECK(close(ops::maxpool2d(r, k, s).output, oracle::maxpool(r, k, s), 0.0));
    }
}

TEST_CASE("maxpool gradient goes to the first maximum on ties") {
    Tape<double> tape;
    Var x = tape.variable(Tensord({1, 1, 2, 2}, 7.0));
    Var y = ad::maxpool2d(tape, x, 2, 2);
    std::vector<Tape<double>::Seed> seeds{{y, Tensord({1, 1, 1, 1}, 1.0)}};
    tape.backward(seeds);
    CHECK(tape.grad(x) == Tensord({1, 1, 2, 2}, {1, 0, 0, 0}));
}

TEST_CASE("relu, add, reshape") {
    Tensord x({1, 4}, {-1, 0, 2, -3});
    CHECK(ops::relu(x) == Tensord({1, 4}, {0, 0, 2, 0}));
    CHECK(ops::add(x, Tensord({1, 4})) == x);
    CHECK_THROWS_AS(ops::add(x, Tensord({1, 3})), ShapeError);
    CHECK(ops::reshape(ops::reshape(x, {1, 2, 2}), {1, 4}) == x);
    CHECK_THROWS_AS(ops::reshape(x, {1, 3}), ShapeError);
}

TEST_CASE("backward of sum through identity-weight linear gives ones") {
    Tape<double> tape;
    Var x = tape.variable(Tensord({3, 2}, {1, 2, 3, 4, 5, 6}));
    Var w = tape.constant(Tensord({2, 2}, {1, 0, 0, 1}));
    Var b = tape.constant(Tensord({2}));
    Var y = ad::linear(tape, x, w, b);
    std::vector<Tape<double>::Seed> seeds{{y, Tensord({3, 2}, 1.0)}};
    tape.backward(seeds);
    CHECK(tape.grad(x) == Tensord({3, 2}, 1.0));
}

TEST_CASE("masked examples get zero gradient") {
    std::mt19937_64 rng(5);
    Tape<double> tape;
    Var x = tape.variable(oracle::random_tensor<double>({4, 3}, rng));
    Var w = tape.variable(oracle::random_tensor<double>({2, 3}, rng));
    Var b = tape.variable(oracle::random_tensor<double>({2}, rng));
    Var y = ad::relu(tape, ad::linear(tape, x, w, b));
    std::vector<Tape<double>::Seed> seeds{{y, Tensord({4, 2}, 1.0)}};
    const bool mask[] = {true, false, true, false};
    tape.backward(seeds, mask);
    auto g = tape.grad(x).matrix();
    CHECK(g.row(1).isZero());
    CHECK(g.row(3).isZero());
}

TEST_CASE("backward on an empty tape is an error") {
    Tape<double> tape;
    CHECK_THROWS_AS(tape.backward(std::span<const Tape<double>::Seed>()), Error);
}

TEST_CASE("gradients are deterministic") {
    auto run = [] {
        std::mt19937_64 rng(6);
        Tape<double> tape;
        Var x = tape.variable(oracle::random_tensor<double>({2, 2, 5, 5}, rng));
        Var w = tape.variable(oracle::random_tensor<double>({3, 2, 3, 3}, rng));
        Var b = tape.variable(oracle::random_tensor<double>({3}, rng));
        Var y = ad::conv2d(tape, x, w, b, 1, 1);
        std::vector<Tape<double>::Seed> seeds{{y, oracle::random_tensor<double>({2, 3, 5, 5}, rng)}};
        tape.backward(seeds);
        return tape.grad(w);
    };
    CHECK(run() == run());
}

TEST_CASE("finite-difference check of a three-layer MLP") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<Tensord> leaves{oracle::random_tensor<double>({3, 4}, rng),
                                    oracle::random_tensor<double>({5, 4}, rng), oracle::random_tensor<double>({5}, rng),
                                    oracle::random_tensor<double>({4, 5}, rng), oracle::random_tensor<double>({4}, rng),
                                    oracle::random_tensor<double>({2, 4}, rng), oracle::random_tensor<double>({2}, rng)};
        auto r = oracle::check_gradients(
            leaves,
            [](Tape<double>& t, const std::vector<Var>& v) {
                Var h = ad::relu(t, ad::linear(t, v[0], v[1], v[2]));
                h = ad::relu(t, ad::linear(t, h, v[3], v[4]));
                return ad::linear(t, h, v[5], v[6]);
            },
            rng);
        CHECK(r.ok(1e-4));
    }
}

TEST_CASE("multiplication counts") {
    CHECK(mult_count(LayerSpec::linear(3), {1, 4}) == 12);
    CHECK(mult_count(LayerSpec::conv2d(2, 3, 1, 1), {1, 1, 8, 8}) == 1152);
    CHECK(mult_count(LayerSpec::conv2d(8, 3, 2, 1), {1, 1, 112, 112}) == 225792);
    CHECK(mult_count(LayerSpec::relu(), {1, 5}) == 0);
    CHECK(mult_count(LayerSpec::maxpool(2, 2), {1, 1, 4, 4}) == 0);

    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const Index n = 1 + static_cast<Index>(rng() % 3), c = 1 + static_cast<Index>(rng() % 3);
        const Index k = 1 + static_cast<Index>(rng() % 3), s = 1 + static_cast<Index>(rng() % 2),
                    p = static_cast<Index>(rng() % 2), oc = 1 + static_cast<Index>(rng() % 3);
        const Index h = k + static_cast<Index>(rng() % 4), w = k + static_cast<Index>(rng() % 4);
        Index counted = 0;
        oracle::conv2d(Tensord({n, c, h, w}), Tensord({oc, c, k, k}), Tensord({oc}), s, p, &counted);
        CHECK(mult_count(LayerSpec::conv2d(oc, k, s, p), {n, c, h, w}) == counted);

        const Index in = 1 + static_cast<Index>(rng() % 9), out = 1 + static_cast<Index>(rng() % 9);
        counted = 0;
        oracle::linear(Tensord({n, in}), Tensord({out, in}), Tensord({out}), &counted);
        CHECK(mult_count(LayerSpec::linear(out), {n, in}) == counted);
    }
}
