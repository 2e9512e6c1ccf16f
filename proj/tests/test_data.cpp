#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "d2nn/data.hpp"
#include "d2nn/error.hpp"

using namespace d2nn;
namespace fs = std::filesystem;

namespace {

std::string fixture(const char* name) { return std::string(D2NN_SOURCE_DIR) + "/tests/fixtures/" + name; }

struct TempDir {
    fs::path path = fs::temp_directory_path() / ("d2nn_data_" + std::to_string(std::rand()));
    TempDir() { fs::create_directories(path); }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const char* f) const { return (path / f).string(); }
};

std::vector<unsigned char> bytes_of(const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& p, const std::vector<unsigned char>& b) {
    std::ofstream os(p, std::ios::binary);
    os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// Logistic regression by full-batch gradient descent; returns test accuracy.
double linear_probe(const Dataset& train, const Dataset& test) {
    const Index d = train.images.row_size();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    double b = 0.0;
    const Eigen::MatrixXd x = train.images.matrix().cast<double>();
    Eigen::VectorXd y(train.size());
    for (Index i = 0; i < train.size(); ++i) y[i] = train.labels[static_cast<std::size_t>(i)];
    for (int it = 0; it < 400; ++it) {
        const Eigen::VectorXd z = (x * w).array() + b;
        const Eigen::VectorXd p = (1.0 + (-z.array()).exp()).inverse();
        const Eigen::VectorXd g = p - y;
        w -= 0.5 * (x.transpose() * g) / static_cast<double>(train.size());
        b -= 0.5 * g.mean();
    }
    const Eigen::MatrixXd xt = test.images.matrix().cast<double>();
    const Eigen::VectorXd zt = (xt * w).array() + b;
    double hits = 0;
    for (Index i = 0; i < test.size(); ++i) hits += (zt[i] > 0 ? 1 : 0) == test.labels[static_cast<std::size_t>(i)];
    return hits / static_cast<double>(test.size());
}

}  // namespace

TEST_CASE("synthetic data is deterministic and balanced") {
    const SyntheticTask t{SyntheticTask::Kind::binary, 16, 101, 0.5, 0.8, 42};
    const Dataset a = gen_synthetic(t), b = gen_synthetic(t);
    CHECK(a.labels == b.labels);
    CHECK(a.hard == b.hard);
    CHECK(std::equal(a.images.data(), a.images.data() + a.images.size(), b.images.data()));
    CHECK(a.images.shape() == Shape{101, 1, 16, 16});
    CHECK(std::count(a.labels.begin(), a.labels.end(), 1) == 50);

    const Dataset even = gen_synthetic({SyntheticTask::Kind::binary, 16, 200, 0.5, 0.8, 1});
    CHECK(std::count(even.labels.begin(), even.labels.end(), 1) == 100);
    CHECK(std::count(even.hard.begin(), even.hard.end(), 1) == 100);

    auto other = t;
    other.seed = 43;
    CHECK(gen_synthetic(other).labels != a.labels);
}

TEST_CASE("cascade and hierarchical task composition") {
    const Dataset c = gen_synthetic({SyntheticTask::Kind::cascade, 16, 1000, 1.0, 0.8, 3});
    std::size_t easy_neg = 0, pos = 0;
    for (std::size_t i = 0; i < c.labels.size(); ++i) {
        easy_neg += c.labels[i] == 0 && !c.hard[i];
        pos += c.labels[i] == 1;
    }
    CHECK(easy_neg == 800);
    CHECK(pos == 100);

    const Dataset h = gen_synthetic({SyntheticTask::Kind::hierarchical, 16, 1000, 0.5, 0.8, 3});
    for (int k = 0; k < 10; ++k) CHECK(std::count(h.labels.begin(), h.labels.end(), k) == 100);
    CHECK(superclass_of(3) == 0);
    CHECK(superclass_of(4) == 1);
    CHECK(superclass_of(9) == 1);
}

TEST_CASE("easy examples are linearly separable and hard ones are not") {
    auto make = [](double hard, std::uint64_t seed, Index n) {
        return gen_synthetic({SyntheticTask::Kind::binary, 16, n, hard, 0.8, seed});
    };
    const double easy = linear_probe(make(0.0, 1, 2000), make(0.0, 2, 1000));
    const double hard = linear_probe(make(1.0, 1, 2000), make(1.0, 2, 1000));
    MESSAGE("linear probe accuracy: easy " << easy << ", hard " << hard);
    CHECK(easy >= 0.95);
    CHECK(hard <= 0.75);
    CHECK(easy - hard >= 0.2);
}

TEST_CASE("raw container round trip and errors") {
    TempDir dir;
    const Dataset d = gen_synthetic({SyntheticTask::Kind::hierarchical, 12, 100, 0.5, 0.8, 9});
    save_raw(d, dir / "d.d2nr");
    const Dataset back = load_raw(dir / "d.d2nr");
    CHECK(back.labels == d.labels);
    CHECK(back.images.shape() == d.images.shape());
    CHECK(std::equal(d.images.data(), d.images.data() + d.images.size(), back.images.data()));
    CHECK(back.hard.empty());

    auto bytes = bytes_of(dir / "d.d2nr");
    auto cut = bytes;
    cut.resize(cut.size() / 2);
    write_bytes(dir / "cut.d2nr", cut);
    try {
        load_raw(dir / "cut.d2nr");
        FAIL("expected an error");
    } catch (const FormatError& e) {
        CHECK(e.kind() == FormatError::Kind::truncated);
    }
    auto bad = bytes;
    bad[0] = 'X';
    write_bytes(dir / "bad.d2nr", bad);
    try {
        load_raw(dir / "bad.d2nr");
        FAIL("expected an error");
    } catch (const FormatError& e) {
        CHECK(e.kind() == FormatError::Kind::bad_magic);
    }
    CHECK_THROWS_AS(load_raw(dir / "missing.d2nr"), FormatError);

    // Header claiming 2^32 - 1 examples of 2^32 - 1 squared pixels.
    std::vector<unsigned char> huge{'D', '2', 'N', 'R', 0xff, 0xff, 0xff, 0xff, 2, 0, 0, 0,
                                    0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff};
    write_bytes(dir / "huge.d2nr", huge);
    try {
        load_raw(dir / "huge.d2nr");
        FAIL("expected an error");
    } catch (const FormatError& e) {
        CHECK(e.kind() == FormatError::Kind::dimension_overflow);
    }
}

TEST_CASE("IDX fixture matches its hex dump") {
    // See tests/fixtures/ten.hexdump.txt: magic 00 00 08 03, 10 x 16 x 16,
    // first pixel byte 0x1a, byte 88 (example 0, row 4, column 8) 0xf4;
    // labels 00 01 01 01 00 00 01 01 00 00.
    const Dataset d = load_idx(fixture("ten-images.idx3"), fixture("ten-labels.idx1"));
    CHECK(d.images.shape() == Shape{10, 1, 16, 16});
    CHECK(d.images[0] == doctest::Approx(0x1a / 255.0));
    CHECK(d.images[4 * 16 + 8] == doctest::Approx(0xf4 / 255.0));
    CHECK(d.images[1] == doctest::Approx(0x10 / 255.0));
    CHECK(d.labels == std::vector<int>{0, 1, 1, 1, 0, 0, 1, 1, 0, 0});

    TempDir dir;
    save_idx(d, dir / "i", dir / "l");
    CHECK(bytes_of(dir / "i") == bytes_of(fixture("ten-images.idx3")));
    CHECK(bytes_of(dir / "l") == bytes_of(fixture("ten-labels.idx1")));
}

TEST_CASE("IDX errors") {
    TempDir dir;
    auto img = bytes_of(fixture("ten-images.idx3"));
    img.resize(100);
    write_bytes(dir / "cut", img);
    try {
        load_idx(dir / "cut", fixture("ten-labels.idx1"));
        FAIL("expected an error");
    } catch (const FormatError& e) {
        CHECK(e.kind() == FormatError::Kind::truncated);
    }
    // Label count disagreeing with the image count.
    auto labels = bytes_of(fixture("ten-labels.idx1"));
    labels[7] = 9;
    labels.pop_back();
    write_bytes(dir / "nine", labels);
    CHECK_THROWS_AS(load_idx(fixture("ten-images.idx3"), dir / "nine"), FormatError);
    // Wrong magic.
    auto bad = bytes_of(fixture("ten-images.idx3"));
    bad[2] = 0x01;
    write_bytes(dir / "bad", bad);
    try {
        load_idx(dir / "bad", fixture("ten-labels.idx1"));
        FAIL("expected an error");
    } catch (const FormatError& e) {
        CHECK(e.kind() == FormatError::Kind::bad_magic);
    }
}

TEST_CASE("generator rejects bad parameters") {
    CHECK_THROWS_AS(gen_synthetic({SyntheticTask::Kind::binary, 4, 10, 0.5, 0.8, 1}), Error);
    CHECK_THROWS_AS(gen_synthetic({SyntheticTask::Kind::binary, 16, 10, 1.5, 0.8, 1}), Error);
    CHECK_THROWS_AS(gen_synthetic({SyntheticTask::Kind::binary, 16, 0, 0.5, 0.8, 1}), Error);
}
