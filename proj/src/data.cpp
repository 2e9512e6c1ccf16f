#include "d2nn/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "d2nn/error.hpp"
#include "binary_io.hpp"

namespace d2nn {

int Dataset::class_count() const {
    int k = 0;
    for (int l : labels) k = std::max(k, l + 1);
    return k;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.images = batch<float>(indices);
    for (std::size_t i : indices) {
        out.labels.push_back(labels.at(i));
        if (!hard.empty()) out.hard.push_back(hard.at(i));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic glyphs

namespace {

using Glyph = std::array<const char*, 5>;

// Binary task: a dot above one end of a bar, left end for class 1, right
// end for class 0. Both are built from the same local pieces, so only their
// arrangement over several pixels tells them apart.
constexpr Glyph kLeft = {"#....", ".....", ".....", "#####", "....."};
constexpr Glyph kRight = {"....#", ".....", ".....", "#####", "....."};

// Hierarchical task: superclass 0 carries a top bar, superclass 1 a bottom
// bar; the class mark sits inside.
constexpr std::array<Glyph, 10> kClasses = {{
    {"#####", ".....", "#....", "#....", "....."},
    {"#####", ".....", "..#..", "..#..", "....."},
    {"#####", ".....", "....#", "....#", "....."},
    {"#####", ".....", ".###.", ".....", "....."},
    {".....", "#....", "#....", ".....", "#####"},
    {".....", "..#..", "..#..", ".....", "#####"},
    {".....", "....#", "....#", ".....", "#####"},
    {".....", ".....", ".###.", ".....", "#####"},
    {".....", "##...", ".....", ".....", "#####"},
    {".....", "...##", ".....", ".....", "#####"},
}};

struct Canvas {
    Index size;
    float* px;

    void add(Index r, Index c, float v) {
        if (r >= 0 && r < size && c >= 0 && c < size) px[r * size + c] += v;
    }
    void glyph(const Glyph& g, Index r0, Index c0, float amplitude) {
        for (Index r = 0; r < 5; ++r)
            for (Index c = 0; c < 5; ++c)
                if (g[static_cast<std::size_t>(r)][c] == '#') add(r0 + r, c0 + c, amplitude);
    }
};

struct Renderer {
    std::mt19937_64& rng;
    Index size;

    Index uniform(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng); }

    // Short stroke of length 2-3 in a random orientation.
    void distractor(Canvas& cv, float amplitude) {
        const bool horizontal = uniform(0, 1) == 1;
        const Index len = uniform(2, 3);
        const Index r = uniform(0, size - 1), c = uniform(0, size - 1);
        for (Index k = 0; k < len; ++k) cv.add(horizontal ? r : r + k, horizontal ? c + k : c, amplitude);
    }

    void noise(Canvas& cv, double sigma) {
        std::normal_distribution<double> n(0.0, sigma);
        for (Index i = 0; i < size * size; ++i) cv.px[i] += static_cast<float>(n(rng));
    }

    void render(Canvas& cv, const Glyph* g, bool hard) {
        const Index centre = (size - 5) / 2;
        if (hard) {
            if (g) cv.glyph(*g, uniform(0, size - 5), uniform(0, size - 5), 0.6f);
            for (int k = 0; k < 2; ++k) distractor(cv, 0.6f);
            noise(cv, 0.15);
        } else {
            if (g) cv.glyph(*g, centre + uniform(-1, 1), centre + uniform(-1, 1), 1.0f);
            else distractor(cv, 1.0f);
            noise(cv, 0.1);
        }
    }
};

}  // namespace

int superclass_of(int cls) { return cls < 4 ? 0 : 1; }

Dataset gen_synthetic(const SyntheticTask& task) {
    if (task.image_size < 8) throw Error("synthetic task: image size must be at least 8");
    if (task.count < 1) throw Error("synthetic task: count must be positive");
    if (task.hard_fraction < 0 || task.hard_fraction > 1 || task.easy_negative_fraction < 0 ||
        task.easy_negative_fraction > 1)
        throw Error("synthetic task: fractions must lie in [0, 1]");

    std::mt19937_64 rng(task.seed);
    const Index n = task.count, s = task.image_size;

    // Plan (label, hard, glyph) per example, then shuffle.
    struct Plan {
        int label;
        bool hard;
        const Glyph* glyph;
    };
    std::vector<Plan> plan;
    auto add_group = [&](int label, const Glyph* glyph, Index count, double hard_fraction) {
        const Index hard = static_cast<Index>(std::llround(static_cast<double>(count) * hard_fraction));
        for (Index i = 0; i < count; ++i) plan.push_back({label, i < hard, glyph});
    };
    switch (task.kind) {
    case SyntheticTask::Kind::binary:
        add_group(1, &kLeft, n / 2, task.hard_fraction);
        add_group(0, &kRight, n - n / 2, task.hard_fraction);
        break;
    case SyntheticTask::Kind::cascade: {
        const Index easy_neg = static_cast<Index>(std::llround(static_cast<double>(n) * task.easy_negative_fraction));
        const Index rest = n - easy_neg;
        add_group(0, nullptr, easy_neg, 0.0);
        add_group(1, &kLeft, rest / 2, task.hard_fraction);
        add_group(0, &kRight, rest - rest / 2, 1.0);
        break;
    }
    case SyntheticTask::Kind::hierarchical:
        for (int c = 0; c < 10; ++c)
            add_group(c, &kClasses[static_cast<std::size_t>(c)], n / 10 + (c < n % 10 ? 1 : 0), task.hard_fraction);
        break;
    }
    std::shuffle(plan.begin(), plan.end(), rng);

    Dataset d;
    d.images = Tensorf({n, 1, s, s});
    Renderer r{rng, s};
    for (Index i = 0; i < n; ++i) {
        const Plan& p = plan[static_cast<std::size_t>(i)];
        Canvas cv{s, d.images.data() + i * s * s};
        r.render(cv, p.glyph, p.hard);
        d.labels.push_back(p.label);
        d.hard.push_back(p.hard ? 1 : 0);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Binary containers

namespace {

using detail::put_u32_be;
using detail::put_u32_le;
using detail::read_file;
using detail::Reader;
using detail::write_file;

// Product of dims, rejecting anything that cannot be addressed.
Index checked_product(const std::vector<std::uint32_t>& dims, const std::string& name) {
    constexpr Index limit = Index(1) << 40;
    Index total = 1;
    for (std::uint32_t d : dims) {
        if (d == 0) continue;
        if (total > limit / static_cast<Index>(d))
            throw FormatError(FormatError::Kind::dimension_overflow, name + ": dimensions overflow");
        total *= static_cast<Index>(d);
    }
    for (std::uint32_t d : dims)
        if (d == 0) return 0;
    return total;
}

struct Idx {
    unsigned char type;
    std::vector<std::uint32_t> dims;
    std::vector<double> values;
};

Idx read_idx(const std::string& path) {
    const auto bytes = read_file(path);
    Reader r(bytes, path);
    const unsigned char* magic = r.take(4);
    if (magic[0] != 0 || magic[1] != 0)
        throw FormatError(FormatError::Kind::bad_magic, path + ": bad IDX magic");
    Idx idx;
    idx.type = magic[2];
    const int rank = magic[3];
    std::size_t width = 0;
    switch (idx.type) {
    case 0x08: case 0x09: width = 1; break;
    case 0x0B: width = 2; break;
    case 0x0C: case 0x0D: width = 4; break;
    case 0x0E: width = 8; break;
    default: throw FormatError(FormatError::Kind::bad_magic, path + ": unknown IDX element type");
    }
    if (rank == 0) throw FormatError(FormatError::Kind::unsupported, path + ": IDX rank 0");
    for (int k = 0; k < rank; ++k) idx.dims.push_back(r.u32_be());
    const Index count = checked_product(idx.dims, path);
    if (static_cast<std::size_t>(count) > r.remaining() / width)
        throw FormatError(FormatError::Kind::truncated, path + ": truncated IDX payload");
    const unsigned char* p = r.take(static_cast<std::size_t>(count) * width);
    idx.values.resize(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < idx.values.size(); ++i) {
        const unsigned char* q = p + i * width;
        std::uint64_t raw = 0;
        for (std::size_t b = 0; b < width; ++b) raw = (raw << 8) | q[b];
        switch (idx.type) {
        case 0x08: idx.values[i] = static_cast<double>(q[0]); break;
        case 0x09: idx.values[i] = static_cast<double>(static_cast<std::int8_t>(q[0])); break;
        case 0x0B: idx.values[i] = static_cast<double>(static_cast<std::int16_t>(raw)); break;
        case 0x0C: idx.values[i] = static_cast<double>(static_cast<std::int32_t>(raw)); break;
        case 0x0D: idx.values[i] = static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(raw))); break;
        case 0x0E: idx.values[i] = std::bit_cast<double>(raw); break;
        }
    }
    return idx;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const Idx images = read_idx(images_path);
    const Idx labels = read_idx(labels_path);
    if (labels.dims.size() != 1)
        throw FormatError(FormatError::Kind::unsupported, labels_path + ": labels must be a rank-1 IDX file");
    if (labels.dims[0] != images.dims[0])
        throw FormatError(FormatError::Kind::unsupported,
                          images_path + ": " + std::to_string(images.dims[0]) + " images but " +
                              std::to_string(labels.dims[0]) + " labels");
    Shape shape;
    for (std::uint32_t d : images.dims) shape.push_back(static_cast<Index>(d));
    if (shape.size() == 3) shape.insert(shape.begin() + 1, 1);
    Dataset d;
    d.images = Tensorf(shape);
    const double scale = images.type == 0x08 ? 1.0 / 255.0 : 1.0;
    for (std::size_t i = 0; i < images.values.size(); ++i)
        d.images[static_cast<Index>(i)] = static_cast<float>(images.values[i] * scale);
    for (double v : labels.values) d.labels.push_back(static_cast<int>(v));
    return d;
}

void save_idx(const Dataset& data, const std::string& images_path, const std::string& labels_path) {
    std::vector<unsigned char> img{0, 0, 0x08};
    Shape dims = data.images.shape();
    if (dims.size() == 4 && dims[1] == 1) dims.erase(dims.begin() + 1);
    img.push_back(static_cast<unsigned char>(dims.size()));
    for (Index d : dims) put_u32_be(img, static_cast<std::uint32_t>(d));
    for (Index i = 0; i < data.images.size(); ++i)
        img.push_back(static_cast<unsigned char>(std::lround(std::clamp(data.images[i], 0.0f, 1.0f) * 255.0f)));
    std::vector<unsigned char> lab{0, 0, 0x08, 1};
    put_u32_be(lab, static_cast<std::uint32_t>(data.labels.size()));
    for (int l : data.labels) lab.push_back(static_cast<unsigned char>(l));
    write_file(images_path, img);
    write_file(labels_path, lab);
}

Dataset load_raw(const std::string& path) {
    const auto bytes = read_file(path);
    Reader r(bytes, path);
    const unsigned char* magic = r.take(4);
    if (std::memcmp(magic, "D2NR", 4) != 0) throw FormatError(FormatError::Kind::bad_magic, path + ": not a D2NR file");
    const std::uint32_t count = r.u32_le();
    const std::uint32_t rank = r.u32_le();
    if (rank > 8) throw FormatError(FormatError::Kind::dimension_overflow, path + ": rank " + std::to_string(rank));
    std::vector<std::uint32_t> dims{count};
    for (std::uint32_t k = 0; k < rank; ++k) dims.push_back(r.u32_le());
    const Index total = checked_product(dims, path);
    if (static_cast<std::size_t>(total) > r.remaining() / 4)
        throw FormatError(FormatError::Kind::truncated, path + ": truncated image payload");

    Shape shape;
    for (std::uint32_t d : dims) shape.push_back(static_cast<Index>(d));
    Dataset d;
    d.images = Tensorf(shape);
    const unsigned char* p = r.take(static_cast<std::size_t>(total) * 4);
    for (Index i = 0; i < total; ++i) {
        std::uint32_t bits = 0;
        for (int b = 3; b >= 0; --b) bits = (bits << 8) | p[i * 4 + b];
        d.images[i] = std::bit_cast<float>(bits);
    }
    for (std::uint32_t i = 0; i < count; ++i) d.labels.push_back(static_cast<int>(r.u32_le()));
    if (r.remaining() != 0)
        throw FormatError(FormatError::Kind::unsupported, path + ": " + std::to_string(r.remaining()) + " trailing bytes");
    return d;
}

void save_raw(const Dataset& data, const std::string& path) {
    if (static_cast<Index>(data.labels.size()) != data.size())
        throw Error("save_raw: label count does not match image count");
    std::vector<unsigned char> out{'D', '2', 'N', 'R'};
    put_u32_le(out, static_cast<std::uint32_t>(data.size()));
    const Shape ex = data.example_shape();
    put_u32_le(out, static_cast<std::uint32_t>(ex.size()));
    for (Index d : ex) put_u32_le(out, static_cast<std::uint32_t>(d));
    for (Index i = 0; i < data.images.size(); ++i) put_u32_le(out, std::bit_cast<std::uint32_t>(data.images[i]));
    for (int l : data.labels) put_u32_le(out, static_cast<std::uint32_t>(l));
    write_file(path, out);
}

}  // namespace d2nn
