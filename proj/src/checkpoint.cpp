#include "d2nn/checkpoint.hpp"

#include <cstring>

#include "binary_io.hpp"
#include "d2nn/spec_format.hpp"

namespace d2nn {

namespace {

using detail::put_f64_le;
using detail::put_u32_le;
using detail::put_u64_le;
using detail::Reader;

constexpr std::uint32_t kVersion = 1;

void put_i64(std::vector<unsigned char>& out, std::int64_t v) { put_u64_le(out, static_cast<std::uint64_t>(v)); }

void put_tensor(std::vector<unsigned char>& out, const Tensorf& t) {
    put_u32_le(out, static_cast<std::uint32_t>(t.rank()));
    for (Index d : t.shape()) put_u32_le(out, static_cast<std::uint32_t>(d));
    for (Index i = 0; i < t.size(); ++i) put_u32_le(out, std::bit_cast<std::uint32_t>(t[i]));
}

void put_store(std::vector<unsigned char>& out, const ParamStore<float>& s) {
    for (const auto& node : s.nodes)
        for (const auto& p : node) {
            out.push_back(static_cast<unsigned char>(p.kind));
            if (p.kind == LayerParams<float>::Kind::none) continue;
            put_tensor(out, p.weights);
            put_tensor(out, p.bias);
        }
}

void put_config(std::vector<unsigned char>& out, const TrainConfig& c) {
    put_f64_le(out, c.lambda);
    put_i64(out, c.bag_size);
    put_i64(out, c.bags_per_batch);
    put_i64(out, c.epochs);
    out.push_back(static_cast<unsigned char>(c.optimizer));
    put_f64_le(out, c.learning_rate);
    put_f64_le(out, c.momentum);
    put_f64_le(out, c.beta2);
    put_f64_le(out, c.weight_decay);
    put_f64_le(out, c.grad_clip);
    put_f64_le(out, c.epsilon_initial);
    put_f64_le(out, c.epsilon_final);
    put_f64_le(out, c.epsilon_decay_fraction);
    out.push_back(static_cast<unsigned char>(c.metric));
    put_i64(out, c.positive_class);
    out.push_back(static_cast<unsigned char>(c.output_loss));
    out.push_back(c.counterfactual_classes ? 1 : 0);
    put_f64_le(out, c.cross_entropy_weight);
    out.push_back(c.forced_action ? 1 : 0);
    put_i64(out, c.forced_action.value_or(0));
    put_u64_le(out, c.seed);
}

class Decoder {
public:
    Decoder(const std::vector<unsigned char>& bytes, const std::string& name) : r_(bytes, name), name_(name) {}

    Reader& reader() { return r_; }
    std::int64_t i64() { return static_cast<std::int64_t>(r_.u64_le()); }

    template <typename Enum>
    Enum enumeration(int count, const char* what) {
        const int v = r_.u8();
        if (v >= count) fail(std::string("unknown ") + what + " code " + std::to_string(v));
        return static_cast<Enum>(v);
    }

    bool flag() {
        const int v = r_.u8();
        if (v > 1) fail("bad flag byte " + std::to_string(v));
        return v == 1;
    }

    Tensorf tensor(const Shape& expected) {
        const std::uint32_t rank = r_.u32_le();
        if (rank != expected.size()) fail("parameter rank does not match the embedded spec");
        Shape shape;
        for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<Index>(r_.u32_le()));
        if (shape != expected)
            fail("parameter shape " + shape_string(shape) + " does not match " + shape_string(expected));
        Tensorf t(shape);
        for (Index i = 0; i < t.size(); ++i) t[i] = r_.f32_le();
        return t;
    }

    ParamStore<float> store(const Network& net) {
        ParamStore<float> s = ParamStore<float>::zeros_like(net);
        for (auto& node : s.nodes)
            for (auto& p : node) {
                const auto kind = enumeration<LayerParams<float>::Kind>(3, "layer kind");
                if (kind != p.kind) fail("layer kind does not match the embedded spec");
                if (kind == LayerParams<float>::Kind::none) continue;
                p.weights = tensor(p.weights.shape());
                p.bias = tensor(p.bias.shape());
            }
        return s;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError(FormatError::Kind::unsupported, name_ + ": " + what);
    }

private:
    Reader r_;
    std::string name_;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& c) {
    std::vector<unsigned char> out{'D', '2', 'N', 'C'};
    put_u32_le(out, kVersion);
    const std::string spec = emit_spec(c.graph);
    put_u32_le(out, static_cast<std::uint32_t>(spec.size()));
    out.insert(out.end(), spec.begin(), spec.end());
    put_config(out, c.config);
    put_i64(out, c.state.step);
    put_u32_le(out, static_cast<std::uint32_t>(c.state.epoch));
    put_i64(out, c.horizon);
    put_store(out, c.state.params);
    put_store(out, c.state.velocity);
    put_store(out, c.state.second);
    return out;
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes, const std::string& name) {
    Decoder d(bytes, name);
    Reader& r = d.reader();
    if (std::memcmp(r.take(4), "D2NC", 4) != 0) throw FormatError(FormatError::Kind::bad_magic, name + ": not a D2NC checkpoint");
    const std::uint32_t version = r.u32_le();
    if (version != kVersion) d.fail("unsupported checkpoint version " + std::to_string(version));

    Checkpoint c;
    const std::uint32_t spec_size = r.u32_le();
    const unsigned char* spec = r.take(spec_size);
    c.graph = parse_spec(std::string_view(reinterpret_cast<const char*>(spec), spec_size));
    const Network net(c.graph);

    TrainConfig& k = c.config;
    k.lambda = r.f64_le();
    k.bag_size = d.i64();
    k.bags_per_batch = d.i64();
    k.epochs = d.i64();
    k.optimizer = d.enumeration<Optimizer>(2, "optimizer");
    k.learning_rate = r.f64_le();
    k.momentum = r.f64_le();
    k.beta2 = r.f64_le();
    k.weight_decay = r.f64_le();
    k.grad_clip = r.f64_le();
    k.epsilon_initial = r.f64_le();
    k.epsilon_final = r.f64_le();
    k.epsilon_decay_fraction = r.f64_le();
    k.metric = d.enumeration<Metric>(3, "metric");
    k.positive_class = static_cast<int>(d.i64());
    k.output_loss = d.enumeration<OutputLoss>(2, "output loss");
    k.counterfactual_classes = d.flag();
    k.cross_entropy_weight = r.f64_le();
    const bool forced = d.flag();
    const auto action = static_cast<int>(d.i64());
    if (forced) k.forced_action = action;
    else if (action != 0) d.fail("forced action set without its flag");
    k.seed = r.u64_le();

    c.state.step = d.i64();
    c.state.epoch = static_cast<Index>(r.u32_le());
    c.horizon = d.i64();
    c.state.params = d.store(net);
    c.state.velocity = d.store(net);
    c.state.second = d.store(net);
    if (r.remaining() != 0) d.fail(std::to_string(r.remaining()) + " trailing bytes");
    return c;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) { detail::write_file(path, encode_checkpoint(c)); }

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(detail::read_file(path), path); }

}  // namespace d2nn
