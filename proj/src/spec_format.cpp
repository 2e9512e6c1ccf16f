#include "d2nn/spec_format.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

namespace d2nn {

namespace {

struct Token {
    std::string text;
    int line;
    int column;
};

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> tokens;
    int line = 1, column = 1;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (c == '\n') {
            ++line;
            column = 1;
            ++i;
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\r') {
            ++column;
            ++i;
            continue;
        }
        if (c == '#') {
            while (i < text.size() && text[i] != '\n') ++i;
            continue;
        }
        if (c == '{' || c == '}') {
            tokens.push_back({std::string(1, c), line, column});
            ++column;
            ++i;
            continue;
        }
        const int start_col = column;
        std::string word;
        while (i < text.size()) {
            const char d = text[i];
            if (d == ' ' || d == '\t' || d == '\r' || d == '\n' || d == '{' || d == '}' || d == '#') break;
            word += d;
            ++i;
            ++column;
        }
        tokens.push_back({std::move(word), line, start_col});
    }
    return tokens;
}

[[noreturn]] void fail(const Token& t, const std::string& msg) { throw ParseError(t.line, t.column, msg); }

Index parse_index(const Token& t, std::string_view s) {
    Index v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) fail(t, "expected an integer, got '" + std::string(s) + "'");
    return v;
}

double parse_double(const Token& t, std::string_view s) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) fail(t, "expected a number, got '" + std::string(s) + "'");
    return v;
}

Shape parse_shape(const Token& t, std::string_view s) {
    Shape shape;
    std::size_t pos = 0;
    while (true) {
        const std::size_t x = s.find('x', pos);
        const Index d = parse_index(t, s.substr(pos, x == std::string_view::npos ? s.npos : x - pos));
        if (d < 1) fail(t, "shape dimensions must be positive");
        shape.push_back(d);
        if (x == std::string_view::npos) break;
        pos = x + 1;
    }
    return shape;
}

std::pair<std::string_view, std::string_view> split_attr(const Token& t) {
    const auto eq = t.text.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == t.text.size())
        fail(t, "expected key=value, got '" + t.text + "'");
    return {std::string_view(t.text).substr(0, eq), std::string_view(t.text).substr(eq + 1)};
}

bool valid_id(std::string_view id) {
    if (id.empty()) return false;
    for (char c : id)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
    return true;
}

class Parser {
public:
    explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

    GraphDef run() {
        GraphDef g;
        std::vector<Token> edge_sites;
        while (pos_ < tokens_.size()) {
            const Token& t = tokens_[pos_];
            if (t.text == "node")
                g.nodes.push_back(node());
            else if (t.text == "edge") {
                edge_sites.push_back(t);
                g.edges.push_back(edge());
            } else
                fail(t, "expected 'node' or 'edge', got '" + t.text + "'");
        }
        if (g.nodes.empty()) throw ParseError(1, 1, "no nodes defined");
        std::set<std::string> ids;
        for (const auto& n : g.nodes) ids.insert(n.id);
        for (std::size_t i = 0; i < g.edges.size(); ++i) {
            if (!ids.count(g.edges[i].from)) fail(edge_sites[i], "undefined node '" + g.edges[i].from + "'");
            if (!ids.count(g.edges[i].to)) fail(edge_sites[i], "undefined node '" + g.edges[i].to + "'");
        }
        return g;
    }

private:
    const Token& next(const Token& after, const char* what) {
        if (pos_ >= tokens_.size()) fail(after, std::string("unexpected end of file, expected ") + what);
        return tokens_[pos_++];
    }

    bool on_line(int line) const { return pos_ < tokens_.size() && tokens_[pos_].line == line; }

    NodeDef node() {
        const Token& kw = tokens_[pos_++];
        const Token& id = next(kw, "node id");
        if (!valid_id(id.text)) fail(id, "invalid node id '" + id.text + "'");
        const Token& kind_tok = next(id, "node kind");
        auto kind = parse_node_kind(kind_tok.text);
        if (!kind) fail(kind_tok, "unknown node kind '" + kind_tok.text + "'");
        NodeDef node{id.text, *kind, {}, {}, 0.0};
        while (on_line(kw.line) && tokens_[pos_].text != "{") {
            const Token& a = tokens_[pos_++];
            auto [key, value] = split_attr(a);
            if (key == "shape" && (node.kind == NodeKind::input || node.kind == NodeKind::dummy))
                node.shape = parse_shape(a, value);
            else if (key == "value" && node.kind == NodeKind::dummy)
                node.constant = parse_double(a, value);
            else
                fail(a, "unknown attribute '" + std::string(key) + "' for " +
                            std::string(node_kind_name(node.kind)) + " node");
        }
        if (pos_ < tokens_.size() && tokens_[pos_].text == "{") {
            const Token& open = tokens_[pos_++];
            while (true) {
                if (pos_ >= tokens_.size()) fail(open, "unterminated '{' for node " + node.id);
                if (tokens_[pos_].text == "}") {
                    ++pos_;
                    break;
                }
                node.layers.push_back(layer());
            }
        }
        return node;
    }

    LayerSpec layer() {
        const Token& t = tokens_[pos_++];
        auto kind = parse_layer_kind(t.text);
        if (!kind) fail(t, "unknown layer kind '" + t.text + "'");
        LayerSpec l;
        l.kind = *kind;
        if (l.kind == LayerKind::conv2d) l.pad = 1;
        bool stride_set = false;
        std::set<std::string> seen;
        while (on_line(t.line) && tokens_[pos_].text != "}") {
            const Token& a = tokens_[pos_++];
            auto [key, value] = split_attr(a);
            if (!seen.insert(std::string(key)).second) fail(a, "repeated attribute '" + std::string(key) + "'");
            const bool spatial = l.kind == LayerKind::conv2d || l.kind == LayerKind::maxpool2d;
            if (key == "out" && (l.kind == LayerKind::linear || l.kind == LayerKind::conv2d))
                l.out = parse_index(a, value);
            else if (key == "k" && spatial)
                l.kernel = parse_index(a, value);
            else if (key == "stride" && spatial) {
                l.stride = parse_index(a, value);
                stride_set = true;
            } else if (key == "pad" && l.kind == LayerKind::conv2d)
                l.pad = parse_index(a, value);
            else if (key == "shape" && l.kind == LayerKind::reshape)
                l.shape = parse_shape(a, value);
            else
                fail(a, "unknown attribute '" + std::string(key) + "' for layer " + t.text);
        }
        if ((l.kind == LayerKind::linear || l.kind == LayerKind::conv2d) && l.out < 1)
            fail(t, t.text + " requires out=<n>");
        if ((l.kind == LayerKind::conv2d || l.kind == LayerKind::maxpool2d) && l.kernel < 1)
            fail(t, t.text + " requires k=<n>");
        if (l.kind == LayerKind::maxpool2d && !stride_set) l.stride = l.kernel;
        if (l.kind == LayerKind::reshape && l.shape.empty()) fail(t, "reshape requires shape=<dims>");
        return l;
    }

    EdgeDef edge() {
        const Token& kw = tokens_[pos_++];
        const Token& from = next(kw, "source node");
        const Token& arrow = next(from, "'->'");
        if (arrow.text != "->") fail(arrow, "expected '->', got '" + arrow.text + "'");
        const Token& to = next(arrow, "target node");
        EdgeDef e{from.text, to.text, EdgeKind::data, std::nullopt};
        while (on_line(kw.line)) {
            const Token& a = tokens_[pos_++];
            if (a.text == "control") {
                e.kind = EdgeKind::control;
                continue;
            }
            auto [key, value] = split_attr(a);
            if (key != "default") fail(a, "unknown edge attribute '" + std::string(key) + "'");
            if (value == "zeros")
                e.default_value = DefaultValue{DefaultValue::Kind::zeros, 0.0};
            else if (value.substr(0, 6) == "const:")
                e.default_value = DefaultValue{DefaultValue::Kind::constant, parse_double(a, value.substr(6))};
            else
                fail(a, "default must be zeros or const:<v>");
        }
        if (e.kind == EdgeKind::control && e.default_value) fail(kw, "control edges cannot carry defaults");
        return e;
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
};

std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string format_shape(const Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out;
}

std::string format_layer(const LayerSpec& l) {
    std::string s(layer_kind_name(l.kind));
    switch (l.kind) {
    case LayerKind::linear:
        s += " out=" + std::to_string(l.out);
        break;
    case LayerKind::conv2d:
        s += " out=" + std::to_string(l.out) + " k=" + std::to_string(l.kernel) +
             " stride=" + std::to_string(l.stride) + " pad=" + std::to_string(l.pad);
        break;
    case LayerKind::maxpool2d:
        s += " k=" + std::to_string(l.kernel) + " stride=" + std::to_string(l.stride);
        break;
    case LayerKind::reshape:
        s += " shape=" + format_shape(l.shape);
        break;
    default:
        break;
    }
    return s;
}

}  // namespace

GraphDef parse_spec(std::string_view text) { return Parser(tokenize(text)).run(); }

std::string emit_spec(const GraphDef& g) {
    std::ostringstream os;
    for (const auto& n : g.nodes) {
        os << "node " << n.id << ' ' << node_kind_name(n.kind);
        if (n.kind == NodeKind::dummy) os << " value=" << format_double(n.constant);
        if ((n.kind == NodeKind::input || n.kind == NodeKind::dummy) && !n.shape.empty())
            os << " shape=" << format_shape(n.shape);
        if (!n.layers.empty()) {
            os << " {\n";
            for (const auto& l : n.layers) os << "  " << format_layer(l) << '\n';
            os << '}';
        }
        os << '\n';
    }
    for (const auto& e : g.edges) {
        os << "edge " << e.from << " -> " << e.to;
        if (e.kind == EdgeKind::control) os << " control";
        if (e.default_value) {
            if (e.default_value->kind == DefaultValue::Kind::zeros)
                os << " default=zeros";
            else
                os << " default=const:" << format_double(e.default_value->value);
        }
        os << '\n';
    }
    return os.str();
}

GraphDef load_spec_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatError::Kind::io, "cannot open spec file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_spec(buf.str());
}

void save_spec_file(const GraphDef& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(FormatError::Kind::io, "cannot write spec file " + path);
    out << emit_spec(g);
}

}  // namespace d2nn
