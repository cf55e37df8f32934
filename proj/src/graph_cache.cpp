#include "canids/graph_cache.hpp"

#include <charconv>

#include "canids/error.hpp"
#include "canids/io.hpp"

namespace canids {

namespace {

constexpr std::string_view kMagic = "canids-graphs 1";

class LineCursor {
public:
    explicit LineCursor(std::string_view text) : text_(text) {}

    bool next(std::string_view& line) {
        while (pos_ < text_.size()) {
            auto end = text_.find('\n', pos_);
            if (end == std::string_view::npos) end = text_.size();
            line = trim(text_.substr(pos_, end - pos_));
            pos_ = end + 1;
            ++line_no_;
            if (!line.empty()) return true;
        }
        return false;
    }

    std::string_view expect() {
        std::string_view line;
        if (!next(line)) throw ParseError(line_no_, "unexpected end of graph cache");
        return line;
    }

    std::size_t line_no() const { return line_no_; }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_no_ = 0;
};

template <typename T>
T to_uint(std::string_view s, std::size_t line) {
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
        throw ParseError(line, "expected unsigned integer, got '" + std::string(s) + "'");
    return v;
}

double to_double(std::string_view s, std::size_t line) {
    try {
        return parse_double(s);
    } catch (const DataError&) {
        throw ParseError(line, "expected number, got '" + std::string(s) + "'");
    }
}

std::vector<std::string_view> tokens(std::string_view line) {
    std::vector<std::string_view> out;
    for (auto t : split_fields(line, ' '))
        if (!t.empty()) out.push_back(t);
    return out;
}

}  // namespace

std::string serialize_graphs(const std::vector<WindowGraph>& graphs) {
    std::string out(kMagic);
    out += '\n';
    for (const auto& g : graphs) {
        out += "window " + std::to_string(g.window_start_index) + ' ' + std::to_string(g.label) + ' ' +
               (g.directed ? "1" : "0") + ' ' + std::to_string(g.num_nodes()) + ' ' + std::to_string(g.edges.size()) +
               '\n';
        for (std::size_t n = 0; n < g.num_nodes(); ++n) {
            const auto& x = g.features[n];
            out += "n " + std::to_string(g.node_ids[n]) + ' ' + format_double(x.normalized_id) + ' ' +
                   format_double(x.frequency) + ' ' + format_double(x.mean_payload) + '\n';
        }
        for (const auto& e : g.edges)
            out += "e " + std::to_string(e.src) + ' ' + std::to_string(e.dst) + ' ' + std::to_string(e.weight) + '\n';
    }
    return out;
}

std::vector<WindowGraph> deserialize_graphs(std::string_view text) {
    LineCursor cursor(text);
    std::string_view line;
    if (!cursor.next(line) || line != kMagic) throw ParseError(cursor.line_no(), "missing 'canids-graphs 1' header");
    std::vector<WindowGraph> graphs;
    while (cursor.next(line)) {
        auto head = tokens(line);
        const auto ln = cursor.line_no();
        if (head.size() != 6 || head[0] != "window") throw ParseError(ln, "expected window record");
        WindowGraph g;
        g.window_start_index = to_uint<std::size_t>(head[1], ln);
        g.label = to_uint<int>(head[2], ln);
        if (g.label > 1) throw ParseError(ln, "label must be 0 or 1");
        g.directed = to_uint<int>(head[3], ln) != 0;
        const auto nodes = to_uint<std::size_t>(head[4], ln);
        const auto edges = to_uint<std::size_t>(head[5], ln);
        for (std::size_t i = 0; i < nodes; ++i) {
            auto t = tokens(cursor.expect());
            const auto l = cursor.line_no();
            if (t.size() != 5 || t[0] != "n") throw ParseError(l, "expected node record");
            const auto id = to_uint<unsigned>(t[1], l);
            if (id > kMaxStandardId) throw ParseError(l, "node id exceeds 11 bits");
            g.node_ids.push_back(static_cast<std::uint16_t>(id));
            g.features.push_back({to_double(t[2], l), to_double(t[3], l), to_double(t[4], l)});
        }
        for (std::size_t i = 0; i < edges; ++i) {
            auto t = tokens(cursor.expect());
            const auto l = cursor.line_no();
            if (t.size() != 4 || t[0] != "e") throw ParseError(l, "expected edge record");
            Edge e{to_uint<std::uint32_t>(t[1], l), to_uint<std::uint32_t>(t[2], l), to_uint<std::uint32_t>(t[3], l)};
            if (e.src >= nodes || e.dst >= nodes) throw ParseError(l, "edge references missing node");
            g.edges.push_back(e);
        }
        graphs.push_back(std::move(g));
    }
    return graphs;
}

void save_graphs(const std::filesystem::path& path, const std::vector<WindowGraph>& graphs) {
    write_file_atomic(path, serialize_graphs(graphs));
}

std::vector<WindowGraph> load_graphs(const std::filesystem::path& path) {
    return deserialize_graphs(read_file(path));
}

}  // namespace canids
