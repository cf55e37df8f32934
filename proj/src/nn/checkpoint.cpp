#include "canids/nn/checkpoint.hpp"

#include <charconv>

#include "canids/error.hpp"
#include "canids/io.hpp"

namespace canids::nn {

namespace {

constexpr std::string_view kMagic = "canids-checkpoint 1";

std::vector<std::string_view> words(std::string_view line) {
    std::vector<std::string_view> out;
    for (auto t : split_fields(line, ' '))
        if (!t.empty()) out.push_back(t);
    return out;
}

std::size_t to_size(std::string_view s, std::size_t line) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
        throw ParseError(line, "expected integer, got '" + std::string(s) + "'");
    return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::string out(kMagic);
    out += "\nkind " + ckpt.kind + '\n';
    for (const auto& [k, v] : ckpt.config) out += "config " + k + ' ' + v + '\n';
    for (const auto& p : ckpt.params) {
        out += "param " + p.name + ' ' + std::to_string(p.value.rows()) + ' ' + std::to_string(p.value.cols()) + '\n';
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            if (i) out += ' ';
            out += format_double(p.value[i]);
        }
        out += '\n';
    }
    out += "end\n";
    return out;
}

Checkpoint deserialize_checkpoint(std::string_view text) {
    auto lines = split_fields(text, '\n');
    std::size_t i = 0;
    auto next = [&]() -> std::string_view {
        while (i < lines.size()) {
            auto l = trim(lines[i++]);
            if (!l.empty()) return l;
        }
        throw ParseError(i, "unexpected end of checkpoint");
    };
    if (next() != kMagic) throw ParseError(i, "missing 'canids-checkpoint 1' header");
    Checkpoint ckpt;
    auto kind = words(next());
    if (kind.size() != 2 || kind[0] != "kind") throw ParseError(i, "expected 'kind <name>'");
    ckpt.kind = std::string(kind[1]);
    while (true) {
        auto line = next();
        auto w = words(line);
        if (w.size() == 1 && w[0] == "end") break;
        if (w.size() == 3 && w[0] == "config") {
            ckpt.config[std::string(w[1])] = std::string(w[2]);
            continue;
        }
        if (w.size() != 4 || w[0] != "param") throw ParseError(i, "expected param record");
        const auto rows = to_size(w[2], i), cols = to_size(w[3], i);
        std::vector<double> values;
        values.reserve(rows * cols);
        if (rows * cols > 0) {
            for (auto tok : words(next())) {
                try {
                    values.push_back(parse_double(tok));
                } catch (const DataError&) {
                    throw ParseError(i, "bad parameter value '" + std::string(tok) + "'");
                }
            }
        }
        if (values.size() != rows * cols)
            throw ParseError(i, "parameter '" + std::string(w[1]) + "' expects " + std::to_string(rows * cols) +
                                    " values, found " + std::to_string(values.size()));
        ckpt.params.add(std::string(w[1]), Matrix(rows, cols, std::move(values)));
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

void assign_params(ParamSet& target, const ParamSet& loaded) {
    if (target.size() != loaded.size())
        throw DataError("checkpoint has " + std::to_string(loaded.size()) + " parameters, model expects " +
                        std::to_string(target.size()));
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target[i].name != loaded[i].name)
            throw DataError("checkpoint parameter " + std::to_string(i) + " is '" + loaded[i].name + "', expected '" +
                            target[i].name + "'");
        if (!target[i].value.same_shape(loaded[i].value))
            throw DataError("checkpoint parameter '" + loaded[i].name + "' has shape " + loaded[i].value.shape_string() +
                            ", expected " + target[i].value.shape_string());
        target[i].value = loaded[i].value;
    }
}

}  // namespace canids::nn
