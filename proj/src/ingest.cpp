#include "canids/ingest.hpp"

#include <charconv>
#include <cstdio>

#include "canids/error.hpp"
#include "canids/io.hpp"

namespace canids {

namespace {

unsigned parse_hex(std::string_view text, std::size_t line, const char* what) {
    text = trim(text);
    if (text.starts_with("0x") || text.starts_with("0X")) text.remove_prefix(2);
    unsigned value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value, 16);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
        throw ParseError(line, std::string("invalid hex ") + what + " '" + std::string(text) + "'");
    return value;
}

unsigned parse_uint(std::string_view text, std::size_t line, const char* what) {
    text = trim(text);
    unsigned value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
        throw ParseError(line, std::string("invalid ") + what + " '" + std::string(text) + "'");
    return value;
}

double parse_timestamp(std::string_view text, std::size_t line) {
    try {
        return parse_double(text);
    } catch (const DataError&) {
        throw ParseError(line, "invalid timestamp '" + std::string(trim(text)) + "'");
    }
}

std::uint16_t checked_id(unsigned id, std::size_t line) {
    if (id > kMaxStandardId)
        throw ParseError(line, "CAN id " + std::to_string(id) + " exceeds 11 bits (extended ids unsupported)");
    return static_cast<std::uint16_t>(id);
}

std::uint8_t checked_dlc(unsigned dlc, std::size_t line) {
    if (dlc > kMaxDlc) throw ParseError(line, "DLC " + std::to_string(dlc) + " out of range [0, 8]");
    return static_cast<std::uint8_t>(dlc);
}

std::uint8_t checked_byte(unsigned value, std::size_t line) {
    if (value > 255) throw ParseError(line, "payload byte out of range");
    return static_cast<std::uint8_t>(value);
}

bool blank(std::string_view line) { return trim(line).empty(); }

void check_order(std::optional<double>& last, double ts, std::size_t line) {
    if (last && ts < *last) throw ParseError(line, "timestamp decreases");
    last = ts;
}

}  // namespace

std::string_view to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::Dos: return "dos";
        case AttackKind::Fuzzing: return "fuzzing";
        case AttackKind::Spoofing: return "spoofing";
        case AttackKind::Replay: return "replay";
    }
    return "unknown";
}

std::optional<AttackKind> attack_kind_from_string(std::string_view name) {
    if (name == "dos" || name == "DoS") return AttackKind::Dos;
    if (name == "fuzzing" || name == "fuzzy") return AttackKind::Fuzzing;
    if (name == "spoofing") return AttackKind::Spoofing;
    if (name == "replay") return AttackKind::Replay;
    return std::nullopt;
}

CanFrame parse_car_hacking_row(std::string_view row, std::size_t line) {
    auto fields = split_fields(trim(row));
    if (fields.size() < 4) throw ParseError(line, "expected at least 4 fields, got " + std::to_string(fields.size()));
    CanFrame frame;
    frame.timestamp = parse_timestamp(fields[0], line);
    frame.can_id = checked_id(parse_hex(fields[1], line, "CAN id"), line);
    frame.dlc = checked_dlc(parse_uint(fields[2], line, "DLC"), line);
    if (fields.size() != 4u + frame.dlc)
        throw ParseError(line, "DLC " + std::to_string(frame.dlc) + " needs " + std::to_string(4 + frame.dlc) +
                                   " fields, got " + std::to_string(fields.size()));
    for (std::uint8_t i = 0; i < frame.dlc; ++i)
        frame.payload[i] = checked_byte(parse_hex(fields[3 + i], line, "payload byte"), line);
    auto flag = trim(fields.back());
    if (flag == "R")
        frame.label = Label::Benign;
    else if (flag == "T")
        frame.label = Label::Attack;
    else
        throw ParseError(line, "unknown flag '" + std::string(flag) + "'");
    return frame;
}

CanFrame parse_generic_row(std::string_view row, const ColumnMap& map, std::size_t line) {
    auto fields = split_fields(trim(row));
    auto need = [&](std::size_t column, const char* name) {
        if (column >= fields.size())
            throw ConfigError("column map references column " + std::to_string(column) + " (" + name +
                              ") but line " + std::to_string(line) + " has " + std::to_string(fields.size()) +
                              " columns");
        return fields[column];
    };
    CanFrame frame;
    frame.timestamp = parse_timestamp(need(map.timestamp, "timestamp"), line);
    auto id_text = need(map.id, "id");
    frame.can_id = checked_id(map.hex_id ? parse_hex(id_text, line, "CAN id") : parse_uint(id_text, line, "CAN id"), line);
    if (map.dlc) {
        frame.dlc = checked_dlc(parse_uint(need(*map.dlc, "dlc"), line, "DLC"), line);
        if (frame.dlc > 0) need(map.data + frame.dlc - 1, "data");
        for (std::uint8_t i = 0; i < frame.dlc; ++i)
            frame.payload[i] = checked_byte(parse_hex(fields[map.data + i], line, "payload byte"), line);
    } else {
        auto hex = trim(need(map.data, "data"));
        if (hex.size() % 2 != 0) throw ParseError(line, "odd-length payload hex string");
        frame.dlc = checked_dlc(static_cast<unsigned>(hex.size() / 2), line);
        for (std::uint8_t i = 0; i < frame.dlc; ++i)
            frame.payload[i] = checked_byte(parse_hex(hex.substr(2 * i, 2), line, "payload byte"), line);
    }
    auto marker = trim(need(map.label, "label"));
    frame.label = map.attack_markers.contains(marker) ? Label::Attack : Label::Benign;
    return frame;
}

CarHackingReader::CarHackingReader(const std::filesystem::path& path) : in_(path) {
    if (!in_) throw DataError("cannot open " + path.string());
}

std::optional<CanFrame> CarHackingReader::next() {
    while (std::getline(in_, buffer_)) {
        ++line_;
        if (blank(buffer_)) continue;
        return parse_car_hacking_row(buffer_, line_);
    }
    return std::nullopt;
}

GenericCsvReader::GenericCsvReader(const std::filesystem::path& path, ColumnMap map)
    : in_(path), map_(std::move(map)) {
    if (!in_) throw DataError("cannot open " + path.string());
}

std::optional<CanFrame> GenericCsvReader::next() {
    while (std::getline(in_, buffer_)) {
        ++line_;
        if (line_ == 1 && map_.skip_header) continue;
        if (blank(buffer_)) continue;
        return parse_generic_row(buffer_, map_, line_);
    }
    return std::nullopt;
}

std::vector<CanFrame> parse_car_hacking_csv(const std::filesystem::path& path) {
    CarHackingReader reader(path);
    std::vector<CanFrame> frames;
    std::optional<double> last;
    while (auto frame = reader.next()) {
        check_order(last, frame->timestamp, reader.line());
        frames.push_back(*frame);
    }
    return frames;
}

std::vector<CanFrame> parse_generic_labeled_csv(const std::filesystem::path& path, const ColumnMap& map) {
    GenericCsvReader reader(path, map);
    std::vector<CanFrame> frames;
    std::optional<double> last;
    while (auto frame = reader.next()) {
        check_order(last, frame->timestamp, reader.line());
        frames.push_back(*frame);
    }
    return frames;
}

std::vector<CanFrame> parse_car_hacking_files(const std::vector<std::filesystem::path>& paths) {
    std::vector<CanFrame> all;
    for (const auto& p : paths) {
        auto part = parse_car_hacking_csv(p);
        all.insert(all.end(), part.begin(), part.end());
    }
    return all;
}

ColumnMap parse_column_map(std::string_view spec) {
    ColumnMap map;
    map.dlc.reset();
    bool have_ts = false, have_id = false, have_data = false, have_label = false;
    for (auto item : split_fields(spec)) {
        item = trim(item);
        if (item.empty()) continue;
        auto eq = item.find('=');
        if (eq == std::string_view::npos) throw ConfigError("column map entry '" + std::string(item) + "' lacks '='");
        auto key = trim(item.substr(0, eq));
        auto value = trim(item.substr(eq + 1));
        auto index = [&] {
            std::size_t v = 0;
            auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
            if (value.empty() || ec != std::errc{} || ptr != value.data() + value.size())
                throw ConfigError("column map value for '" + std::string(key) + "' is not an index");
            return v;
        };
        if (key == "ts" || key == "timestamp") {
            map.timestamp = index();
            have_ts = true;
        } else if (key == "id") {
            map.id = index();
            have_id = true;
        } else if (key == "dlc") {
            map.dlc = index();
        } else if (key == "data") {
            map.data = index();
            have_data = true;
        } else if (key == "label") {
            map.label = index();
            have_label = true;
        } else if (key == "header") {
            map.skip_header = value == "1" || value == "true";
        } else if (key == "decimal-id") {
            map.hex_id = !(value == "1" || value == "true");
        } else if (key == "attack") {
            map.attack_markers.clear();
            for (auto m : split_fields(value, '|')) map.attack_markers.emplace(trim(m));
        } else {
            throw ConfigError("unknown column map key '" + std::string(key) + "'");
        }
    }
    if (!have_ts || !have_id || !have_data || !have_label)
        throw ConfigError("column map must name ts, id, data and label columns");
    return map;
}

std::string format_car_hacking_row(const CanFrame& frame) {
    char buf[128];
    int n = std::snprintf(buf, sizeof buf, "%.6f,%04x,%u", frame.timestamp, static_cast<unsigned>(frame.can_id),
                          static_cast<unsigned>(frame.dlc));
    std::string row(buf, static_cast<std::size_t>(n));
    for (std::uint8_t i = 0; i < frame.dlc; ++i) {
        std::snprintf(buf, sizeof buf, ",%02x", static_cast<unsigned>(frame.payload[i]));
        row += buf;
    }
    row += frame.label == Label::Attack ? ",T" : ",R";
    return row;
}

void write_car_hacking_csv(const std::filesystem::path& path, const std::vector<CanFrame>& frames) {
    std::string out;
    out.reserve(frames.size() * 48);
    for (const auto& f : frames) {
        out += format_car_hacking_row(f);
        out += '\n';
    }
    write_file_atomic(path, out);
}

}  // namespace canids
