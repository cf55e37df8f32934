#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "canids/can_frame.hpp"

namespace canids {

// Column layout for arbitrary labeled CSV logs. When `dlc` is absent, `data` names a
// single column holding the payload as a contiguous hex string (can-train-and-test
// style); otherwise payload bytes occupy columns data .. data+dlc-1.
struct ColumnMap {
    std::size_t timestamp = 0;
    std::size_t id = 1;
    std::optional<std::size_t> dlc = 2;
    std::size_t data = 3;
    std::size_t label = 11;
    std::set<std::string, std::less<>> attack_markers{"T", "1", "Attack", "attack"};
    bool skip_header = false;
    bool hex_id = true;
};

// Parses "ts=0,id=1,dlc=2,data=3,label=11[,header=1][,attack=T|1]". Omitting dlc selects
// the hex-string payload layout.
ColumnMap parse_column_map(std::string_view spec);

// Line-at-a-time reader for the HCRL Car-Hacking layout:
//   timestamp,ID(hex),DLC,DATA0..DATA{DLC-1},flag   with flag R = benign, T = attack.
class CarHackingReader {
public:
    explicit CarHackingReader(const std::filesystem::path& path);
    std::optional<CanFrame> next();
    std::size_t line() const { return line_; }

private:
    std::ifstream in_;
    std::string buffer_;
    std::size_t line_ = 0;
};

class GenericCsvReader {
public:
    GenericCsvReader(const std::filesystem::path& path, ColumnMap map);
    std::optional<CanFrame> next();
    std::size_t line() const { return line_; }

private:
    std::ifstream in_;
    std::string buffer_;
    ColumnMap map_;
    std::size_t line_ = 0;
};

CanFrame parse_car_hacking_row(std::string_view row, std::size_t line);
CanFrame parse_generic_row(std::string_view row, const ColumnMap& map, std::size_t line);

std::vector<CanFrame> parse_car_hacking_csv(const std::filesystem::path& path);
std::vector<CanFrame> parse_generic_labeled_csv(const std::filesystem::path& path, const ColumnMap& map);

// Concatenates several logs in the given order, shifting nothing; each file keeps its
// own timestamps. Used for per-vehicle dataset splits.
std::vector<CanFrame> parse_car_hacking_files(const std::vector<std::filesystem::path>& paths);

// Inverse of parse_car_hacking_row; timestamps carry microsecond precision.
std::string format_car_hacking_row(const CanFrame& frame);
void write_car_hacking_csv(const std::filesystem::path& path, const std::vector<CanFrame>& frames);

}  // namespace canids
