#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

namespace canids {

inline constexpr std::uint16_t kMaxStandardId = 2047;
inline constexpr std::uint8_t kMaxDlc = 8;

enum class Label : std::uint8_t { Benign = 0, Attack = 1 };

// One classic CAN data frame as logged by an intrusion dataset.
struct CanFrame {
    double timestamp = 0.0;
    std::uint16_t can_id = 0;
    std::uint8_t dlc = 0;
    std::array<std::uint8_t, kMaxDlc> payload{};  // only the first dlc bytes are meaningful
    Label label = Label::Benign;

    std::span<const std::uint8_t> bytes() const { return {payload.data(), dlc}; }

    friend bool operator==(const CanFrame& a, const CanFrame& b) {
        if (a.timestamp != b.timestamp || a.can_id != b.can_id || a.dlc != b.dlc || a.label != b.label)
            return false;
        for (std::uint8_t i = 0; i < a.dlc; ++i)
            if (a.payload[i] != b.payload[i]) return false;
        return true;
    }
};

enum class AttackKind { Dos, Fuzzing, Spoofing, Replay };

std::string_view to_string(AttackKind kind);
std::optional<AttackKind> attack_kind_from_string(std::string_view name);

}  // namespace canids
