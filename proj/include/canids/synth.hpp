#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "canids/can_frame.hpp"

namespace canids {

struct EcuSchedule {
    std::uint16_t can_id = 0;
    double period = 0.01;  // seconds
    std::uint64_t payload_seed = 0;
    std::uint8_t dlc = 8;
};

struct AttackSpec {
    AttackKind kind = AttackKind::Dos;
    double start_time = 0.0;
    double duration = 1.0;
    std::optional<std::uint16_t> target_id;  // required for Spoofing and Replay
    double injection_rate = 1000.0;          // messages per second
};

struct SynthConfig {
    std::vector<EcuSchedule> ecus;
    double duration = 10.0;
    std::vector<AttackSpec> attacks;
};

// Benign payload bytes stay in [0, 127]; spoofed payload bytes are drawn from [128, 255].
inline constexpr std::uint8_t kBenignByteMax = 127;
inline constexpr std::size_t kReplayBufferFrames = 100;

void validate(const SynthConfig& config);

// Periodic ECU traffic with ±10% timestamp jitter, quantized to microseconds, with the
// configured attacks injected. Output is sorted by timestamp and fully determined by
// (config, rng_seed).
std::vector<CanFrame> generate_synthetic_log(const SynthConfig& config, std::uint64_t rng_seed);

// Five periodic ECUs (280 frames/s in total) with nine attack segments spread evenly
// over `duration`, cycling DoS, fuzzing and spoofing of the slowest ECU. Roughly one
// window in ten holds attack traffic at W = 100.
SynthConfig demo_synth_config(double duration);

// Duration for which demo_synth_config produces about `frames` frames.
double demo_duration_for_frames(std::size_t frames);

// JSON form used by `canids synth --config`:
//   {"duration": 60, "ecus": [{"id": 256, "period": 0.01, "seed": 1, "dlc": 8}, ...],
//    "attacks": [{"kind": "dos", "start": 5, "duration": 1, "rate": 2000, "target": 300}]}
SynthConfig synth_config_from_json(std::string_view text);

}  // namespace canids
