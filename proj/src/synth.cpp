#include "canids/synth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include "json.hpp"
#include <string>

#include "canids/error.hpp"
#include "canids/nn/rng.hpp"

namespace canids {

namespace {

double quantize_us(double t) { return std::round(t * 1e6) / 1e6; }

// Slowly varying benign signal: a fixed base per byte plus a short counter ramp and
// a little noise, kept inside [0, kBenignByteMax].
class BenignPayload {
public:
    // Byte shapes depend only on the ECU's payload seed; `noise_seed` drives the jitter.
    BenignPayload(const EcuSchedule& ecu, std::uint64_t noise_seed) : dlc_(ecu.dlc), rng_(noise_seed) {
        nn::Rng shape(nn::Rng::derive(ecu.payload_seed, ecu.can_id));
        for (std::uint8_t i = 0; i < dlc_; ++i) {
            base_[i] = static_cast<int>(shape.below(90)) + 10;
            span_[i] = static_cast<int>(shape.below(12)) + 1;
        }
    }

    std::array<std::uint8_t, kMaxDlc> next() {
        std::array<std::uint8_t, kMaxDlc> out{};
        for (std::uint8_t i = 0; i < dlc_; ++i) {
            int v = base_[i] + static_cast<int>(counter_ % static_cast<std::uint64_t>(span_[i])) +
                    static_cast<int>(rng_.below(5)) - 2;
            out[i] = static_cast<std::uint8_t>(std::clamp(v, 0, static_cast<int>(kBenignByteMax)));
        }
        ++counter_;
        return out;
    }

private:
    std::uint8_t dlc_;
    nn::Rng rng_;
    std::array<int, kMaxDlc> base_{};
    std::array<int, kMaxDlc> span_{};
    std::uint64_t counter_ = 0;
};

}  // namespace

void validate(const SynthConfig& config) {
    if (config.ecus.empty()) throw ConfigError("synthetic log needs at least one ECU");
    if (!(config.duration > 0.0)) throw ConfigError("synthetic log duration must be > 0");
    for (const auto& ecu : config.ecus) {
        if (!(ecu.period > 0.0)) throw ConfigError("ECU period must be > 0");
        if (ecu.can_id > kMaxStandardId) throw ConfigError("ECU id exceeds 11 bits");
        if (ecu.dlc > kMaxDlc) throw ConfigError("ECU dlc exceeds 8");
    }
    for (const auto& a : config.attacks) {
        if (!(a.duration > 0.0)) throw ConfigError("attack duration must be > 0");
        if (!(a.injection_rate > 0.0)) throw ConfigError("attack injection rate must be > 0");
        if (a.start_time < 0.0 || a.start_time + a.duration > config.duration)
            throw ConfigError("attack window [" + std::to_string(a.start_time) + ", " +
                              std::to_string(a.start_time + a.duration) + "] outside [0, " +
                              std::to_string(config.duration) + "]");
        if ((a.kind == AttackKind::Spoofing || a.kind == AttackKind::Replay) && !a.target_id)
            throw ConfigError(std::string(to_string(a.kind)) + " attack requires a target id");
        if (a.target_id && *a.target_id > kMaxStandardId) throw ConfigError("attack target id exceeds 11 bits");
    }
}

std::vector<CanFrame> generate_synthetic_log(const SynthConfig& config, std::uint64_t rng_seed) {
    validate(config);
    std::vector<CanFrame> frames;

    for (std::size_t e = 0; e < config.ecus.size(); ++e) {
        const auto& ecu = config.ecus[e];
        nn::Rng timing(nn::Rng::derive(rng_seed, 2 * e));
        BenignPayload payload(ecu, nn::Rng::derive(rng_seed, 2 * e + 1));
        const double phase = timing.uniform(0.0, ecu.period);
        for (std::uint64_t k = 0;; ++k) {
            const double nominal = phase + static_cast<double>(k) * ecu.period;
            if (nominal >= config.duration) break;
            double t = nominal + timing.uniform(-0.1, 0.1) * ecu.period;
            t = std::clamp(quantize_us(t), 0.0, quantize_us(config.duration - 1e-6));
            CanFrame f;
            f.timestamp = t;
            f.can_id = ecu.can_id;
            f.dlc = ecu.dlc;
            f.payload = payload.next();
            frames.push_back(f);
        }
    }
    std::stable_sort(frames.begin(), frames.end(),
                     [](const CanFrame& a, const CanFrame& b) { return a.timestamp < b.timestamp; });

    std::vector<CanFrame> injected;
    for (std::size_t ai = 0; ai < config.attacks.size(); ++ai) {
        const auto& attack = config.attacks[ai];
        nn::Rng rng(nn::Rng::derive(rng_seed, 1000 + ai));
        const auto count = static_cast<std::uint64_t>(std::floor(attack.duration * attack.injection_rate));

        std::vector<CanFrame> replay;
        if (attack.kind == AttackKind::Replay) {
            std::deque<CanFrame> buffer;
            for (const auto& f : frames) {
                if (f.timestamp >= attack.start_time) break;
                if (f.can_id != *attack.target_id) continue;
                buffer.push_back(f);
                if (buffer.size() > kReplayBufferFrames) buffer.pop_front();
            }
            if (buffer.empty())
                throw ConfigError("replay target " + std::to_string(*attack.target_id) +
                                  " has no frames before the attack starts");
            replay.assign(buffer.begin(), buffer.end());
        }
        std::uint8_t target_dlc = 8;
        if (attack.target_id)
            for (const auto& ecu : config.ecus)
                if (ecu.can_id == *attack.target_id) target_dlc = ecu.dlc;

        for (std::uint64_t i = 0; i < count; ++i) {
            CanFrame f;
            f.timestamp = quantize_us(attack.start_time + static_cast<double>(i) / attack.injection_rate);
            f.label = Label::Attack;
            switch (attack.kind) {
                case AttackKind::Dos:
                    f.can_id = 0;
                    f.dlc = 8;
                    break;
                case AttackKind::Fuzzing:
                    f.can_id = static_cast<std::uint16_t>(rng.below(kMaxStandardId + 1));
                    f.dlc = 8;
                    for (auto& b : f.payload) b = static_cast<std::uint8_t>(rng.below(256));
                    break;
                case AttackKind::Spoofing:
                    f.can_id = *attack.target_id;
                    f.dlc = target_dlc;
                    for (std::uint8_t b = 0; b < f.dlc; ++b)
                        f.payload[b] = static_cast<std::uint8_t>(128 + rng.below(128));
                    break;
                case AttackKind::Replay: {
                    const auto& src = replay[i % replay.size()];
                    f.can_id = src.can_id;
                    f.dlc = src.dlc;
                    f.payload = src.payload;
                    break;
                }
            }
            injected.push_back(f);
        }
    }

    frames.insert(frames.end(), injected.begin(), injected.end());
    std::stable_sort(frames.begin(), frames.end(),
                     [](const CanFrame& a, const CanFrame& b) { return a.timestamp < b.timestamp; });
    return frames;
}

namespace {

constexpr double kDemoBenignRate = 280.0;
constexpr double kDemoDosSeconds = 1.5, kDemoDosRate = 1000.0;
constexpr double kDemoFuzzSeconds = 4.0, kDemoFuzzRate = 200.0;
constexpr double kDemoSpoofSeconds = 10.0, kDemoSpoofRate = 20.0;
constexpr std::uint16_t kDemoSpoofTarget = 0x4f0;

}  // namespace

SynthConfig demo_synth_config(double duration) {
    SynthConfig c;
    c.duration = duration;
    c.ecus = {{0x130, 0.01, 11, 8}, {0x140, 0.02, 12, 8}, {0x2a0, 0.01, 13, 8}, {0x350, 0.05, 14, 6},
              {kDemoSpoofTarget, 0.1, 15, 8}};
    constexpr int kSegments = 9;
    for (int k = 0; k < kSegments; ++k) {
        AttackSpec a;
        const double centre = duration * (static_cast<double>(k) + 0.5) / kSegments;
        switch (k % 3) {
            case 0:
                a.kind = AttackKind::Dos;
                a.duration = kDemoDosSeconds;
                a.injection_rate = kDemoDosRate;
                break;
            case 1:
                a.kind = AttackKind::Fuzzing;
                a.duration = kDemoFuzzSeconds;
                a.injection_rate = kDemoFuzzRate;
                break;
            default:
                a.kind = AttackKind::Spoofing;
                a.duration = kDemoSpoofSeconds;
                a.injection_rate = kDemoSpoofRate;
                a.target_id = kDemoSpoofTarget;
                break;
        }
        a.start_time = std::max(0.0, centre - a.duration / 2);
        if (a.start_time + a.duration > duration) a.duration = duration - a.start_time;
        c.attacks.push_back(a);
    }
    return c;
}

namespace {

double expected_frames(const SynthConfig& c) {
    double n = 0.0;
    for (const auto& e : c.ecus) n += c.duration / e.period;
    for (const auto& a : c.attacks) n += a.duration * a.injection_rate;
    return n;
}

}  // namespace

double demo_duration_for_frames(std::size_t frames) {
    const double target = static_cast<double>(frames);
    double lo = 1.0, hi = std::max(2.0, target / kDemoBenignRate + 1.0);
    if (expected_frames(demo_synth_config(lo)) >= target) return lo;
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (expected_frames(demo_synth_config(mid)) < target ? lo : hi) = mid;
    }
    return hi;
}

SynthConfig synth_config_from_json(std::string_view text) {
    using nlohmann::json;
    SynthConfig config;
    try {
        auto doc = json::parse(text);
        config.duration = doc.at("duration").get<double>();
        for (const auto& e : doc.at("ecus")) {
            EcuSchedule ecu;
            ecu.can_id = e.at("id").get<std::uint16_t>();
            ecu.period = e.at("period").get<double>();
            ecu.payload_seed = e.value("seed", std::uint64_t{0});
            ecu.dlc = e.value("dlc", std::uint8_t{8});
            config.ecus.push_back(ecu);
        }
        if (doc.contains("attacks")) {
            for (const auto& a : doc.at("attacks")) {
                AttackSpec spec;
                auto kind = attack_kind_from_string(a.at("kind").get<std::string>());
                if (!kind) throw ConfigError("unknown attack kind '" + a.at("kind").get<std::string>() + "'");
                spec.kind = *kind;
                spec.start_time = a.at("start").get<double>();
                spec.duration = a.at("duration").get<double>();
                spec.injection_rate = a.at("rate").get<double>();
                if (a.contains("target")) spec.target_id = a.at("target").get<std::uint16_t>();
                config.attacks.push_back(spec);
            }
        }
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("synthetic config: ") + ex.what());
    }
    validate(config);
    return config;
}

}  // namespace canids
