#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "canids/can_frame.hpp"
#include "canids/parallel.hpp"

namespace canids {

// Per-node attributes: [can_id / 2047, count / W, mean payload byte / 255].
struct NodeFeatures {
    double normalized_id = 0.0;
    double frequency = 0.0;
    double mean_payload = 0.0;

    friend bool operator==(const NodeFeatures&, const NodeFeatures&) = default;
};

inline constexpr std::size_t kNodeFeatureDim = 3;

struct Edge {
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    std::uint32_t weight = 0;  // number of consecutive-frame transitions src -> dst

    friend bool operator==(const Edge&, const Edge&) = default;
};

struct WindowGraph {
    std::vector<std::uint16_t> node_ids;  // first-appearance order
    std::vector<NodeFeatures> features;   // parallel to node_ids
    std::vector<Edge> edges;              // first-appearance order of each transition
    int label = 0;                        // 1 iff the window holds at least one attack frame
    std::size_t window_start_index = 0;
    bool directed = true;  // undirected graphs store each unordered pair once with src <= dst

    std::size_t num_nodes() const { return node_ids.size(); }

    friend bool operator==(const WindowGraph&, const WindowGraph&) = default;
};

struct WindowOptions {
    std::size_t window = 100;
    std::size_t stride = 100;
    bool directed = true;
};

void validate(const WindowOptions& options);

// Builds one graph from frames[start, start + window).
WindowGraph build_window(std::span<const CanFrame> frames, std::size_t start, const WindowOptions& options);

// Windows begin at 0, stride, 2*stride, ...; a trailing partial window is dropped.
// Both policies return identical graphs in stream order.
std::vector<WindowGraph> build_windows(std::span<const CanFrame> frames, const WindowOptions& options,
                                       ExecPolicy policy = ExecPolicy::Parallel);

struct GraphStats {
    std::size_t count = 0;
    std::size_t min_nodes = 0, max_nodes = 0;
    double mean_nodes = 0.0;
    std::size_t min_edges = 0, max_edges = 0;
    double mean_edges = 0.0;
    std::size_t attack_windows = 0;
    double attack_fraction = 0.0;
};

GraphStats feature_stats(std::span<const WindowGraph> graphs);

}  // namespace canids
