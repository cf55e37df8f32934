#include "canids/graph.hpp"

#include <algorithm>
#include <unordered_map>

#include "canids/error.hpp"

namespace canids {

void validate(const WindowOptions& options) {
    if (options.window < 2) throw ConfigError("window size must be >= 2");
    if (options.stride < 1 || options.stride > options.window)
        throw ConfigError("stride must lie in [1, window]");
}

WindowGraph build_window(std::span<const CanFrame> frames, std::size_t start, const WindowOptions& options) {
    const std::size_t w = options.window;
    if (start + w > frames.size()) throw ConfigError("window extends past the end of the stream");

    WindowGraph g;
    g.window_start_index = start;
    g.directed = options.directed;

    std::array<std::int32_t, kMaxStandardId + 1> index;
    index.fill(-1);
    std::vector<std::uint32_t> counts;
    std::vector<std::uint64_t> byte_sums;
    std::vector<std::uint64_t> byte_counts;
    std::vector<std::uint32_t> node_of(w);

    for (std::size_t i = 0; i < w; ++i) {
        const auto& f = frames[start + i];
        auto& slot = index[f.can_id];
        if (slot < 0) {
            slot = static_cast<std::int32_t>(g.node_ids.size());
            g.node_ids.push_back(f.can_id);
            counts.push_back(0);
            byte_sums.push_back(0);
            byte_counts.push_back(0);
        }
        const auto n = static_cast<std::size_t>(slot);
        node_of[i] = static_cast<std::uint32_t>(n);
        ++counts[n];
        for (auto b : f.bytes()) byte_sums[n] += b;
        byte_counts[n] += f.dlc;
        if (f.label == Label::Attack) g.label = 1;
    }

    g.features.resize(g.node_ids.size());
    for (std::size_t n = 0; n < g.node_ids.size(); ++n) {
        auto& x = g.features[n];
        x.normalized_id = static_cast<double>(g.node_ids[n]) / static_cast<double>(kMaxStandardId);
        x.frequency = static_cast<double>(counts[n]) / static_cast<double>(w);
        x.mean_payload = byte_counts[n] == 0
                             ? 0.0
                             : static_cast<double>(byte_sums[n]) / static_cast<double>(byte_counts[n]) / 255.0;
    }

    std::unordered_map<std::uint64_t, std::uint32_t> edge_index;
    for (std::size_t i = 0; i + 1 < w; ++i) {
        std::uint32_t src = node_of[i];
        std::uint32_t dst = node_of[i + 1];
        if (!options.directed && src > dst) std::swap(src, dst);
        const std::uint64_t key = (static_cast<std::uint64_t>(src) << 32) | dst;
        auto [it, inserted] = edge_index.try_emplace(key, static_cast<std::uint32_t>(g.edges.size()));
        if (inserted) g.edges.push_back({src, dst, 0});
        ++g.edges[it->second].weight;
    }
    return g;
}

std::vector<WindowGraph> build_windows(std::span<const CanFrame> frames, const WindowOptions& options,
                                       ExecPolicy policy) {
    validate(options);
    if (frames.size() < options.window)
        throw ConfigError("stream has " + std::to_string(frames.size()) + " frames, fewer than the window size " +
                          std::to_string(options.window));
    const std::size_t count = (frames.size() - options.window) / options.stride + 1;
    std::vector<WindowGraph> graphs(count);
    parallel_for(count, policy, [&](std::size_t i) { graphs[i] = build_window(frames, i * options.stride, options); });
    return graphs;
}

GraphStats feature_stats(std::span<const WindowGraph> graphs) {
    if (graphs.empty()) throw DataError("feature_stats needs at least one graph");
    GraphStats s;
    s.count = graphs.size();
    s.min_nodes = s.min_edges = static_cast<std::size_t>(-1);
    double node_sum = 0.0, edge_sum = 0.0;
    for (const auto& g : graphs) {
        s.min_nodes = std::min(s.min_nodes, g.num_nodes());
        s.max_nodes = std::max(s.max_nodes, g.num_nodes());
        s.min_edges = std::min(s.min_edges, g.edges.size());
        s.max_edges = std::max(s.max_edges, g.edges.size());
        node_sum += static_cast<double>(g.num_nodes());
        edge_sum += static_cast<double>(g.edges.size());
        s.attack_windows += static_cast<std::size_t>(g.label);
    }
    s.mean_nodes = node_sum / static_cast<double>(s.count);
    s.mean_edges = edge_sum / static_cast<double>(s.count);
    s.attack_fraction = static_cast<double>(s.attack_windows) / static_cast<double>(s.count);
    return s;
}

}  // namespace canids
