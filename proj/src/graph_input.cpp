#include "canids/graph_input.hpp"

#include <cmath>

#include "canids/error.hpp"

namespace canids {

GraphInput prepare_graph(const WindowGraph& graph) {
    const std::size_t n = graph.num_nodes();
    if (n == 0) throw DataError("cannot prepare an empty graph");
    GraphInput in;
    in.node_ids = graph.node_ids;
    in.label = graph.label;
    in.window_start_index = graph.window_start_index;
    in.features = nn::Matrix(n, kNodeFeatureDim);
    for (std::size_t i = 0; i < n; ++i) {
        in.features(i, 0) = graph.features[i].normalized_id;
        in.features(i, 1) = graph.features[i].frequency;
        in.features(i, 2) = graph.features[i].mean_payload;
    }

    std::vector<double> logw;
    std::vector<bool> has_self(n, false);
    std::vector<bool> adjacent(n * n, false);
    auto push = [&](std::uint32_t s, std::uint32_t d, std::uint32_t w) {
        in.src.push_back(s);
        in.dst.push_back(d);
        logw.push_back(std::log(static_cast<double>(w)));
        if (s == d) has_self[d] = true;
    };
    for (const auto& e : graph.edges) {
        if (e.src >= n || e.dst >= n) throw DataError("edge references a missing node");
        if (e.weight == 0) throw DataError("edge with zero weight");
        push(e.src, e.dst, e.weight);
        if (!graph.directed && e.src != e.dst) push(e.dst, e.src, e.weight);
        adjacent[e.src * n + e.dst] = adjacent[e.dst * n + e.src] = true;
    }
    for (std::uint32_t v = 0; v < n; ++v)
        if (!has_self[v]) push(v, v, 1);
    const std::size_t m = logw.size();
    in.log_weight = nn::Matrix(m, 1, std::move(logw));

    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = i; j < n; ++j) (adjacent[i * n + j] ? in.positives : in.negatives).emplace_back(i, j);
    return in;
}

std::vector<GraphInput> prepare_graphs(const std::vector<WindowGraph>& graphs) {
    std::vector<GraphInput> out(graphs.size());
    parallel_for(graphs.size(), ExecPolicy::Parallel, [&](std::size_t i) { out[i] = prepare_graph(graphs[i]); });
    return out;
}

}  // namespace canids
