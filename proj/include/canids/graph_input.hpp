#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "canids/graph.hpp"
#include "canids/nn/matrix.hpp"
#include "canids/nn/ops.hpp"

namespace canids {

using NodePair = std::pair<std::uint32_t, std::uint32_t>;

// A WindowGraph lowered into the index arrays the GNN layers consume.
struct GraphInput {
    nn::Matrix features;    // n x 3
    nn::Index src;          // message-passing edges u -> v, self-loops included
    nn::Index dst;
    nn::Matrix log_weight;  // m x 1, log of the transition count
    std::vector<NodePair> positives;  // unordered node pairs (i <= j) joined by an observed edge
    std::vector<NodePair> negatives;  // every other unordered pair, diagonal included
    std::vector<std::uint16_t> node_ids;
    int label = 0;
    std::size_t window_start_index = 0;

    std::size_t num_nodes() const { return node_ids.size(); }
};

// Undirected graphs are expanded to both directions. Every node attends to itself: a
// node without an observed self-transition receives a self-loop of weight 1.
GraphInput prepare_graph(const WindowGraph& graph);
std::vector<GraphInput> prepare_graphs(const std::vector<WindowGraph>& graphs);

}  // namespace canids
