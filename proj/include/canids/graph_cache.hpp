#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "canids/graph.hpp"

namespace canids {

// Line-oriented graph cache. Layout:
//
//   canids-graphs 1
//   window <start_index> <label> <directed:0|1> <num_nodes> <num_edges>
//   n <can_id> <normalized_id> <frequency> <mean_payload>     (num_nodes lines)
//   e <src> <dst> <weight>                                    (num_edges lines)
//   ... next window ...
//
// Feature values use the shortest round-trip decimal form, so load(save(g)) == g
// bit for bit.
std::string serialize_graphs(const std::vector<WindowGraph>& graphs);
std::vector<WindowGraph> deserialize_graphs(std::string_view text);

void save_graphs(const std::filesystem::path& path, const std::vector<WindowGraph>& graphs);
std::vector<WindowGraph> load_graphs(const std::filesystem::path& path);

}  // namespace canids
