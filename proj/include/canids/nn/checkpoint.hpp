#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "canids/nn/param.hpp"

namespace canids::nn {

// Text checkpoint:
//
//   canids-checkpoint 1
//   kind <model kind>
//   config <key> <value>           (zero or more, sorted by key)
//   param <name> <rows> <cols>
//   <rows*cols values, space separated, shortest round-trip decimal>
//   ...
//   end
//
// Values reload bit-exactly.
struct Checkpoint {
    std::string kind;
    std::map<std::string, std::string> config;
    ParamSet params;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies values from `loaded` into `target`, requiring identical names, order and shapes.
void assign_params(ParamSet& target, const ParamSet& loaded);

}  // namespace canids::nn
