#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "canids/nn/param.hpp"
#include "canids/nn/rng.hpp"
#include "canids/nn/tape.hpp"
#include "canids/parallel.hpp"

namespace canids {

// Per-item loss: records the forward pass of one training item on `tape`, using the
// parameters already bound in `bound`, and returns a scalar loss. `rng` is seeded per
// item, so results do not depend on how items are spread over threads.
using ItemLoss = std::function<nn::Var(nn::Tape& tape, std::span<const nn::Var> bound, std::size_t item, nn::Rng& rng)>;

// Mini-batch gradient accumulation. Items are split into chunk_count(batch) fixed chunks;
// each chunk accumulates its items in order on one thread, then chunks are summed in
// order. The result (mean loss, mean gradient in `grads`) is identical for every
// thread count and for both execution policies.
class BatchAccumulator {
public:
    explicit BatchAccumulator(const nn::ParamSet& params);

    double run(const nn::ParamSet& params, std::span<const std::size_t> items, const ItemLoss& loss,
               std::uint64_t batch_seed, nn::GradBuffer& grads, ExecPolicy policy = ExecPolicy::Parallel);

private:
    std::vector<nn::GradBuffer> chunk_grads_;
};

// Fisher-Yates permutation of [0, n) drawn from `rng`.
std::vector<std::size_t> shuffled_indices(std::size_t n, nn::Rng& rng);

}  // namespace canids
