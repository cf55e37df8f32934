#include "canids/train.hpp"

#include <numeric>

#include "canids/error.hpp"

namespace canids {

BatchAccumulator::BatchAccumulator(const nn::ParamSet& params) {
    chunk_grads_.reserve(chunk_count(~std::size_t{0}));
    for (std::size_t c = 0; c < chunk_count(~std::size_t{0}); ++c) chunk_grads_.emplace_back(params);
}

double BatchAccumulator::run(const nn::ParamSet& params, std::span<const std::size_t> items, const ItemLoss& loss,
                             std::uint64_t batch_seed, nn::GradBuffer& grads, ExecPolicy policy) {
    if (items.empty()) throw DataError("empty training batch");
    const std::size_t chunks = chunk_count(items.size());
    std::vector<double> chunk_loss(chunks, 0.0);
    parallel_for(chunks, policy, [&](std::size_t c) {
        auto& local = chunk_grads_[c];
        local.zero();
        const std::size_t begin = c * items.size() / chunks;
        const std::size_t end = (c + 1) * items.size() / chunks;
        for (std::size_t k = begin; k < end; ++k) {
            nn::Rng rng(nn::Rng::derive(batch_seed, items[k]));
            nn::Tape tape;
            auto bound = tape.bind(params, &local);
            nn::Var l = loss(tape, bound, items[k], rng);
            chunk_loss[c] += l.item();
            tape.backward(l);
        }
    });
    grads.zero();
    double total = 0.0;
    for (std::size_t c = 0; c < chunks; ++c) {
        grads += chunk_grads_[c];
        total += chunk_loss[c];
    }
    const double inv = 1.0 / static_cast<double>(items.size());
    grads.scale(inv);
    return total * inv;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, nn::Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    return idx;
}

}  // namespace canids
