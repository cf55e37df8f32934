#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "canids/gat.hpp"
#include "canids/graph_input.hpp"
#include "canids/nn/checkpoint.hpp"
#include "canids/nn/rng.hpp"
#include "canids/nn/tape.hpp"

namespace canids {

struct VgaeConfig {
    std::size_t num_layers = 3;  // attention layers = num_layers - 1, plus the mu / log-sigma heads
    std::size_t attn_heads = 4;
    std::size_t hidden_channels = 32;
    std::size_t latent_dim = 16;
    std::size_t id_buckets = 256;
    double leaky_slope = 0.2;
    Role role = Role::Teacher;

    static VgaeConfig teacher();
    static VgaeConfig student();

    void validate() const;
    std::size_t encoder_width() const;  // width feeding the mu / log-sigma heads
};

// Weights of the three reconstruction error terms in the anomaly score.
struct CompositeWeights {
    double alpha = 1.0;   // node-feature term
    double beta = 20.0;   // neighbourhood term
    double gamma = 0.3;   // CAN-ID term

    void validate() const;
};

struct ErrorTerms {
    double node = 0.0;
    double neighbor = 0.0;
    double can_id = 0.0;
    double composite = 0.0;
};

double combine(const ErrorTerms& terms, const CompositeWeights& weights);

enum class ScoreMode { Composite, AdjacencyL2 };

struct LatentState {
    nn::Var mu;         // n x latent
    nn::Var log_sigma;  // n x latent, clamped to [-10, 10]
    nn::Var z;          // mu + exp(log_sigma) * noise while training, mu at inference
};

struct DecodedFeatures {
    nn::Var features;   // n x 3, sigmoid outputs
    nn::Var id_logits;  // n x id_buckets
};

inline constexpr double kLogSigmaLimit = 10.0;

class VgaeModel {
public:
    VgaeModel(const VgaeConfig& config, std::uint64_t seed);

    const VgaeConfig& config() const { return config_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }

    // `noise` null selects inference mode (z = mu).
    LatentState encode(std::span<const nn::Var> bound, const GraphInput& graph, nn::Rng* noise) const;
    static nn::Var decode_adjacency(nn::Var z);
    DecodedFeatures decode_features(std::span<const nn::Var> bound, nn::Var z) const;

    // Edge BCE over observed pairs and an equal number of sampled non-edges, feature MSE,
    // ID-bucket cross-entropy and KL to the standard normal prior divided by node count.
    nn::Var elbo_loss(std::span<const nn::Var> bound, const GraphInput& graph, nn::Rng& rng,
                      LatentState* latent_out = nullptr) const;

    // Inference-mode error terms; negatives are drawn from Rng(derive(seed, window_start_index)).
    ErrorTerms score(const GraphInput& graph, const CompositeWeights& weights, std::uint64_t seed) const;
    std::vector<ErrorTerms> score_all(std::span<const GraphInput> graphs, const CompositeWeights& weights,
                                      std::uint64_t seed, ExecPolicy policy = ExecPolicy::Parallel) const;

    // Frobenius norm of A - sigmoid(Z Z^T) with Z = mu and A the symmetric 0/1 adjacency.
    double adjacency_l2(const GraphInput& graph) const;

    // Scalar anomaly score used for ranking and detection.
    std::vector<double> anomaly_scores(std::span<const GraphInput> graphs, ScoreMode mode,
                                       const CompositeWeights& weights, std::uint64_t seed,
                                       ExecPolicy policy = ExecPolicy::Parallel) const;

    std::size_t bucket_of(std::uint16_t can_id) const { return can_id % config_.id_buckets; }

    nn::Checkpoint to_checkpoint() const;
    static VgaeModel from_checkpoint(const nn::Checkpoint& ckpt);

private:
    void require_trained() const;

    VgaeConfig config_;
    nn::ParamSet params_;
    bool trained_ = false;
};

// Observed pairs plus min(|positives|, |non-edges|) non-edges sampled without replacement.
std::vector<NodePair> sample_negatives(const GraphInput& graph, nn::Rng& rng);

// Mean BCE of sigmoid(z_i . z_j) against 1 for positives and 0 for negatives.
nn::Var pair_bce(nn::Var z, const std::vector<NodePair>& positives, const std::vector<NodePair>& negatives);

// Indices of `graphs` by descending score; equal scores keep ascending window order.
// Every graph must be labeled normal.
std::vector<std::size_t> reconstruction_rank(std::span<const GraphInput> graphs, std::span<const double> scores);

struct VgaeTrainOptions {
    std::size_t epochs = 120;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    ExecPolicy policy = ExecPolicy::Parallel;
    bool verbose = false;
};

// Extra trainable tensors and a loss term added to the ELBO of each item, used by
// latent-space distillation.
struct LatentGuidance {
    nn::ParamSet params;
    std::function<nn::Var(std::span<const nn::Var> bound, const LatentState& latent, std::size_t item)> term;
};

struct TrainedVgae {
    VgaeModel model;
    std::vector<double> epoch_loss;
    nn::ParamSet guidance_params;
    double seconds = 0.0;
};

// Trains on normal graphs only; an attack-labeled input is a data error.
TrainedVgae train_vgae(std::span<const GraphInput> normals, const VgaeConfig& config, const VgaeTrainOptions& options,
                       const LatentGuidance* guidance = nullptr);

}  // namespace canids
