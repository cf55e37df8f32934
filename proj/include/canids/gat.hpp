#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "canids/graph_input.hpp"
#include "canids/nn/checkpoint.hpp"
#include "canids/nn/param.hpp"
#include "canids/nn/rng.hpp"
#include "canids/nn/tape.hpp"
#include "canids/parallel.hpp"

namespace canids {

enum class Role { Teacher, Student };
enum class HeadAgg { Concat, Average };

std::string to_string(Role role);
Role role_from_string(const std::string& name);

// ---------------------------------------------------------------------------
// Attention convolution shared by the classifier and the autoencoder encoder.

struct GatLayerParams {
    nn::Var weight;   // d_in x (heads * per_head)
    nn::Var att_src;  // 1 x (heads * per_head)
    nn::Var att_dst;  // 1 x (heads * per_head)
    nn::Var bias;     // 1 x out_width
};

struct GatLayerOutput {
    nn::Var out;        // n x out_width, ELU-activated
    nn::Var attention;  // m x heads, normalized over each destination's in-edges
};

// One multi-head attention layer. For every edge u -> v and head h the logit is
// LeakyReLU(a_dst . W h_v + a_src . W h_u) + log(weight_uv); a softmax over the
// in-edges of v gives the coefficients, and v aggregates the coefficient-weighted
// W h_u. Heads are concatenated or averaged, a bias is added, and ELU applied.
GatLayerOutput gat_layer(nn::Var x, const GraphInput& graph, const GatLayerParams& params, std::size_t heads,
                         HeadAgg agg, double slope);

// Registers the four tensors of one attention layer under `prefix` and returns the
// index of the first one.
std::size_t add_gat_layer_params(nn::ParamSet& params, const std::string& prefix, std::size_t in_width,
                                 std::size_t heads, std::size_t per_head, HeadAgg agg, nn::Rng& rng);

// ---------------------------------------------------------------------------
// Graph classifier: L attention layers, jumping-knowledge concatenation of every
// layer's node states, mean pooling, linear 2-way head.

struct GatConfig {
    std::size_t num_layers = 5;
    std::size_t attn_heads = 8;
    std::size_t hidden_channels = 32;
    double leaky_slope = 0.2;
    Role role = Role::Teacher;
    std::size_t in_features = kNodeFeatureDim;

    static GatConfig teacher();
    static GatConfig student();

    void validate() const;
    HeadAgg layer_agg(std::size_t layer) const;
    std::size_t layer_in_width(std::size_t layer) const;
    std::size_t layer_out_width(std::size_t layer) const;
    std::size_t embedding_width() const;
};

// Exact number of trainable scalars of the architecture.
std::size_t count_params(const GatConfig& config);

struct GatForward {
    nn::Var logits;     // 1 x 2
    nn::Var probs;      // 1 x 2 softmax; column 1 is the attack probability
    nn::Var embedding;  // 1 x embedding_width, mean-pooled jumping-knowledge state
    std::vector<nn::Var> attention;  // per layer, m x heads
};

struct GatPrediction {
    double probability = 0.0;  // attack probability
    std::array<double, 2> logits{};
    std::vector<double> embedding;
};

class GatModel {
public:
    GatModel(const GatConfig& config, std::uint64_t seed);

    const GatConfig& config() const { return config_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

    GatForward forward(std::span<const nn::Var> bound, const GraphInput& graph) const;
    GatPrediction predict(const GraphInput& graph) const;
    std::vector<GatPrediction> predict_all(std::span<const GraphInput> graphs,
                                           ExecPolicy policy = ExecPolicy::Parallel) const;

    nn::Checkpoint to_checkpoint() const;
    static GatModel from_checkpoint(const nn::Checkpoint& ckpt);

private:
    GatConfig config_;
    nn::ParamSet params_;
};

// ---------------------------------------------------------------------------

struct GatTrainOptions {
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    std::size_t patience = 10;  // epochs without validation-F1 improvement before stopping
    std::uint64_t seed = 0;
    double threshold = 0.5;
    ExecPolicy policy = ExecPolicy::Parallel;
    bool verbose = false;
};

struct TrainingLog {
    std::vector<double> epoch_loss;
    std::vector<double> val_f1;    // empty without a validation set
    std::vector<double> val_loss;  // mean cross-entropy on the validation set
    std::size_t best_epoch = 0;
    double seconds = 0.0;
};

// Replaces the default cross-entropy objective; receives the student's logits for one
// training item (index into the training span) and its tape.
using ClassifierLoss = std::function<nn::Var(nn::Var logits, std::size_t item)>;

struct TrainedGat {
    GatModel model;
    TrainingLog log;
};

// Supervised training with Adam. Binary cross-entropy on the 2-way softmax, averaged
// over the graphs of each mini-batch. With a validation set, keeps the parameters of
// the epoch with the best validation F1 (equal F1 with lower validation cross-entropy
// also counts as better) and stops after `patience` epochs without improvement.
TrainedGat train_gat(std::span<const GraphInput> train, std::span<const GraphInput> validation,
                     const GatConfig& config, const GatTrainOptions& options, const ClassifierLoss& loss = {});

}  // namespace canids
