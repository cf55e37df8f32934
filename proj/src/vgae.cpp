#include "canids/vgae.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "canids/error.hpp"
#include "canids/io.hpp"
#include "canids/nn/adam.hpp"
#include "canids/nn/loss.hpp"
#include "canids/nn/ops.hpp"
#include "canids/train.hpp"

namespace canids {

namespace {

nn::Matrix glorot(std::size_t rows, std::size_t cols, nn::Rng& rng) {
    const double bound = nn::glorot_bound(rows, cols);
    nn::Matrix m(rows, cols);
    for (auto& v : m.values()) v = rng.uniform(-bound, bound);
    return m;
}

constexpr std::size_t kParamsPerLayer = 4;

// Offsets of the dense tensors that follow the attention layers.
enum Dense : std::size_t {
    kMuW, kMuB, kSigmaW, kSigmaB,
    kFeatW1, kFeatB1, kFeatW2, kFeatB2,
    kIdW1, kIdB1, kIdW2, kIdB2,
    kDenseCount
};

nn::Var linear(nn::Var x, nn::Var w, nn::Var b) { return nn::add(nn::matmul(x, w), b); }

}  // namespace

VgaeConfig VgaeConfig::teacher() { return {3, 4, 32, 16, 256, 0.2, Role::Teacher}; }
VgaeConfig VgaeConfig::student() { return {2, 2, 16, 8, 256, 0.2, Role::Student}; }

void VgaeConfig::validate() const {
    if (num_layers == 0 || attn_heads == 0 || hidden_channels == 0)
        throw ConfigError("VGAE layers, heads and hidden channels must all be positive");
    if (latent_dim == 0) throw ConfigError("VGAE latent_dim must be > 0");
    if (id_buckets < 2) throw ConfigError("VGAE id_buckets must be >= 2");
    if (!(leaky_slope >= 0.0)) throw ConfigError("LeakyReLU slope must be >= 0");
}

std::size_t VgaeConfig::encoder_width() const {
    return num_layers > 1 ? attn_heads * hidden_channels : kNodeFeatureDim;
}

void CompositeWeights::validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0))
        throw ConfigError("composite error weights must all be >= 0");
}

double combine(const ErrorTerms& t, const CompositeWeights& w) {
    return w.alpha * t.node + w.beta * t.neighbor + w.gamma * t.can_id;
}

VgaeModel::VgaeModel(const VgaeConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    nn::Rng rng(nn::Rng::derive(seed, 0x7a3));
    const std::size_t hf = config_.attn_heads * config_.hidden_channels;
    for (std::size_t l = 0; l + 1 < config_.num_layers; ++l)
        add_gat_layer_params(params_, "vgae.enc.l" + std::to_string(l), l == 0 ? kNodeFeatureDim : hf,
                             config_.attn_heads, config_.hidden_channels, HeadAgg::Concat, rng);
    const std::size_t enc = config_.encoder_width();
    const std::size_t lat = config_.latent_dim;
    const std::size_t hid = config_.hidden_channels;
    params_.add("vgae.mu.weight", glorot(enc, lat, rng));
    params_.add("vgae.mu.bias", nn::Matrix(1, lat));
    params_.add("vgae.log_sigma.weight", glorot(enc, lat, rng));
    params_.add("vgae.log_sigma.bias", nn::Matrix(1, lat));
    params_.add("vgae.feat.w1", glorot(lat, hid, rng));
    params_.add("vgae.feat.b1", nn::Matrix(1, hid));
    params_.add("vgae.feat.w2", glorot(hid, kNodeFeatureDim, rng));
    params_.add("vgae.feat.b2", nn::Matrix(1, kNodeFeatureDim));
    params_.add("vgae.id.w1", glorot(lat, hid, rng));
    params_.add("vgae.id.b1", nn::Matrix(1, hid));
    params_.add("vgae.id.w2", glorot(hid, config_.id_buckets, rng));
    params_.add("vgae.id.b2", nn::Matrix(1, config_.id_buckets));
}

LatentState VgaeModel::encode(std::span<const nn::Var> bound, const GraphInput& graph, nn::Rng* noise) const {
    using namespace nn;
    if (bound.size() < params_.size()) throw DimensionError("VgaeModel::encode: parameter binding size mismatch");
    if (graph.num_nodes() == 0) throw DataError("VGAE encode on an empty graph");
    if (graph.features.cols() != kNodeFeatureDim)
        throw DimensionError("VGAE expects " + std::to_string(kNodeFeatureDim) + " node features, graph has " +
                             std::to_string(graph.features.cols()));
    Tape& tape = *bound[0].tape();
    Var h = tape.constant(graph.features);
    const std::size_t layers = config_.num_layers - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t b = l * kParamsPerLayer;
        GatLayerParams p{bound[b], bound[b + 1], bound[b + 2], bound[b + 3]};
        h = gat_layer(h, graph, p, config_.attn_heads, HeadAgg::Concat, config_.leaky_slope).out;
    }
    const std::size_t d = layers * kParamsPerLayer;
    LatentState s;
    s.mu = linear(h, bound[d + kMuW], bound[d + kMuB]);
    s.log_sigma = clamp(linear(h, bound[d + kSigmaW], bound[d + kSigmaB]), -kLogSigmaLimit, kLogSigmaLimit);
    if (noise == nullptr) {
        s.z = s.mu;
    } else {
        Matrix eps(graph.num_nodes(), config_.latent_dim);
        for (auto& v : eps.values()) v = noise->normal();
        s.z = add(s.mu, mul(exp(s.log_sigma), tape.constant(std::move(eps))));
    }
    return s;
}

nn::Var VgaeModel::decode_adjacency(nn::Var z) {
    if (z.rows() == 0) throw DimensionError("decode_adjacency: empty latent matrix");
    return nn::sigmoid(nn::matmul(z, nn::transpose(z)));
}

DecodedFeatures VgaeModel::decode_features(std::span<const nn::Var> bound, nn::Var z) const {
    using namespace nn;
    if (bound.size() < params_.size()) throw DimensionError("VgaeModel::decode_features: parameter binding size mismatch");
    const std::size_t d = (config_.num_layers - 1) * kParamsPerLayer;
    DecodedFeatures out;
    Var fh = elu(linear(z, bound[d + kFeatW1], bound[d + kFeatB1]));
    out.features = sigmoid(linear(fh, bound[d + kFeatW2], bound[d + kFeatB2]));
    Var ih = elu(linear(z, bound[d + kIdW1], bound[d + kIdB1]));
    out.id_logits = linear(ih, bound[d + kIdW2], bound[d + kIdB2]);
    return out;
}

std::vector<NodePair> sample_negatives(const GraphInput& graph, nn::Rng& rng) {
    const std::size_t k = std::min(graph.positives.size(), graph.negatives.size());
    std::vector<std::size_t> idx(graph.negatives.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<NodePair> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
        out.push_back(graph.negatives[idx[i]]);
    }
    return out;
}

nn::Var pair_bce(nn::Var z, const std::vector<NodePair>& positives, const std::vector<NodePair>& negatives) {
    using namespace nn;
    const std::size_t total = positives.size() + negatives.size();
    if (total == 0) return z.tape()->constant(Matrix(1, 1));
    Index left, right;
    Matrix target(total, 1);
    left.reserve(total);
    right.reserve(total);
    for (const auto& [i, j] : positives) {
        target[left.size()] = 1.0;
        left.push_back(i);
        right.push_back(j);
    }
    for (const auto& [i, j] : negatives) {
        left.push_back(i);
        right.push_back(j);
    }
    Var logits = sum_cols(mul(gather_rows(z, left), gather_rows(z, right)));
    return bce_logits(logits, target);
}

namespace {

nn::Index id_targets(const GraphInput& graph, std::size_t buckets) {
    nn::Index out;
    out.reserve(graph.node_ids.size());
    for (auto id : graph.node_ids) out.push_back(static_cast<std::uint32_t>(id % buckets));
    return out;
}

}  // namespace

nn::Var VgaeModel::elbo_loss(std::span<const nn::Var> bound, const GraphInput& graph, nn::Rng& rng,
                             LatentState* latent_out) const {
    using namespace nn;
    LatentState lat = encode(bound, graph, &rng);
    const auto negatives = sample_negatives(graph, rng);
    auto dec = decode_features(bound, lat.z);
    Var loss = pair_bce(lat.z, graph.positives, negatives);
    loss = add(loss, mse(dec.features, graph.features));
    loss = add(loss, cross_entropy(dec.id_logits, id_targets(graph, config_.id_buckets)));
    Var kl = kl_gaussian_standard(lat.mu, lat.log_sigma);
    loss = add(loss, scale(kl, 1.0 / static_cast<double>(graph.num_nodes())));
    if (latent_out) *latent_out = lat;
    return loss;
}

void VgaeModel::require_trained() const {
    if (!trained_) throw StateError("VGAE has no trained parameters; train it or load a checkpoint first");
}

ErrorTerms VgaeModel::score(const GraphInput& graph, const CompositeWeights& weights, std::uint64_t seed) const {
    require_trained();
    weights.validate();
    nn::Tape tape;
    auto bound = tape.bind(params_, nullptr);
    LatentState lat = encode(bound, graph, nullptr);
    auto dec = decode_features(bound, lat.z);
    nn::Rng rng(nn::Rng::derive(seed, graph.window_start_index));
    const auto negatives = sample_negatives(graph, rng);
    ErrorTerms t;
    t.node = nn::mse(dec.features, graph.features).item();
    t.neighbor = pair_bce(lat.z, graph.positives, negatives).item();
    t.can_id = nn::cross_entropy(dec.id_logits, id_targets(graph, config_.id_buckets)).item();
    t.composite = combine(t, weights);
    return t;
}

std::vector<ErrorTerms> VgaeModel::score_all(std::span<const GraphInput> graphs, const CompositeWeights& weights,
                                             std::uint64_t seed, ExecPolicy policy) const {
    require_trained();
    std::vector<ErrorTerms> out(graphs.size());
    parallel_for(graphs.size(), policy, [&](std::size_t i) { out[i] = score(graphs[i], weights, seed); });
    return out;
}

double VgaeModel::adjacency_l2(const GraphInput& graph) const {
    require_trained();
    nn::Tape tape;
    auto bound = tape.bind(params_, nullptr);
    const nn::Matrix& a_hat = decode_adjacency(encode(bound, graph, nullptr).mu).value();
    const std::size_t n = graph.num_nodes();
    nn::Matrix a(n, n);
    for (const auto& [i, j] : graph.positives) {
        a(i, j) = 1.0;
        a(j, i) = 1.0;
    }
    double sq = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - a_hat[k];
        sq += d * d;
    }
    return std::sqrt(sq);
}

std::vector<double> VgaeModel::anomaly_scores(std::span<const GraphInput> graphs, ScoreMode mode,
                                              const CompositeWeights& weights, std::uint64_t seed,
                                              ExecPolicy policy) const {
    require_trained();
    std::vector<double> out(graphs.size());
    if (mode == ScoreMode::AdjacencyL2) {
        parallel_for(graphs.size(), policy, [&](std::size_t i) { out[i] = adjacency_l2(graphs[i]); });
    } else {
        const auto terms = score_all(graphs, weights, seed, policy);
        for (std::size_t i = 0; i < terms.size(); ++i) out[i] = terms[i].composite;
    }
    return out;
}

nn::Checkpoint VgaeModel::to_checkpoint() const {
    nn::Checkpoint ckpt;
    ckpt.kind = "vgae";
    ckpt.config = {{"num_layers", std::to_string(config_.num_layers)},
                   {"attn_heads", std::to_string(config_.attn_heads)},
                   {"hidden_channels", std::to_string(config_.hidden_channels)},
                   {"latent_dim", std::to_string(config_.latent_dim)},
                   {"id_buckets", std::to_string(config_.id_buckets)},
                   {"leaky_slope", format_double(config_.leaky_slope)},
                   {"role", to_string(config_.role)},
                   {"trained", trained_ ? "1" : "0"}};
    ckpt.params = params_;
    return ckpt;
}

VgaeModel VgaeModel::from_checkpoint(const nn::Checkpoint& ckpt) {
    if (ckpt.kind != "vgae") throw DataError("checkpoint kind '" + ckpt.kind + "' is not a VGAE");
    auto get = [&](const char* key) {
        auto it = ckpt.config.find(key);
        if (it == ckpt.config.end()) throw DataError(std::string("VGAE checkpoint lacks config key '") + key + "'");
        return it->second;
    };
    VgaeConfig c;
    c.num_layers = std::stoul(get("num_layers"));
    c.attn_heads = std::stoul(get("attn_heads"));
    c.hidden_channels = std::stoul(get("hidden_channels"));
    c.latent_dim = std::stoul(get("latent_dim"));
    c.id_buckets = std::stoul(get("id_buckets"));
    c.leaky_slope = parse_double(get("leaky_slope"));
    c.role = role_from_string(get("role"));
    VgaeModel model(c, 0);
    nn::assign_params(model.params_, ckpt.params);
    model.trained_ = get("trained") == "1";
    return model;
}

std::vector<std::size_t> reconstruction_rank(std::span<const GraphInput> graphs, std::span<const double> scores) {
    if (graphs.empty()) throw DataError("reconstruction_rank: no graphs to rank");
    if (graphs.size() != scores.size())
        throw DimensionError("reconstruction_rank: " + std::to_string(graphs.size()) + " graphs but " +
                             std::to_string(scores.size()) + " scores");
    for (const auto& g : graphs)
        if (g.label != 0)
            throw DataError("reconstruction_rank: window " + std::to_string(g.window_start_index) +
                            " is attack-labeled; only normal windows are ranked");
    std::vector<std::size_t> order(graphs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return graphs[a].window_start_index < graphs[b].window_start_index;
    });
    return order;
}

TrainedVgae train_vgae(std::span<const GraphInput> normals, const VgaeConfig& config, const VgaeTrainOptions& options,
                       const LatentGuidance* guidance) {
    const auto started = std::chrono::steady_clock::now();
    if (normals.empty()) throw DataError("VGAE training set is empty");
    for (const auto& g : normals)
        if (g.label != 0)
            throw DataError("VGAE trains on normal windows only; window " + std::to_string(g.window_start_index) +
                            " is attack-labeled");
    if (options.batch_size == 0 || options.epochs == 0) throw ConfigError("epochs and batch size must be positive");

    TrainedVgae result{VgaeModel(config, options.seed), {}, {}, 0.0};
    auto& model = result.model;
    const std::size_t own = model.params().size();
    nn::ParamSet combined = model.params();
    if (guidance)
        for (const auto& p : guidance->params) combined.add(p.name, p.value);

    nn::Adam adam(combined, {options.lr});
    BatchAccumulator accumulator(combined);
    nn::GradBuffer grads(combined);
    nn::Rng shuffle_rng(nn::Rng::derive(options.seed, 0x5e));

    const ItemLoss item_loss = [&](nn::Tape&, std::span<const nn::Var> bound, std::size_t item, nn::Rng& rng) {
        LatentState lat;
        nn::Var l = model.elbo_loss(bound, normals[item], rng, &lat);
        if (guidance) l = nn::add(l, guidance->term(bound.subspan(own), lat, item));
        return l;
    };

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        const auto order = shuffled_indices(normals.size(), shuffle_rng);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < order.size(); b += options.batch_size) {
            const std::size_t e = std::min(order.size(), b + options.batch_size);
            std::span<const std::size_t> items(order.data() + b, e - b);
            const double l = accumulator.run(combined, items, item_loss,
                                             nn::Rng::derive(options.seed, (epoch << 32) | b), grads, options.policy);
            epoch_loss += l * static_cast<double>(items.size());
            adam.step(combined, grads);
        }
        epoch_loss /= static_cast<double>(normals.size());
        result.epoch_loss.push_back(epoch_loss);
        if (options.verbose)
            std::fprintf(stderr, "[vgae %s] epoch %zu loss %.6f\n", to_string(config.role).c_str(), epoch + 1,
                         epoch_loss);
    }
    for (std::size_t i = 0; i < own; ++i) model.params()[i].value = combined[i].value;
    for (std::size_t i = own; i < combined.size(); ++i) result.guidance_params.add(combined[i].name, combined[i].value);
    model.mark_trained();
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

}  // namespace canids
