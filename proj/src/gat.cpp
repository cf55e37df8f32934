#include "canids/gat.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <cstdio>

#include "canids/error.hpp"
#include "canids/io.hpp"
#include "canids/metrics.hpp"
#include "canids/nn/adam.hpp"
#include "canids/nn/loss.hpp"
#include "canids/nn/ops.hpp"
#include "canids/train.hpp"

namespace canids {

namespace {

nn::Matrix glorot(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out, nn::Rng& rng) {
    const double bound = nn::glorot_bound(fan_in, fan_out);
    nn::Matrix m(rows, cols);
    for (auto& v : m.values()) v = rng.uniform(-bound, bound);
    return m;
}

constexpr std::size_t kParamsPerLayer = 4;

}  // namespace

std::string to_string(Role role) { return role == Role::Teacher ? "teacher" : "student"; }

Role role_from_string(const std::string& name) {
    if (name == "teacher") return Role::Teacher;
    if (name == "student") return Role::Student;
    throw ConfigError("unknown role '" + name + "' (expected teacher or student)");
}

GatLayerOutput gat_layer(nn::Var x, const GraphInput& graph, const GatLayerParams& p, std::size_t heads,
                         HeadAgg agg, double slope) {
    using namespace nn;
    Tape& tape = *x.tape();
    const std::size_t n = graph.num_nodes();
    if (x.rows() != n)
        throw DimensionError("gat_layer: feature rows " + std::to_string(x.rows()) + " != nodes " + std::to_string(n));
    if (x.cols() != p.weight.rows())
        throw DimensionError("gat_layer: input width " + std::to_string(x.cols()) + " does not match weight " +
                             p.weight.value().shape_string());

    Var wh = matmul(x, p.weight);                       // n x HF
    Var score_src = block_sum(mul(wh, p.att_src), heads);  // n x H
    Var score_dst = block_sum(mul(wh, p.att_dst), heads);
    Var logits = add(gather_rows(score_dst, graph.dst), gather_rows(score_src, graph.src));  // m x H
    logits = add(leaky_relu(logits, slope), tape.constant(graph.log_weight));
    Var alpha = segment_softmax(logits, graph.dst, n);
    Var messages = block_scale(gather_rows(wh, graph.src), alpha);
    Var aggregated = scatter_add_rows(messages, graph.dst, n);  // n x HF
    if (agg == HeadAgg::Average) aggregated = block_mean(aggregated, heads);
    return {elu(add(aggregated, p.bias)), alpha};
}

std::size_t add_gat_layer_params(nn::ParamSet& params, const std::string& prefix, std::size_t in_width,
                                 std::size_t heads, std::size_t per_head, HeadAgg agg, nn::Rng& rng) {
    const std::size_t hf = heads * per_head;
    const std::size_t out = agg == HeadAgg::Concat ? hf : per_head;
    const std::size_t first = params.add(prefix + ".weight", glorot(in_width, hf, in_width, per_head, rng));
    params.add(prefix + ".att_src", glorot(1, hf, per_head, 1, rng));
    params.add(prefix + ".att_dst", glorot(1, hf, per_head, 1, rng));
    params.add(prefix + ".bias", nn::Matrix(1, out));
    return first;
}

GatConfig GatConfig::teacher() { return {5, 8, 32, 0.2, Role::Teacher, kNodeFeatureDim}; }
GatConfig GatConfig::student() { return {2, 4, 16, 0.2, Role::Student, kNodeFeatureDim}; }

void GatConfig::validate() const {
    if (num_layers == 0 || attn_heads == 0 || hidden_channels == 0 || in_features == 0)
        throw ConfigError("GAT layers, heads, hidden channels and input width must all be positive");
    if (!(leaky_slope >= 0.0)) throw ConfigError("LeakyReLU slope must be >= 0");
}

HeadAgg GatConfig::layer_agg(std::size_t layer) const {
    return layer + 1 == num_layers ? HeadAgg::Average : HeadAgg::Concat;
}

std::size_t GatConfig::layer_out_width(std::size_t layer) const {
    return layer_agg(layer) == HeadAgg::Concat ? attn_heads * hidden_channels : hidden_channels;
}

std::size_t GatConfig::layer_in_width(std::size_t layer) const {
    return layer == 0 ? in_features : layer_out_width(layer - 1);
}

std::size_t GatConfig::embedding_width() const {
    std::size_t w = 0;
    for (std::size_t l = 0; l < num_layers; ++l) w += layer_out_width(l);
    return w;
}

std::size_t count_params(const GatConfig& c) {
    c.validate();
    std::size_t total = 0;
    const std::size_t hf = c.attn_heads * c.hidden_channels;
    for (std::size_t l = 0; l < c.num_layers; ++l) total += c.layer_in_width(l) * hf + 2 * hf + c.layer_out_width(l);
    return total + c.embedding_width() * 2 + 2;
}

GatModel::GatModel(const GatConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    nn::Rng rng(nn::Rng::derive(seed, 0x6a7));
    for (std::size_t l = 0; l < config_.num_layers; ++l)
        add_gat_layer_params(params_, "gat.l" + std::to_string(l), config_.layer_in_width(l), config_.attn_heads,
                             config_.hidden_channels, config_.layer_agg(l), rng);
    const std::size_t emb = config_.embedding_width();
    params_.add("gat.head.weight", glorot(emb, 2, emb, 2, rng));
    params_.add("gat.head.bias", nn::Matrix(1, 2));
}

GatForward GatModel::forward(std::span<const nn::Var> bound, const GraphInput& graph) const {
    using namespace nn;
    if (bound.size() != params_.size()) throw DimensionError("GatModel::forward: parameter binding size mismatch");
    if (graph.num_nodes() == 0) throw DataError("GAT forward on an empty graph");
    Tape& tape = *bound[0].tape();
    if (graph.features.cols() != config_.in_features)
        throw DimensionError("GAT expects " + std::to_string(config_.in_features) + " node features, graph has " +
                             std::to_string(graph.features.cols()));
    GatForward out;
    Var h = tape.constant(graph.features);
    std::vector<Var> layers;
    for (std::size_t l = 0; l < config_.num_layers; ++l) {
        const std::size_t base = l * kParamsPerLayer;
        GatLayerParams p{bound[base], bound[base + 1], bound[base + 2], bound[base + 3]};
        auto res = gat_layer(h, graph, p, config_.attn_heads, config_.layer_agg(l), config_.leaky_slope);
        h = res.out;
        layers.push_back(h);
        out.attention.push_back(res.attention);
    }
    Var jk = layers.size() == 1 ? layers[0] : concat_cols(layers);
    out.embedding = mean_rows(jk);
    const std::size_t head = config_.num_layers * kParamsPerLayer;
    out.logits = add(matmul(out.embedding, bound[head]), bound[head + 1]);
    out.probs = softmax(out.logits);
    return out;
}

GatPrediction GatModel::predict(const GraphInput& graph) const {
    nn::Tape tape;
    auto bound = tape.bind(params_, nullptr);
    auto fwd = forward(bound, graph);
    GatPrediction p;
    p.probability = fwd.probs.value()[1];
    p.logits = {fwd.logits.value()[0], fwd.logits.value()[1]};
    const auto emb = fwd.embedding.value().values();
    p.embedding.assign(emb.begin(), emb.end());
    return p;
}

std::vector<GatPrediction> GatModel::predict_all(std::span<const GraphInput> graphs, ExecPolicy policy) const {
    std::vector<GatPrediction> out(graphs.size());
    parallel_for(graphs.size(), policy, [&](std::size_t i) { out[i] = predict(graphs[i]); });
    return out;
}

nn::Checkpoint GatModel::to_checkpoint() const {
    nn::Checkpoint ckpt;
    ckpt.kind = "gat";
    ckpt.config = {{"num_layers", std::to_string(config_.num_layers)},
                   {"attn_heads", std::to_string(config_.attn_heads)},
                   {"hidden_channels", std::to_string(config_.hidden_channels)},
                   {"leaky_slope", format_double(config_.leaky_slope)},
                   {"role", to_string(config_.role)},
                   {"in_features", std::to_string(config_.in_features)}};
    ckpt.params = params_;
    return ckpt;
}

GatModel GatModel::from_checkpoint(const nn::Checkpoint& ckpt) {
    if (ckpt.kind != "gat") throw DataError("checkpoint kind '" + ckpt.kind + "' is not a GAT classifier");
    auto get = [&](const char* key) {
        auto it = ckpt.config.find(key);
        if (it == ckpt.config.end()) throw DataError(std::string("GAT checkpoint lacks config key '") + key + "'");
        return it->second;
    };
    GatConfig c;
    c.num_layers = std::stoul(get("num_layers"));
    c.attn_heads = std::stoul(get("attn_heads"));
    c.hidden_channels = std::stoul(get("hidden_channels"));
    c.leaky_slope = parse_double(get("leaky_slope"));
    c.role = role_from_string(get("role"));
    c.in_features = std::stoul(get("in_features"));
    GatModel model(c, 0);
    nn::assign_params(model.params_, ckpt.params);
    return model;
}

TrainedGat train_gat(std::span<const GraphInput> train, std::span<const GraphInput> validation,
                     const GatConfig& config, const GatTrainOptions& options, const ClassifierLoss& loss) {
    const auto started = std::chrono::steady_clock::now();
    std::size_t positives = 0;
    for (const auto& g : train) positives += g.label != 0;
    if (positives == 0) throw DataError("GAT training set has no attack-labeled graphs (class 1 missing)");
    if (positives == train.size()) throw DataError("GAT training set has no normal graphs (class 0 missing)");
    if (options.batch_size == 0 || options.epochs == 0) throw ConfigError("epochs and batch size must be positive");

    TrainedGat result{GatModel(config, options.seed), {}};
    auto& model = result.model;
    nn::Adam adam(model.params(), {options.lr});
    BatchAccumulator accumulator(model.params());
    nn::GradBuffer grads(model.params());
    nn::Rng shuffle_rng(nn::Rng::derive(options.seed, 0x5f));

    const ItemLoss item_loss = [&](nn::Tape&, std::span<const nn::Var> bound, std::size_t item, nn::Rng&) {
        auto fwd = model.forward(bound, train[item]);
        if (loss) return loss(fwd.logits, item);
        return nn::cross_entropy(fwd.logits, {static_cast<std::uint32_t>(train[item].label)});
    };

    nn::ParamSet best = model.params();
    double best_f1 = -1.0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        const auto order = shuffled_indices(train.size(), shuffle_rng);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < order.size(); b += options.batch_size) {
            const std::size_t e = std::min(order.size(), b + options.batch_size);
            std::span<const std::size_t> items(order.data() + b, e - b);
            const double l = accumulator.run(model.params(), items, item_loss,
                                             nn::Rng::derive(options.seed, (epoch << 32) | b), grads, options.policy);
            epoch_loss += l * static_cast<double>(items.size());
            adam.step(model.params(), grads);
        }
        epoch_loss /= static_cast<double>(train.size());
        result.log.epoch_loss.push_back(epoch_loss);

        if (!validation.empty()) {
            const auto preds = model.predict_all(validation, options.policy);
            std::vector<int> predicted, truth;
            double val_loss = 0.0;
            for (std::size_t i = 0; i < preds.size(); ++i) {
                const double p = preds[i].probability;
                predicted.push_back(p >= options.threshold ? 1 : 0);
                truth.push_back(validation[i].label);
                val_loss -= std::log(std::clamp(validation[i].label ? p : 1.0 - p, nn::kProbEps, 1.0));
            }
            val_loss /= static_cast<double>(preds.size());
            const double f1 = compute_metrics(predicted, truth).f1;
            result.log.val_f1.push_back(f1);
            result.log.val_loss.push_back(val_loss);
            if (f1 > best_f1 || (f1 == best_f1 && val_loss < best_val_loss)) {
                best_f1 = f1;
                best_val_loss = val_loss;
                best = model.params();
                result.log.best_epoch = epoch;
                since_best = 0;
            } else if (++since_best >= options.patience) {
                break;
            }
        } else {
            result.log.best_epoch = epoch;
        }
        if (options.verbose)
            std::fprintf(stderr, "[gat %s] epoch %zu loss %.6f%s\n", to_string(config.role).c_str(), epoch + 1,
                         epoch_loss,
                         result.log.val_f1.empty()
                             ? ""
                             : (" val_f1 " + std::to_string(result.log.val_f1.back())).c_str());
    }
    if (!validation.empty()) nn::assign_params(model.params(), best);
    result.log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

}  // namespace canids
