#include "canids/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "canids/error.hpp"
#include "canids/io.hpp"

namespace canids {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void progress(bool verbose, const std::string& line) {
    if (verbose) std::fprintf(stderr, "[pipeline] %s\n", line.c_str());
}

}  // namespace

UndersampleResult undersample(std::span<const GraphInput> ranked_normals, std::span<const GraphInput> attacks,
                              double ratio) {
    if (!(ratio > 0.0) || !std::isfinite(ratio)) throw ConfigError("undersampling ratio must be a positive number");
    if (attacks.empty())
        throw DataError("undersampling needs at least one attack graph; skip undersampling for attack-free data");
    UndersampleResult r;
    const auto wanted = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(attacks.size())));
    r.normal_count = std::min(wanted, ranked_normals.size());
    r.attack_count = attacks.size();
    r.requested_ratio = ratio;
    r.achieved_ratio = static_cast<double>(r.normal_count) / static_cast<double>(r.attack_count);
    r.graphs.reserve(r.normal_count + r.attack_count);
    for (std::size_t i = 0; i < r.normal_count; ++i) {
        r.graphs.push_back(ranked_normals[i]);
        r.normal_windows.push_back(ranked_normals[i].window_start_index);
    }
    r.graphs.insert(r.graphs.end(), attacks.begin(), attacks.end());
    return r;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw DataError("quantile of an empty set");
    if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile level must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    const double h = static_cast<double>(values.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

double VgaeCalibration::operator()(double score) const {
    if (degenerate) return 0.0;
    return std::clamp((score - q50) / (q995 - q50), 0.0, 1.0);
}

VgaeCalibration calibrate_vgae(std::span<const double> normal_scores) {
    if (normal_scores.size() < kMinCalibrationScores)
        throw DataError("VGAE calibration needs at least " + std::to_string(kMinCalibrationScores) +
                        " validation normal scores, got " + std::to_string(normal_scores.size()));
    std::vector<double> v(normal_scores.begin(), normal_scores.end());
    VgaeCalibration c;
    c.q50 = quantile(v, 0.5);
    c.q995 = quantile(v, 0.995);
    if (!(c.q995 > c.q50)) {
        c.degenerate = true;
        c.warning = "validation normal scores are degenerate (q99.5 == q50); VGAE probability fixed at 0";
    }
    return c;
}

void FusionWeights::validate() const {
    if (!(anomaly >= 0.0) || !(gat >= 0.0)) throw ConfigError("fusion weights must be >= 0");
    if (std::abs(anomaly + gat - 1.0) > 1e-9)
        throw ConfigError("fusion weights must sum to 1 (got " + format_double(anomaly) + " + " + format_double(gat) +
                          ")");
}

double fuse(double vgae_prob, double gat_prob, const FusionWeights& w) {
    w.validate();
    if (!(vgae_prob >= 0.0 && vgae_prob <= 1.0) || !(gat_prob >= 0.0 && gat_prob <= 1.0))
        throw DataError("fusion inputs must be probabilities in [0, 1]");
    return w.anomaly * vgae_prob + w.gat * gat_prob;
}

Metrics evaluate(std::span<const ScoredWindow> scored, double threshold, ProbSource source) {
    if (scored.empty()) throw DataError("nothing to evaluate: no scored windows");
    std::vector<int> predicted, truth;
    predicted.reserve(scored.size());
    truth.reserve(scored.size());
    for (const auto& s : scored) {
        const double p = source == ProbSource::Fused ? s.fused_prob : source == ProbSource::Gat ? s.gat_prob : s.vgae_prob;
        predicted.push_back(p >= threshold ? 1 : 0);
        truth.push_back(s.truth);
    }
    return compute_metrics(predicted, truth);
}

StreamSplit split_stream(std::span<const GraphInput> graphs, double validation_fraction) {
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
        throw ConfigError("validation fraction must lie in [0, 1)");
    const auto n_train = static_cast<std::size_t>(
        std::llround(static_cast<double>(graphs.size()) * (1.0 - validation_fraction)));
    StreamSplit s;
    s.train.assign(graphs.begin(), graphs.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.validation.assign(graphs.begin() + static_cast<std::ptrdiff_t>(n_train), graphs.end());
    return s;
}

void PipelineConfig::validate() const {
    vgae.validate();
    gat.validate();
    weights.validate();
    fusion.validate();
    if (!(ratio > 0.0)) throw ConfigError("undersampling ratio must be > 0");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
        throw ConfigError("validation fraction must lie in [0, 1)");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("decision threshold must lie in [0, 1]");
}

void PipelineConfig::propagate() {
    vgae_train.seed = nn::Rng::derive(seed, 1);
    gat_train.seed = nn::Rng::derive(seed, 2);
    vgae_train.policy = gat_train.policy = policy;
    vgae_train.verbose = gat_train.verbose = verbose;
    gat_train.threshold = threshold;
}

std::vector<ScoredWindow> score_windows(std::span<const GraphInput> graphs, const VgaeModel& vgae,
                                        const VgaeCalibration& calibration, const GatModel* gat,
                                        const FusionWeights& fusion, double threshold, const PipelineConfig& config,
                                        std::vector<ErrorTerms>* terms_out) {
    fusion.validate();
    if (gat == nullptr && fusion.gat != 0.0)
        throw ConfigError("scoring without a GAT requires fusion weights (1, 0)");
    const auto terms = vgae.score_all(graphs, config.weights, config.seed, config.policy);
    std::vector<double> vgae_scores;
    if (config.score_mode == ScoreMode::Composite) {
        for (const auto& t : terms) vgae_scores.push_back(t.composite);
    } else {
        vgae_scores = vgae.anomaly_scores(graphs, config.score_mode, config.weights, config.seed, config.policy);
    }
    std::vector<GatPrediction> preds;
    if (gat) preds = gat->predict_all(graphs, config.policy);
    std::vector<ScoredWindow> out(graphs.size());
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        auto& s = out[i];
        s.window_start_index = graphs[i].window_start_index;
        s.vgae_score = vgae_scores[i];
        s.vgae_prob = calibration(vgae_scores[i]);
        s.gat_prob = gat ? preds[i].probability : 0.0;
        s.fused_prob = fuse(s.vgae_prob, s.gat_prob, fusion);
        s.predicted = s.fused_prob >= threshold ? 1 : 0;
        s.truth = graphs[i].label;
    }
    if (terms_out) *terms_out = terms;
    return out;
}

PipelineResult run_two_stage(std::span<const GraphInput> train_stream, const TestSource& test,
                             const PipelineConfig& input_config) {
    PipelineConfig config = input_config;
    config.validate();
    config.propagate();
    if (!test) throw ConfigError("run_two_stage needs a test stream");

    auto split = split_stream(train_stream, config.validation_fraction);
    std::vector<GraphInput> normals, attacks;
    for (const auto& g : split.train) (g.label ? attacks : normals).push_back(g);
    if (normals.empty()) throw DataError("training split holds no normal windows; the VGAE cannot be trained");

    auto t0 = Clock::now();
    progress(config.verbose, "stage 1: training VGAE on " + std::to_string(normals.size()) + " normal windows");
    auto trained = train_vgae(normals, config.vgae, config.vgae_train);
    PipelineResult r{std::move(trained.model), std::nullopt, {}, {}, {}, {}, std::move(trained.epoch_loss), {}, {}, {},
                     {}, {}, {}, false, config.fusion, {}, {}};
    r.timings.vgae_train = seconds_since(t0);
    r.lineage.vgae_train_windows = normals.size();
    r.lineage.vgae_train_attack_windows = 0;
    r.lineage.validation_windows = split.validation.size();
    r.lineage.events.push_back("vgae trained on training-split normal windows");

    t0 = Clock::now();
    const auto scores = r.vgae.anomaly_scores(normals, config.score_mode, config.weights, config.seed, config.policy);
    const auto order = reconstruction_rank(normals, scores);
    std::vector<GraphInput> ranked;
    ranked.reserve(order.size());
    for (auto i : order) {
        ranked.push_back(normals[i]);
        r.rank_windows.push_back(normals[i].window_start_index);
        r.rank_scores.push_back(scores[i]);
    }
    r.timings.ranking = seconds_since(t0);
    r.lineage.ranked_windows = ranked.size();
    r.lineage.events.push_back("training normals ranked by reconstruction error");

    if (attacks.empty()) {
        r.vgae_only_mode = true;
        r.effective_fusion = {1.0, 0.0};
        r.lineage.events.push_back("no attack windows in training split: VGAE-only anomaly mode");
        progress(config.verbose, "no attack windows in training split; running VGAE-only anomaly mode");
    } else {
        r.undersampling = undersample(ranked, attacks, config.ratio);
        progress(config.verbose, "stage 2: training GAT on " + std::to_string(r.undersampling.normal_count) +
                                     " normal + " + std::to_string(r.undersampling.attack_count) + " attack windows");
        t0 = Clock::now();
        auto gat = train_gat(r.undersampling.graphs, split.validation, config.gat, config.gat_train);
        r.timings.gat_train = seconds_since(t0);
        r.gat = std::move(gat.model);
        r.gat_log = std::move(gat.log);
        r.lineage.gat_train_windows = r.undersampling.graphs.size();
        r.undersampling.graphs.clear();
        r.undersampling.graphs.shrink_to_fit();
        r.lineage.events.push_back("gat trained on undersampled set with validation early stopping");
    }

    t0 = Clock::now();
    std::vector<GraphInput> val_normals;
    for (const auto& g : split.validation)
        if (g.label == 0) val_normals.push_back(g);
    const auto val_scores =
        r.vgae.anomaly_scores(val_normals, config.score_mode, config.weights, config.seed, config.policy);
    r.calibration = calibrate_vgae(val_scores);
    if (r.calibration.degenerate) std::fprintf(stderr, "warning: %s\n", r.calibration.warning.c_str());
    r.timings.calibration = seconds_since(t0);
    r.lineage.events.push_back("vgae calibrated on validation normal windows");

    t0 = Clock::now();
    const auto test_graphs = test();
    if (test_graphs.empty()) throw DataError("test stream produced no windows");
    r.lineage.test_windows = test_graphs.size();
    r.lineage.events.push_back("test stream loaded for final evaluation");
    r.scores = score_windows(test_graphs, r.vgae, r.calibration, r.gat ? &*r.gat : nullptr, r.effective_fusion,
                             config.threshold, config, &r.terms);
    r.vgae_only = evaluate(r.scores, config.threshold, ProbSource::Vgae);
    r.fused = evaluate(r.scores, config.threshold, ProbSource::Fused);
    r.gat_only = r.vgae_only_mode ? r.vgae_only : evaluate(r.scores, config.threshold, ProbSource::Gat);
    r.timings.evaluation = seconds_since(t0);
    progress(config.verbose, "test F1 gat-only " + format_double(r.gat_only.f1) + " fused " +
                                 format_double(r.fused.f1));
    return r;
}

std::string scores_csv(std::span<const ScoredWindow> scored) {
    std::string out = "window_start_index,vgae_score,vgae_prob,gat_prob,fused_prob,predicted,truth\n";
    for (const auto& s : scored) {
        out += std::to_string(s.window_start_index) + ',' + format_double(s.vgae_score) + ',' +
               format_double(s.vgae_prob) + ',' + format_double(s.gat_prob) + ',' + format_double(s.fused_prob) +
               ',' + std::to_string(s.predicted) + ',' + std::to_string(s.truth) + '\n';
    }
    return out;
}

std::vector<ScoredWindow> parse_scores_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::vector<ScoredWindow> out;
    auto parse_flag = [&](std::string_view f) {
        f = trim(f);
        if (f == "0") return 0;
        if (f == "1") return 1;
        throw ParseError(line_no, "expected 0 or 1, got '" + std::string(f) + "'");
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (trim(line) != "window_start_index,vgae_score,vgae_prob,gat_prob,fused_prob,predicted,truth")
                throw ParseError(line_no, "not a scores file: unexpected header");
            continue;
        }
        if (trim(line).empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 7) throw ParseError(line_no, "expected 7 fields, got " + std::to_string(f.size()));
        ScoredWindow s;
        try {
            s.window_start_index = static_cast<std::size_t>(std::stoull(std::string(trim(f[0]))));
            s.vgae_score = parse_double(trim(f[1]));
            s.vgae_prob = parse_double(trim(f[2]));
            s.gat_prob = parse_double(trim(f[3]));
            s.fused_prob = parse_double(trim(f[4]));
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(line_no, std::string("bad numeric field: ") + e.what());
        }
        s.predicted = parse_flag(f[5]);
        s.truth = parse_flag(f[6]);
        out.push_back(s);
    }
    if (line_no == 0) throw ParseError(0, "empty scores file");
    return out;
}

std::string vgae_scores_csv(std::span<const ScoredWindow> scored, std::span<const ErrorTerms> terms) {
    if (scored.size() != terms.size()) throw DimensionError("vgae_scores_csv: scores and error terms differ in length");
    std::string out = "window_start_index,e_node,e_neighbor,e_can_id,composite\n";
    for (std::size_t i = 0; i < terms.size(); ++i) {
        const auto& t = terms[i];
        out += std::to_string(scored[i].window_start_index) + ',' + format_double(t.node) + ',' +
               format_double(t.neighbor) + ',' + format_double(t.can_id) + ',' + format_double(t.composite) + '\n';
    }
    return out;
}

nlohmann::json metrics_json(const Metrics& m) {
    return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
            {"tp", m.tp},             {"fp", m.fp},               {"tn", m.tn},         {"fn", m.fn}};
}

namespace {

nlohmann::json separation_json(std::span<const ScoredWindow> scored) {
    std::vector<double> s;
    std::vector<int> truth;
    double attack_sum = 0.0, benign_sum = 0.0;
    std::size_t attack_n = 0, benign_n = 0;
    for (const auto& w : scored) {
        s.push_back(w.vgae_score);
        truth.push_back(w.truth);
        (w.truth ? attack_sum : benign_sum) += w.vgae_score;
        ++(w.truth ? attack_n : benign_n);
    }
    nlohmann::json j;
    j["attack_windows"] = attack_n;
    j["benign_windows"] = benign_n;
    if (attack_n) j["mean_attack_score"] = attack_sum / static_cast<double>(attack_n);
    if (benign_n) j["mean_benign_score"] = benign_sum / static_cast<double>(benign_n);
    if (attack_n && benign_n) j["roc_auc"] = roc_auc(s, truth);
    return j;
}

const char* score_mode_name(ScoreMode m) { return m == ScoreMode::Composite ? "composite" : "adjacency-l2"; }

}  // namespace

nlohmann::json pipeline_report(const PipelineResult& r, const PipelineConfig& c) {
    nlohmann::json j;
    j["config"] = {{"seed", c.seed},
                   {"vgae", {{"role", to_string(c.vgae.role)},
                             {"num_layers", c.vgae.num_layers},
                             {"attn_heads", c.vgae.attn_heads},
                             {"hidden_channels", c.vgae.hidden_channels},
                             {"latent_dim", c.vgae.latent_dim},
                             {"id_buckets", c.vgae.id_buckets},
                             {"epochs", c.vgae_train.epochs}}},
                   {"gat", {{"role", to_string(c.gat.role)},
                            {"num_layers", c.gat.num_layers},
                            {"attn_heads", c.gat.attn_heads},
                            {"hidden_channels", c.gat.hidden_channels},
                            {"epochs", c.gat_train.epochs},
                            {"patience", c.gat_train.patience}}},
                   {"composite_weights", {{"alpha", c.weights.alpha}, {"beta", c.weights.beta}, {"gamma", c.weights.gamma}}},
                   {"score_mode", score_mode_name(c.score_mode)},
                   {"ratio", c.ratio},
                   {"validation_fraction", c.validation_fraction},
                   {"threshold", c.threshold},
                   {"fusion_weights", {c.fusion.anomaly, c.fusion.gat}}};
    j["mode"] = r.vgae_only_mode ? "vgae-only" : "two-stage";
    j["metrics"] = {{"headline", r.vgae_only_mode ? "vgae_only" : "gat_only"},
                    {"gat_only", metrics_json(r.gat_only)},
                    {"fused", metrics_json(r.fused)},
                    {"vgae_only", metrics_json(r.vgae_only)}};
    j["effective_fusion_weights"] = {r.effective_fusion.anomaly, r.effective_fusion.gat};
    j["param_counts"] = {{"vgae", r.vgae.params().scalar_count()},
                         {"gat", r.gat ? r.gat->params().scalar_count() : 0}};
    j["undersampling"] = {{"normal_count", r.undersampling.normal_count},
                          {"attack_count", r.undersampling.attack_count},
                          {"requested_ratio", r.undersampling.requested_ratio},
                          {"achieved_ratio", r.undersampling.achieved_ratio}};
    j["calibration"] = {{"q50", r.calibration.q50}, {"q99_5", r.calibration.q995},
                        {"degenerate", r.calibration.degenerate}};
    if (!r.calibration.warning.empty()) j["calibration"]["warning"] = r.calibration.warning;
    j["vgae_score_separation"] = separation_json(r.scores);
    j["training"] = {{"vgae_epoch_loss", r.vgae_loss},
                     {"gat_epoch_loss", r.gat_log.epoch_loss},
                     {"gat_val_f1", r.gat_log.val_f1},
                     {"gat_best_epoch", r.gat_log.best_epoch}};
    j["timings_seconds"] = {{"vgae_train", r.timings.vgae_train},
                            {"ranking", r.timings.ranking},
                            {"gat_train", r.timings.gat_train},
                            {"calibration", r.timings.calibration},
                            {"evaluation", r.timings.evaluation}};
    j["data_lineage"] = {{"vgae_train_windows", r.lineage.vgae_train_windows},
                         {"vgae_train_attack_windows", r.lineage.vgae_train_attack_windows},
                         {"ranked_windows", r.lineage.ranked_windows},
                         {"gat_train_windows", r.lineage.gat_train_windows},
                         {"validation_windows", r.lineage.validation_windows},
                         {"test_windows", r.lineage.test_windows},
                         {"events", r.lineage.events}};
    return j;
}

std::vector<std::filesystem::path> write_pipeline_outputs(const std::filesystem::path& dir,
                                                          const PipelineResult& r, const PipelineConfig& c) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    auto put = [&](const char* name, const std::string& content) {
        write_file_atomic(dir / name, content);
        written.push_back(dir / name);
    };
    put("scores.csv", scores_csv(r.scores));
    put("vgae_scores.csv", vgae_scores_csv(r.scores, r.terms));
    put("vgae.ckpt", nn::serialize_checkpoint(r.vgae.to_checkpoint()));
    if (r.gat) put("gat.ckpt", nn::serialize_checkpoint(r.gat->to_checkpoint()));
    put("report.json", pipeline_report(r, c).dump(2) + "\n");
    return written;
}

KeyValues parse_key_values(const std::string& text) {
    KeyValues out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        std::string_view body = trim(std::string_view(line).substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
        const std::string key(trim(body.substr(0, eq)));
        const std::string value(trim(body.substr(eq + 1)));
        if (key.empty()) throw ParseError(line_no, "empty key");
        if (!out.emplace(key, value).second) throw ParseError(line_no, "duplicate key '" + key + "'");
    }
    return out;
}

namespace {

std::size_t to_size(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    unsigned long long x = 0;
    try {
        x = std::stoull(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != v.size() || v.empty() || v[0] == '-')
        throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
    return static_cast<std::size_t>(x);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        return parse_double(v);
    } catch (const Error&) {
        throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
    }
}

}  // namespace

KeyValues apply_run_config(const KeyValues& values, PipelineConfig& c) {
    KeyValues rest;
    for (const auto& [k, v] : values) {
        if (k == "seed") {
            c.seed = to_size(k, v);
        } else if (k == "preset") {
            const Role role = role_from_string(v);
            c.vgae = role == Role::Teacher ? VgaeConfig::teacher() : VgaeConfig::student();
            c.gat = role == Role::Teacher ? GatConfig::teacher() : GatConfig::student();
        } else if (k == "vgae_preset") {
            c.vgae = role_from_string(v) == Role::Teacher ? VgaeConfig::teacher() : VgaeConfig::student();
        } else if (k == "gat_preset") {
            c.gat = role_from_string(v) == Role::Teacher ? GatConfig::teacher() : GatConfig::student();
        } else if (k == "latent_dim") {
            c.vgae.latent_dim = to_size(k, v);
        } else if (k == "id_buckets") {
            c.vgae.id_buckets = to_size(k, v);
        } else if (k == "ratio") {
            c.ratio = to_double(k, v);
        } else if (k == "threshold") {
            c.threshold = to_double(k, v);
        } else if (k == "validation_fraction") {
            c.validation_fraction = to_double(k, v);
        } else if (k == "fusion_weights") {
            c.fusion = parse_fusion_weights(v);
        } else if (k == "weight_node") {
            c.weights.alpha = to_double(k, v);
        } else if (k == "weight_neighbor") {
            c.weights.beta = to_double(k, v);
        } else if (k == "weight_can_id") {
            c.weights.gamma = to_double(k, v);
        } else if (k == "score_mode") {
            if (v == "composite")
                c.score_mode = ScoreMode::Composite;
            else if (v == "adjacency-l2")
                c.score_mode = ScoreMode::AdjacencyL2;
            else
                throw ConfigError("score_mode must be composite or adjacency-l2, got '" + v + "'");
        } else if (k == "vgae_epochs") {
            c.vgae_train.epochs = to_size(k, v);
        } else if (k == "gat_epochs") {
            c.gat_train.epochs = to_size(k, v);
        } else if (k == "batch_size") {
            c.vgae_train.batch_size = c.gat_train.batch_size = to_size(k, v);
        } else if (k == "lr") {
            c.vgae_train.lr = c.gat_train.lr = to_double(k, v);
        } else if (k == "patience") {
            c.gat_train.patience = to_size(k, v);
        } else {
            rest.emplace(k, v);
        }
    }
    return rest;
}

FusionWeights parse_fusion_weights(const std::string& text) {
    const auto parts = split_fields(text);
    if (parts.size() != 2) throw ConfigError("fusion weights must be two comma-separated numbers, got '" + text + "'");
    FusionWeights w{to_double("fusion_weights", std::string(trim(parts[0]))),
                    to_double("fusion_weights", std::string(trim(parts[1])))};
    w.validate();
    return w;
}

}  // namespace canids
