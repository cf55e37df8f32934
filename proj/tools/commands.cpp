#include "commands.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "canids/distill.hpp"
#include "canids/gat.hpp"
#include "canids/graph.hpp"
#include "canids/graph_cache.hpp"
#include "canids/graph_input.hpp"
#include "canids/ingest.hpp"
#include "canids/io.hpp"
#include "canids/metrics.hpp"
#include "canids/nn/checkpoint.hpp"
#include "canids/pipeline.hpp"
#include "canids/synth.hpp"
#include "canids/vgae.hpp"

namespace canids::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

void progress(const CommonOptions& common, const std::string& line) {
    if (!common.quiet) std::fprintf(stderr, "[canids] %s\n", line.c_str());
}

// ---------------------------------------------------------------------------
// Input validation, run before any work.

void require_file(const fs::path& path, const char* what) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec))
        throw UsageError("missing-file", std::string(what) + " '" + path.string() + "' does not exist");
}

std::vector<std::string> head_lines(const fs::path& path, std::size_t count) {
    std::ifstream in(path);
    std::vector<std::string> out;
    std::string line;
    while (out.size() < count && std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        out.push_back(line);
    }
    return out;
}

void require_graphs(const fs::path& path) {
    require_file(path, "graph file");
    const auto head = head_lines(path, 1);
    if (head.empty() || head[0] != "canids-graphs 1")
        throw UsageError("schema", "'" + path.string() + "' is not a canids graph file (expected 'canids-graphs 1')");
}

void require_checkpoint(const fs::path& path, const std::string& kind) {
    require_file(path, "checkpoint");
    const auto head = head_lines(path, 2);
    if (head.size() < 2 || head[0] != "canids-checkpoint 1")
        throw UsageError("schema", "'" + path.string() + "' is not a canids checkpoint");
    if (head[1] != "kind " + kind)
        throw UsageError("schema", "'" + path.string() + "' holds '" + head[1] + "', expected 'kind " + kind + "'");
}

void require_log(const fs::path& path) {
    require_file(path, "CAN log");
    std::ifstream in(path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (trim(line).empty()) continue;
        try {
            parse_car_hacking_row(line, n);
        } catch (const ParseError& e) {
            throw UsageError("schema", "'" + path.string() + "' is not a Car-Hacking style log: " + e.what());
        }
        return;
    }
    throw UsageError("schema", "'" + path.string() + "' holds no frames");
}

constexpr const char* kScoresHeader = "window_start_index,vgae_score,vgae_prob,gat_prob,fused_prob,predicted,truth";

void require_scores(const fs::path& path) {
    require_file(path, "scores file");
    const auto head = head_lines(path, 1);
    if (head.empty() || head[0] != kScoresHeader)
        throw UsageError("schema", "'" + path.string() + "' lacks the scores.csv header '" + kScoresHeader + "'");
}

// ---------------------------------------------------------------------------
// Configuration

KeyValues load_config(const CommonOptions& common) {
    if (!common.config) return {};
    require_file(*common.config, "config file");
    try {
        return parse_key_values(read_file(*common.config));
    } catch (const ParseError& e) {
        throw UsageError("schema", "config '" + common.config->string() + "': " + e.what());
    }
}

void reject_unknown(const KeyValues& rest, const CommonOptions& common) {
    if (rest.empty()) return;
    throw UsageError("schema", "config '" + common.config->string() + "': unknown key '" + rest.begin()->first + "'");
}

// Config file first, then command-line flags.
void apply_common(const CommonOptions& common, PipelineConfig& c, KeyValues& rest) {
    rest = apply_run_config(load_config(common), c);
    if (common.seed) c.seed = *common.seed;
    if (common.preset) {
        const Role role = role_from_string(*common.preset);
        c.vgae = role == Role::Teacher ? VgaeConfig::teacher() : VgaeConfig::student();
        c.gat = role == Role::Teacher ? GatConfig::teacher() : GatConfig::student();
    }
    if (common.ratio) c.ratio = *common.ratio;
    if (common.fusion_weights) c.fusion = parse_fusion_weights(*common.fusion_weights);
    if (common.threshold) c.threshold = *common.threshold;
    c.policy = common.serial ? ExecPolicy::Serial : ExecPolicy::Parallel;
    c.verbose = !common.quiet;
    c.validate();
    c.propagate();
}

PipelineConfig pipeline_config(const CommonOptions& common) {
    PipelineConfig c;
    KeyValues rest;
    apply_common(common, c, rest);
    reject_unknown(rest, common);
    return c;
}

std::uint64_t seed_of(const CommonOptions& common) { return common.seed.value_or(0); }

// ---------------------------------------------------------------------------
// Loading

struct LoadedGraphs {
    std::vector<WindowGraph> windows;
    std::vector<GraphInput> inputs;
};

LoadedGraphs load_inputs(const fs::path& path) {
    LoadedGraphs g;
    g.windows = load_graphs(path);
    g.inputs = prepare_graphs(g.windows);
    return g;
}

VgaeModel load_vgae(const fs::path& path) { return VgaeModel::from_checkpoint(nn::load_checkpoint(path)); }
GatModel load_gat(const fs::path& path) { return GatModel::from_checkpoint(nn::load_checkpoint(path)); }

std::vector<GraphInput> validation_normals(std::span<const GraphInput> train_stream, const PipelineConfig& c) {
    auto split = split_stream(train_stream, c.validation_fraction);
    std::vector<GraphInput> out;
    for (auto& g : split.validation)
        if (g.label == 0) out.push_back(std::move(g));
    return out;
}

// ---------------------------------------------------------------------------
// Output helpers

struct Writer {
    fs::path dir;
    std::vector<fs::path> written;

    explicit Writer(const fs::path& d) : dir(d) { fs::create_directories(dir); }

    fs::path put(const std::string& name, const std::string& content) {
        write_file_atomic(dir / name, content);
        written.push_back(dir / name);
        return dir / name;
    }
    fs::path put_json(const std::string& name, const json& j) { return put(name, j.dump(2) + "\n"); }
};

json graph_stats_json(const GraphStats& s) {
    return {{"count", s.count},
            {"min_nodes", s.min_nodes},
            {"max_nodes", s.max_nodes},
            {"mean_nodes", s.mean_nodes},
            {"min_edges", s.min_edges},
            {"max_edges", s.max_edges},
            {"mean_edges", s.mean_edges},
            {"attack_windows", s.attack_windows},
            {"attack_fraction", s.attack_fraction}};
}

json frame_stats_json(const std::vector<CanFrame>& frames) {
    std::size_t attacks = 0;
    std::set<std::uint16_t> ids;
    for (const auto& f : frames) {
        attacks += f.label == Label::Attack;
        ids.insert(f.can_id);
    }
    json j = {{"frames", frames.size()}, {"attack_frames", attacks}, {"distinct_ids", ids.size()}};
    if (!frames.empty()) j["time_span_seconds"] = frames.back().timestamp - frames.front().timestamp;
    return j;
}

std::string path_string(const fs::path& p) { return p.generic_string(); }

std::vector<WindowGraph> build_from_log(const fs::path& log, const WindowOptions& wo, ExecPolicy policy) {
    const auto frames = parse_car_hacking_csv(log);
    return build_windows(frames, wo, policy);
}

WindowOptions window_options(std::size_t window, std::optional<std::size_t> stride, bool undirected) {
    WindowOptions wo{window, stride.value_or(window), !undirected};
    try {
        validate(wo);
    } catch (const ConfigError& e) {
        throw UsageError("usage", e.what());
    }
    return wo;
}

}  // namespace

// ---------------------------------------------------------------------------

CommandResult cmd_synth(const CommonOptions& common, const SynthOptions& opts) {
    if (opts.frames && opts.duration) throw UsageError("usage", "--frames and --duration are mutually exclusive");
    SynthConfig cfg;
    if (common.config) {
        require_file(*common.config, "synthetic config");
        try {
            cfg = synth_config_from_json(read_file(*common.config));
        } catch (const ParseError& e) {
            throw UsageError("schema", "synthetic config '" + common.config->string() + "': " + e.what());
        }
        if (opts.duration) cfg.duration = *opts.duration;
    } else {
        const double duration = opts.duration ? *opts.duration
                                              : demo_duration_for_frames(opts.frames.value_or(20000));
        cfg = demo_synth_config(duration);
    }
    validate(cfg);
    progress(common, "generating synthetic log");
    auto frames = generate_synthetic_log(cfg, seed_of(common));
    while (opts.frames && !common.config && !opts.duration && frames.size() < *opts.frames) {
        cfg = demo_synth_config(cfg.duration * 1.02 + 1.0);
        frames = generate_synthetic_log(cfg, seed_of(common));
    }
    if (opts.frames && frames.size() > *opts.frames) frames.resize(*opts.frames);
    Writer w(common.out_dir);
    std::string out;
    for (const auto& f : frames) {
        out += format_car_hacking_row(f);
        out += '\n';
    }
    const auto path = w.put(opts.out_name, out);
    json s = frame_stats_json(frames);
    s["command"] = "synth";
    s["seed"] = seed_of(common);
    s["log"] = path_string(path);
    return {s, w.written};
}

CommandResult cmd_ingest(const CommonOptions& common, const IngestOptions& opts) {
    require_file(opts.input, "input log");
    std::vector<CanFrame> frames;
    if (opts.format == "car-hacking") {
        require_log(opts.input);
        frames = parse_car_hacking_csv(opts.input);
    } else if (opts.format == "generic") {
        if (opts.columns.empty()) throw UsageError("usage", "--format generic needs --columns");
        ColumnMap map;
        try {
            map = parse_column_map(opts.columns);
        } catch (const Error& e) {
            throw UsageError("usage", std::string("--columns: ") + e.what());
        }
        frames = parse_generic_labeled_csv(opts.input, map);
    } else {
        throw UsageError("usage", "--format must be car-hacking or generic");
    }
    progress(common, "parsed " + std::to_string(frames.size()) + " frames");
    Writer w(common.out_dir);
    std::string out;
    for (const auto& f : frames) {
        out += format_car_hacking_row(f);
        out += '\n';
    }
    const auto path = w.put(opts.out_name, out);
    json s = frame_stats_json(frames);
    s["command"] = "ingest";
    s["input"] = path_string(opts.input);
    s["frames_csv"] = path_string(path);
    return {s, w.written};
}

CommandResult cmd_build_graphs(const CommonOptions& common, const BuildGraphsOptions& opts) {
    const auto wo = window_options(opts.window, opts.stride, opts.undirected);
    require_log(opts.input);
    const auto graphs = build_from_log(opts.input, wo, common.serial ? ExecPolicy::Serial : ExecPolicy::Parallel);
    if (graphs.empty()) throw DataError("log holds fewer frames than one window of " + std::to_string(wo.window));
    progress(common, "built " + std::to_string(graphs.size()) + " window graphs");
    Writer w(common.out_dir);
    const auto path = w.put(opts.out_name, serialize_graphs(graphs));
    json s = {{"command", "build-graphs"},
              {"window", wo.window},
              {"stride", wo.stride},
              {"directed", wo.directed},
              {"graphs", path_string(path)},
              {"stats", graph_stats_json(feature_stats(graphs))}};
    return {s, w.written};
}

CommandResult cmd_train_vgae(const CommonOptions& common, const TrainVgaeOptions& opts) {
    require_graphs(opts.graphs);
    const auto c = pipeline_config(common);
    const auto g = load_inputs(opts.graphs);
    const auto split = split_stream(g.inputs, c.validation_fraction);
    std::vector<GraphInput> normals;
    for (const auto& x : split.train)
        if (x.label == 0) normals.push_back(x);
    if (normals.empty()) throw DataError("training split holds no normal windows");
    progress(common, "training VGAE on " + std::to_string(normals.size()) + " normal windows");
    auto t = train_vgae(normals, c.vgae, c.vgae_train);
    Writer w(common.out_dir);
    const auto ckpt = w.put("vgae.ckpt", nn::serialize_checkpoint(t.model.to_checkpoint()));
    w.put_json("vgae_train.json", {{"normal_windows", normals.size()},
                                   {"epoch_loss", t.epoch_loss},
                                   {"seconds", t.seconds},
                                   {"params", t.model.params().scalar_count()},
                                   {"role", to_string(c.vgae.role)}});
    json s = {{"command", "train-vgae"},
              {"checkpoint", path_string(ckpt)},
              {"normal_windows", normals.size()},
              {"final_loss", t.epoch_loss.empty() ? 0.0 : t.epoch_loss.back()},
              {"params", t.model.params().scalar_count()}};
    return {s, w.written};
}

CommandResult cmd_undersample(const CommonOptions& common, const UndersampleOptions& opts) {
    require_graphs(opts.graphs);
    require_checkpoint(opts.vgae, "vgae");
    const auto c = pipeline_config(common);
    const auto g = load_inputs(opts.graphs);
    const auto vgae = load_vgae(opts.vgae);
    const auto n_train = split_stream(g.inputs, c.validation_fraction).train.size();

    std::vector<GraphInput> normals, attacks;
    std::vector<const WindowGraph*> normal_windows, attack_windows;
    for (std::size_t i = 0; i < n_train; ++i) {
        if (g.inputs[i].label) {
            attacks.push_back(g.inputs[i]);
            attack_windows.push_back(&g.windows[i]);
        } else {
            normals.push_back(g.inputs[i]);
            normal_windows.push_back(&g.windows[i]);
        }
    }
    if (normals.empty()) throw DataError("training split holds no normal windows");
    const auto scores = vgae.anomaly_scores(normals, c.score_mode, c.weights, c.seed, c.policy);
    const auto order = reconstruction_rank(normals, scores);
    std::vector<GraphInput> ranked;
    for (auto i : order) ranked.push_back(normals[i]);
    const auto u = undersample(ranked, attacks, c.ratio);

    std::vector<WindowGraph> kept;
    for (std::size_t k = 0; k < u.normal_count; ++k) kept.push_back(*normal_windows[order[k]]);
    for (const auto* a : attack_windows) kept.push_back(*a);

    std::string rank = "rank,window_start_index,score,kept\n";
    for (std::size_t k = 0; k < order.size(); ++k)
        rank += std::to_string(k) + "," + std::to_string(normals[order[k]].window_start_index) + "," +
                format_double(scores[order[k]]) + "," + (k < u.normal_count ? "1" : "0") + "\n";

    Writer w(common.out_dir);
    const auto path = w.put("undersampled.txt", serialize_graphs(kept));
    w.put("rank.csv", rank);
    const json info = {{"normal_count", u.normal_count},
                       {"attack_count", u.attack_count},
                       {"requested_ratio", u.requested_ratio},
                       {"achieved_ratio", u.achieved_ratio},
                       {"ranked_normals", normals.size()}};
    w.put_json("undersample.json", info);
    json s = {{"command", "undersample"}, {"graphs", path_string(path)}, {"undersampling", info}};
    return {s, w.written};
}

CommandResult cmd_train_gat(const CommonOptions& common, const TrainGatOptions& opts) {
    require_graphs(opts.train);
    require_graphs(opts.graphs);
    const auto c = pipeline_config(common);
    const auto train = load_inputs(opts.train);
    const auto stream = load_inputs(opts.graphs);
    const auto split = split_stream(stream.inputs, c.validation_fraction);
    progress(common, "training GAT on " + std::to_string(train.inputs.size()) + " windows");
    auto t = train_gat(train.inputs, split.validation, c.gat, c.gat_train);
    Writer w(common.out_dir);
    const auto ckpt = w.put("gat.ckpt", nn::serialize_checkpoint(t.model.to_checkpoint()));
    w.put_json("gat_train.json", {{"train_windows", train.inputs.size()},
                                  {"validation_windows", split.validation.size()},
                                  {"epoch_loss", t.log.epoch_loss},
                                  {"val_f1", t.log.val_f1},
                                  {"val_loss", t.log.val_loss},
                                  {"best_epoch", t.log.best_epoch},
                                  {"seconds", t.log.seconds},
                                  {"params", count_params(c.gat)},
                                  {"role", to_string(c.gat.role)}});
    json s = {{"command", "train-gat"},
              {"checkpoint", path_string(ckpt)},
              {"best_epoch", t.log.best_epoch},
              {"best_val_f1", t.log.val_f1.empty() ? 0.0 : t.log.val_f1[t.log.best_epoch]},
              {"params", count_params(c.gat)}};
    return {s, w.written};
}

CommandResult cmd_distill(const CommonOptions& common, const DistillOptions& opts) {
    require_graphs(opts.graphs);
    require_graphs(opts.test);
    require_checkpoint(opts.teacher_vgae, "vgae");
    require_checkpoint(opts.teacher_gat, "gat");
    DistillConfig dc;
    KeyValues rest;
    apply_common(common, dc.pipeline, rest);
    for (auto it = rest.begin(); it != rest.end();) {
        if (it->first == "tau") {
            dc.kd.tau = parse_double(it->second);
        } else if (it->first == "alpha") {
            dc.kd.alpha = parse_double(it->second);
        } else if (it->first == "tau_squared") {
            dc.kd.tau_squared = it->second == "1" || it->second == "true";
        } else if (it->first == "reuse_teacher_ranking") {
            dc.kd.reuse_teacher_ranking = it->second == "1" || it->second == "true";
        } else {
            ++it;
            continue;
        }
        it = rest.erase(it);
    }
    reject_unknown(rest, common);
    if (common.tau) dc.kd.tau = *common.tau;
    if (common.alpha) dc.kd.alpha = *common.alpha;
    if (opts.reuse_teacher_ranking) dc.kd.reuse_teacher_ranking = true;
    dc.validate();

    const auto teacher_vgae = load_vgae(opts.teacher_vgae);
    const auto teacher_gat = load_gat(opts.teacher_gat);
    const auto stream = load_inputs(opts.graphs);
    const TestSource test = [&] { return load_inputs(opts.test).inputs; };
    auto d = distill_pipeline(stream.inputs, test, &teacher_vgae, &teacher_gat, dc);

    Writer w(common.out_dir);
    const auto& r = d.student;
    w.put("scores.csv", scores_csv(r.scores));
    w.put("vgae_scores.csv", vgae_scores_csv(r.scores, r.terms));
    w.put("vgae.ckpt", nn::serialize_checkpoint(r.vgae.to_checkpoint()));
    if (r.gat) w.put("gat.ckpt", nn::serialize_checkpoint(r.gat->to_checkpoint()));
    w.put("projection.ckpt", nn::serialize_checkpoint({"kd-projection", {}, d.projection}));
    const auto report = distill_report(d, dc);
    w.put_json("distill_report.json", report);
    json s = {{"command", "distill"}, {"comparison", report["comparison"]}, {"params", report["params"]}};
    return {s, w.written};
}

CommandResult cmd_evaluate(const CommonOptions& common, const EvaluateOptions& opts) {
    Writer w(common.out_dir);
    if (opts.scores) {
        require_scores(*opts.scores);
        const double threshold = common.threshold.value_or(0.5);
        const auto scored = parse_scores_csv(read_file(*opts.scores));
        if (scored.empty()) throw DataError("scores file holds no rows");
        std::vector<int> predicted, truth;
        std::vector<double> vgae_scores;
        for (const auto& s : scored) {
            predicted.push_back(s.predicted);
            truth.push_back(s.truth);
            vgae_scores.push_back(s.vgae_score);
        }
        json m = {{"windows", scored.size()},
                  {"threshold", threshold},
                  {"predicted", metrics_json(compute_metrics(predicted, truth))},
                  {"gat_only", metrics_json(evaluate(scored, threshold, ProbSource::Gat))},
                  {"fused", metrics_json(evaluate(scored, threshold, ProbSource::Fused))},
                  {"vgae_only", metrics_json(evaluate(scored, threshold, ProbSource::Vgae))}};
        const bool both = std::count(truth.begin(), truth.end(), 1) > 0 &&
                          std::count(truth.begin(), truth.end(), 0) > 0;
        if (both) m["vgae_score_roc_auc"] = roc_auc(vgae_scores, truth);
        w.put_json("metrics.json", m);
        m["command"] = "evaluate";
        return {m, w.written};
    }

    require_graphs(opts.graphs);
    require_graphs(opts.test);
    require_checkpoint(opts.vgae, "vgae");
    if (opts.gat) require_checkpoint(*opts.gat, "gat");
    const auto c = pipeline_config(common);
    const auto vgae = load_vgae(opts.vgae);
    std::optional<GatModel> gat;
    if (opts.gat) gat = load_gat(*opts.gat);
    const FusionWeights fusion = gat ? c.fusion : FusionWeights{1.0, 0.0};

    const auto stream = load_inputs(opts.graphs);
    const auto val = validation_normals(stream.inputs, c);
    const auto calibration = calibrate_vgae(vgae.anomaly_scores(val, c.score_mode, c.weights, c.seed, c.policy));
    if (calibration.degenerate) std::fprintf(stderr, "warning: %s\n", calibration.warning.c_str());

    const auto test = load_inputs(opts.test).inputs;
    if (test.empty()) throw DataError("test graph file holds no windows");
    std::vector<ErrorTerms> terms;
    const auto scored =
        score_windows(test, vgae, calibration, gat ? &*gat : nullptr, fusion, c.threshold, c, &terms);
    const auto vgae_only = evaluate(scored, c.threshold, ProbSource::Vgae);
    json m = {{"windows", scored.size()},
              {"threshold", c.threshold},
              {"mode", gat ? "two-stage" : "vgae-only"},
              {"fusion_weights", {fusion.anomaly, fusion.gat}},
              {"fused", metrics_json(evaluate(scored, c.threshold, ProbSource::Fused))},
              {"gat_only", metrics_json(gat ? evaluate(scored, c.threshold, ProbSource::Gat) : vgae_only)},
              {"vgae_only", metrics_json(vgae_only)},
              {"calibration", {{"q50", calibration.q50}, {"q99_5", calibration.q995},
                               {"degenerate", calibration.degenerate}}}};
    w.put("scores.csv", scores_csv(scored));
    w.put("vgae_scores.csv", vgae_scores_csv(scored, terms));
    w.put_json("metrics.json", m);
    m["command"] = "evaluate";
    return {m, w.written};
}

CommandResult cmd_export_embeddings(const CommonOptions& common, const ExportOptions& opts) {
    if (!opts.gat && !opts.vgae) throw UsageError("usage", "export-embeddings needs --gat and/or --vgae");
    require_graphs(opts.graphs);
    if (opts.gat) require_checkpoint(*opts.gat, "gat");
    if (opts.vgae) require_checkpoint(*opts.vgae, "vgae");
    const auto policy = common.serial ? ExecPolicy::Serial : ExecPolicy::Parallel;
    const auto g = load_inputs(opts.graphs);
    Writer w(common.out_dir);
    json s = {{"command", "export-embeddings"}, {"windows", g.inputs.size()}};

    if (opts.gat) {
        const auto gat = load_gat(*opts.gat);
        const auto preds = gat.predict_all(g.inputs, policy);
        std::ostringstream out;
        out << "window_start_index,label,attack_prob";
        for (std::size_t k = 0; k < gat.config().embedding_width(); ++k) out << ",e" << k;
        out << "\n";
        for (std::size_t i = 0; i < preds.size(); ++i) {
            out << g.inputs[i].window_start_index << "," << g.inputs[i].label << ","
                << format_double(preds[i].probability);
            for (double v : preds[i].embedding) out << "," << format_double(v);
            out << "\n";
        }
        s["gat_embeddings"] = path_string(w.put("gat_embeddings.csv", out.str()));
        s["gat_width"] = gat.config().embedding_width();
    }
    if (opts.vgae) {
        const auto vgae = load_vgae(*opts.vgae);
        const std::size_t d = vgae.config().latent_dim;
        std::vector<std::vector<double>> pooled(g.inputs.size());
        parallel_for(g.inputs.size(), policy, [&](std::size_t i) {
            const auto lat = frozen_latent(vgae, g.inputs[i]);
            pooled[i].assign(d, 0.0);
            for (std::size_t r = 0; r < lat.mu.rows(); ++r)
                for (std::size_t k = 0; k < d; ++k) pooled[i][k] += lat.mu(r, k);
            for (auto& v : pooled[i]) v /= static_cast<double>(lat.mu.rows());
        });
        std::ostringstream out;
        out << "window_start_index,label";
        for (std::size_t k = 0; k < d; ++k) out << ",z" << k;
        out << "\n";
        for (std::size_t i = 0; i < pooled.size(); ++i) {
            out << g.inputs[i].window_start_index << "," << g.inputs[i].label;
            for (double v : pooled[i]) out << "," << format_double(v);
            out << "\n";
        }
        s["vgae_embeddings"] = path_string(w.put("vgae_embeddings.csv", out.str()));
        s["vgae_width"] = d;
    }
    return {s, w.written};
}

CommandResult cmd_report(const CommonOptions& common, const ReportOptions& opts) {
    std::error_code ec;
    if (!fs::is_directory(opts.dir, ec))
        throw UsageError("missing-file", "artifact directory '" + opts.dir.string() + "' does not exist");
    static const char* kSections[] = {"manifest.json",   "vgae_train.json",     "undersample.json",
                                      "gat_train.json",  "metrics.json",        "distill_report.json",
                                      "report.json"};
    json sections = json::object();
    for (const char* name : kSections) {
        const fs::path p = opts.dir / name;
        if (!fs::is_regular_file(p, ec)) continue;
        try {
            sections[fs::path(name).stem().string()] = json::parse(read_file(p));
        } catch (const json::exception& e) {
            throw UsageError("schema", "'" + p.string() + "' is not valid JSON: " + e.what());
        }
    }
    if (sections.empty()) throw UsageError("missing-file", "no canids artifacts found in '" + opts.dir.string() + "'");

    json headline = json::object();
    if (sections.contains("metrics")) {
        headline["gat_only"] = sections["metrics"]["gat_only"];
        headline["fused"] = sections["metrics"]["fused"];
    } else if (sections.contains("report")) {
        headline["gat_only"] = sections["report"]["metrics"]["gat_only"];
        headline["fused"] = sections["report"]["metrics"]["fused"];
    }
    if (sections.contains("distill_report")) headline["distillation"] = sections["distill_report"]["comparison"];
    if (fs::is_regular_file(opts.dir / "scores.csv", ec)) {
        const auto scored = parse_scores_csv(read_file(opts.dir / "scores.csv"));
        std::vector<double> v;
        std::vector<int> t;
        for (const auto& s : scored) {
            v.push_back(s.vgae_score);
            t.push_back(s.truth);
        }
        if (std::count(t.begin(), t.end(), 1) > 0 && std::count(t.begin(), t.end(), 0) > 0)
            headline["vgae_score_roc_auc"] = roc_auc(v, t);
    }
    json summary = {{"command", "report"}, {"dir", path_string(opts.dir)}, {"headline", headline},
                    {"sections", sections}};
    Writer w(common.out_dir);
    w.put_json("summary.json", summary);
    return {summary, w.written};
}

CommandResult cmd_run(const CommonOptions& common, const RunOptions& opts) {
    const auto wo = window_options(opts.window, opts.stride, false);
    require_log(opts.train_log);
    require_log(opts.test_log);
    const auto c = pipeline_config(common);
    progress(common, "building training graphs");
    const auto train_windows = build_from_log(opts.train_log, wo, c.policy);
    const auto train = prepare_graphs(train_windows);
    const TestSource test = [&] {
        progress(common, "building test graphs");
        return prepare_graphs(build_from_log(opts.test_log, wo, c.policy));
    };
    const auto r = run_two_stage(train, test, c);
    const auto written = write_pipeline_outputs(common.out_dir, r, c);
    json s = {{"command", "run"},
              {"mode", r.vgae_only_mode ? "vgae-only" : "two-stage"},
              {"gat_only", metrics_json(r.gat_only)},
              {"fused", metrics_json(r.fused)},
              {"undersampling", {{"normal_count", r.undersampling.normal_count},
                                 {"attack_count", r.undersampling.attack_count}}}};
    return {s, written};
}

// ---------------------------------------------------------------------------

DirLock::DirLock(const fs::path& dir) : path_(dir / kLockFile) {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
        throw StateError("output directory '" + dir.string() + "' is locked by another canids process (" +
                         path_.string() + ")");
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

DirLock::~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

std::uint64_t file_checksum(const fs::path& path) {
    const std::string data = read_file(path);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : data) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

void update_manifest(const fs::path& out_dir, const std::string& command, const std::vector<std::string>& argv,
                     const CommonOptions& common, const CommandResult& result, double seconds) {
    const fs::path path = out_dir / kManifestFile;
    json manifest = {{"format", "canids-manifest 1"}, {"version", kVersion}, {"entries", json::object()}};
    std::error_code ec;
    if (fs::is_regular_file(path, ec)) {
        try {
            auto old = json::parse(read_file(path));
            if (old.contains("entries") && old["entries"].is_object()) manifest["entries"] = old["entries"];
        } catch (const json::exception&) {
            std::fprintf(stderr, "warning: replacing unreadable %s\n", path.string().c_str());
        }
    }
    json artifacts = json::array();
    for (const auto& a : result.artifacts)
        artifacts.push_back({{"path", path_string(a)},
                             {"bytes", fs::file_size(a)},
                             {"fnv1a64", file_checksum(a)}});
    json config = json::object();
    if (common.config) {
        config["file"] = path_string(*common.config);
        if (fs::is_regular_file(*common.config, ec) && command != "synth")
            config["values"] = parse_key_values(read_file(*common.config));
        else if (fs::is_regular_file(*common.config, ec))
            config["text"] = read_file(*common.config);
    }
    json timings = {{"total_seconds", seconds}};
    if (result.summary.contains("timings_seconds")) timings["stages"] = result.summary["timings_seconds"];
    manifest["entries"][command] = {{"argv", argv},
                                    {"seed", seed_of(common)},
                                    {"config", config},
                                    {"artifacts", artifacts},
                                    {"timings", timings}};
    write_file_atomic(path, manifest.dump(2) + "\n");
}

}  // namespace canids::cli
