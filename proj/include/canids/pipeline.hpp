#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "canids/gat.hpp"
#include "canids/graph_input.hpp"
#include "canids/metrics.hpp"
#include "canids/vgae.hpp"
#include "json.hpp"

namespace canids {

// ---------------------------------------------------------------------------
// Selective undersampling

struct UndersampleResult {
    std::vector<GraphInput> graphs;  // kept normals in rank order, then every attack graph
    std::size_t normal_count = 0;
    std::size_t attack_count = 0;
    double requested_ratio = 0.0;
    double achieved_ratio = 0.0;
    std::vector<std::size_t> normal_windows;  // window_start_index of each kept normal
};

// Keeps the first min(ceil(ratio * |attacks|), |normals|) graphs of `ranked_normals`.
UndersampleResult undersample(std::span<const GraphInput> ranked_normals, std::span<const GraphInput> attacks,
                              double ratio);

// ---------------------------------------------------------------------------
// Anomaly-score calibration and fusion

// Linear-interpolation quantile of unsorted `values`, q in [0, 1].
double quantile(std::vector<double> values, double q);

struct VgaeCalibration {
    double q50 = 0.0;
    double q995 = 0.0;
    bool degenerate = false;
    std::string warning;

    double operator()(double score) const;
};

inline constexpr std::size_t kMinCalibrationScores = 20;

// Maps scores to clamp((s - q50) / (q99.5 - q50), 0, 1) using quantiles of normal scores.
VgaeCalibration calibrate_vgae(std::span<const double> normal_scores);

struct FusionWeights {
    double anomaly = 0.15;
    double gat = 0.85;

    void validate() const;
};

// "0.15,0.85" -> {0.15, 0.85}; validated.
FusionWeights parse_fusion_weights(const std::string& text);

double fuse(double vgae_prob, double gat_prob, const FusionWeights& weights = {});

struct ScoredWindow {
    std::size_t window_start_index = 0;
    double vgae_score = 0.0;
    double vgae_prob = 0.0;
    double gat_prob = 0.0;
    double fused_prob = 0.0;
    int predicted = 0;
    int truth = 0;

    friend bool operator==(const ScoredWindow&, const ScoredWindow&) = default;
};

enum class ProbSource { Fused, Gat, Vgae };

Metrics evaluate(std::span<const ScoredWindow> scored, double threshold = 0.5, ProbSource source = ProbSource::Fused);

// ---------------------------------------------------------------------------
// Two-stage run

struct StreamSplit {
    std::vector<GraphInput> train;
    std::vector<GraphInput> validation;
};

// Chronological split: the first round(n * (1 - validation_fraction)) windows train.
StreamSplit split_stream(std::span<const GraphInput> graphs, double validation_fraction);

struct PipelineConfig {
    VgaeConfig vgae = VgaeConfig::teacher();
    GatConfig gat = GatConfig::teacher();
    VgaeTrainOptions vgae_train;
    GatTrainOptions gat_train;
    CompositeWeights weights;
    ScoreMode score_mode = ScoreMode::Composite;
    double ratio = 4.0;
    double validation_fraction = 0.2;
    double threshold = 0.5;
    FusionWeights fusion;
    std::uint64_t seed = 0;
    ExecPolicy policy = ExecPolicy::Parallel;
    bool verbose = false;

    void validate() const;
    // Copies seed, policy and verbosity into both training option blocks.
    void propagate();
};

// Deferred access to the test stream, invoked once after both stages are trained.
using TestSource = std::function<std::vector<GraphInput>()>;

struct StageTimings {
    double vgae_train = 0.0;
    double ranking = 0.0;
    double gat_train = 0.0;
    double calibration = 0.0;
    double evaluation = 0.0;
};

struct Lineage {
    std::size_t vgae_train_windows = 0;
    std::size_t vgae_train_attack_windows = 0;
    std::size_t ranked_windows = 0;
    std::size_t gat_train_windows = 0;
    std::size_t validation_windows = 0;
    std::size_t test_windows = 0;
    std::vector<std::string> events;  // stage order, test-stream access last
};

struct PipelineResult {
    VgaeModel vgae;
    std::optional<GatModel> gat;
    VgaeCalibration calibration;
    UndersampleResult undersampling;  // graphs dropped after training to keep the result small
    std::vector<std::size_t> rank_windows;  // window_start_index of every training normal, rank order
    std::vector<double> rank_scores;
    std::vector<double> vgae_loss;
    TrainingLog gat_log;
    std::vector<ScoredWindow> scores;
    std::vector<ErrorTerms> terms;  // per test window
    Metrics gat_only;
    Metrics fused;
    Metrics vgae_only;
    bool vgae_only_mode = false;
    FusionWeights effective_fusion;
    StageTimings timings;
    Lineage lineage;
};

// Stage 1: VGAE on training normals, composite-error ranking, undersampling at `ratio`.
// Stage 2: GAT on the undersampled set with validation early stopping. Then VGAE
// calibration on validation normals and evaluation of GAT-only and fused predictions on
// the test stream. Without attack windows in the training split only the VGAE runs and
// predictions come from the calibrated probability.
PipelineResult run_two_stage(std::span<const GraphInput> train_stream, const TestSource& test,
                             const PipelineConfig& config);

// Scores windows with frozen models. A null `gat` gives gat_prob = 0 and requires
// fusion weights (1, 0).
std::vector<ScoredWindow> score_windows(std::span<const GraphInput> graphs, const VgaeModel& vgae,
                                        const VgaeCalibration& calibration, const GatModel* gat,
                                        const FusionWeights& fusion, double threshold, const PipelineConfig& config,
                                        std::vector<ErrorTerms>* terms_out = nullptr);

// ---------------------------------------------------------------------------
// Artifacts

std::string scores_csv(std::span<const ScoredWindow> scored);
std::vector<ScoredWindow> parse_scores_csv(const std::string& text);
// window_start_index, E_node, E_neighbor, E_CAN ID, composite per row.
std::string vgae_scores_csv(std::span<const ScoredWindow> scored, std::span<const ErrorTerms> terms);

nlohmann::json metrics_json(const Metrics& m);
nlohmann::json pipeline_report(const PipelineResult& result, const PipelineConfig& config);

// Writes scores.csv, vgae_scores.csv, report.json and both checkpoints into `dir`.
// Returns the paths written.
std::vector<std::filesystem::path> write_pipeline_outputs(const std::filesystem::path& dir,
                                                          const PipelineResult& result,
                                                          const PipelineConfig& config);

// ---------------------------------------------------------------------------
// Run configuration file: one `key = value` per line, `#` starts a comment.

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
// Applies the keys `config` understands and returns the rest.
KeyValues apply_run_config(const KeyValues& values, PipelineConfig& config);

}  // namespace canids
