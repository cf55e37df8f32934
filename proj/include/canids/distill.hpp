#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "canids/gat.hpp"
#include "canids/pipeline.hpp"
#include "canids/vgae.hpp"

namespace canids {

struct KdConfig {
    double tau = 4.0;
    double alpha = 0.5;        // weight of the hard-label loss
    bool tau_squared = true;   // multiply the soft term by tau^2
    bool reuse_teacher_ranking = false;

    void validate() const;
};

// softmax(logits / tau).
std::vector<double> soften(std::span<const double> logits, double tau);
nn::Var soften(nn::Var logits, double tau);

// alpha * CE(student, labels) + (1 - alpha) * [tau^2] * KL(soften(student) || soften(teacher)),
// both terms averaged over rows.
nn::Var kd_classifier_loss(nn::Var student_logits, nn::Var teacher_logits, const nn::Index& hard_labels,
                           const KdConfig& config);

// Learned linear maps from the student latent width to the teacher's, one for the
// means and one for the log standard deviations.
struct LatentProjection {
    nn::Var mu_weight;
    nn::Var mu_bias;
    nn::Var log_sigma_weight;
    nn::Var log_sigma_bias;
};

inline constexpr std::size_t kLatentProjectionTensors = 4;

void add_latent_projection(nn::ParamSet& params, std::size_t student_dim, std::size_t teacher_dim, nn::Rng& rng);
LatentProjection bind_latent_projection(std::span<const nn::Var> bound);

// Mean per-node KL(projected student || teacher) between diagonal Gaussians.
nn::Var kd_latent_loss(const LatentState& student, nn::Var teacher_mu, nn::Var teacher_log_sigma,
                       const LatentProjection& projection);

struct LatentMatrices {
    nn::Matrix mu;
    nn::Matrix log_sigma;
};

// Inference-mode encoder outputs of a frozen model.
LatentMatrices frozen_latent(const VgaeModel& model, const GraphInput& graph);

inline constexpr std::size_t kStudentGatBatchSize = 16;

struct DistillConfig {
    PipelineConfig pipeline;  // student presets, training and scoring settings
    KdConfig kd;

    DistillConfig();
    void validate() const;
};

struct DistillResult {
    PipelineResult student;
    std::vector<ScoredWindow> teacher_scores;
    Metrics teacher_gat_only;
    Metrics teacher_fused;
    std::size_t teacher_vgae_params = 0;
    std::size_t student_vgae_params = 0;
    std::size_t teacher_gat_params = 0;
    std::size_t student_gat_params = 0;
    std::uint64_t teacher_vgae_checksum = 0;
    std::uint64_t teacher_gat_checksum = 0;
    nn::ParamSet projection;
    double teacher_inference_seconds = 0.0;
};

// Re-runs both stages with student models: the student VGAE learns with latent-space
// guidance from the frozen teacher VGAE, the undersampled set is rebuilt from the
// student's ranking, and the student GAT learns from the teacher's softened logits.
// Student and teacher are then evaluated on the same test stream.
DistillResult distill_pipeline(std::span<const GraphInput> train_stream, const TestSource& test,
                               const VgaeModel* teacher_vgae, const GatModel* teacher_gat,
                               const DistillConfig& config);

nlohmann::json distill_report(const DistillResult& result, const DistillConfig& config);

}  // namespace canids
