#include "canids/distill.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "canids/error.hpp"
#include "canids/nn/loss.hpp"
#include "canids/nn/ops.hpp"

namespace canids {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void progress(bool verbose, const std::string& line) {
    if (verbose) std::fprintf(stderr, "[distill] %s\n", line.c_str());
}

void require_tau(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("distillation temperature must be > 0");
}

}  // namespace

void KdConfig::validate() const {
    require_tau(tau);
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("distillation alpha must lie in [0, 1]");
}

std::vector<double> soften(std::span<const double> logits, double tau) {
    require_tau(tau);
    if (logits.empty()) throw DimensionError("soften: empty logit vector");
    double top = logits[0];
    for (double v : logits) top = std::max(top, v);
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) total += out[i] = std::exp((logits[i] - top) / tau);
    for (auto& v : out) v /= total;
    return out;
}

nn::Var soften(nn::Var logits, double tau) {
    require_tau(tau);
    return nn::softmax(nn::scale(logits, 1.0 / tau));
}

nn::Var kd_classifier_loss(nn::Var student_logits, nn::Var teacher_logits, const nn::Index& hard_labels,
                           const KdConfig& config) {
    using namespace nn;
    config.validate();
    if (!student_logits.value().same_shape(teacher_logits.value()))
        throw DimensionError("kd_classifier_loss: student logits " + student_logits.value().shape_string() +
                             " vs teacher logits " + teacher_logits.value().shape_string());
    if (hard_labels.size() != student_logits.rows())
        throw DimensionError("kd_classifier_loss: " + std::to_string(hard_labels.size()) + " labels for " +
                             std::to_string(student_logits.rows()) + " rows");
    Var hard = cross_entropy(student_logits, hard_labels);
    Var soft = kl_categorical(soften(student_logits, config.tau), soften(teacher_logits, config.tau));
    if (config.tau_squared) soft = scale(soft, config.tau * config.tau);
    return add(scale(hard, config.alpha), scale(soft, 1.0 - config.alpha));
}

void add_latent_projection(nn::ParamSet& params, std::size_t student_dim, std::size_t teacher_dim, nn::Rng& rng) {
    if (student_dim == 0 || teacher_dim == 0) throw ConfigError("latent projection widths must be positive");
    const double bound = nn::glorot_bound(student_dim, teacher_dim);
    auto weight = [&] {
        nn::Matrix m(student_dim, teacher_dim);
        for (auto& v : m.values()) v = rng.uniform(-bound, bound);
        return m;
    };
    params.add("kd.proj.mu.weight", weight());
    params.add("kd.proj.mu.bias", nn::Matrix(1, teacher_dim));
    params.add("kd.proj.log_sigma.weight", weight());
    params.add("kd.proj.log_sigma.bias", nn::Matrix(1, teacher_dim));
}

LatentProjection bind_latent_projection(std::span<const nn::Var> bound) {
    if (bound.size() < kLatentProjectionTensors)
        throw DimensionError("bind_latent_projection: expected 4 bound tensors, got " + std::to_string(bound.size()));
    return {bound[0], bound[1], bound[2], bound[3]};
}

nn::Var kd_latent_loss(const LatentState& student, nn::Var teacher_mu, nn::Var teacher_log_sigma,
                       const LatentProjection& p) {
    using namespace nn;
    if (student.mu.rows() != teacher_mu.rows() || student.log_sigma.rows() != teacher_log_sigma.rows())
        throw DimensionError("kd_latent_loss: student has " + std::to_string(student.mu.rows()) +
                             " nodes, teacher has " + std::to_string(teacher_mu.rows()));
    Var mu = add(matmul(student.mu, p.mu_weight), p.mu_bias);
    Var ls = clamp(add(matmul(student.log_sigma, p.log_sigma_weight), p.log_sigma_bias), -kLogSigmaLimit,
                   kLogSigmaLimit);
    return kl_gaussian(mu, ls, teacher_mu, teacher_log_sigma);
}

LatentMatrices frozen_latent(const VgaeModel& model, const GraphInput& graph) {
    nn::Tape tape;
    auto bound = tape.bind(model.params(), nullptr);
    auto lat = model.encode(bound, graph, nullptr);
    return {lat.mu.value(), lat.log_sigma.value()};
}

DistillConfig::DistillConfig() {
    pipeline.vgae = VgaeConfig::student();
    pipeline.gat = GatConfig::student();
    pipeline.gat_train.batch_size = kStudentGatBatchSize;
}

void DistillConfig::validate() const {
    pipeline.validate();
    kd.validate();
}

DistillResult distill_pipeline(std::span<const GraphInput> train_stream, const TestSource& test,
                               const VgaeModel* teacher_vgae, const GatModel* teacher_gat,
                               const DistillConfig& input_config) {
    if (teacher_vgae == nullptr) throw StateError("distillation needs a teacher VGAE checkpoint");
    if (teacher_gat == nullptr) throw StateError("distillation needs a teacher GAT checkpoint");
    if (!teacher_vgae->trained()) throw StateError("teacher VGAE checkpoint holds untrained parameters");
    if (!test) throw ConfigError("distill_pipeline needs a test stream");
    DistillConfig dc = input_config;
    dc.validate();
    PipelineConfig& config = dc.pipeline;
    config.propagate();
    const KdConfig kd = dc.kd;

    DistillResult out{PipelineResult{VgaeModel(config.vgae, 0), std::nullopt, {}, {}, {}, {}, {}, {}, {}, {}, {}, {},
                                     {}, false, config.fusion, {}, {}},
                      {}, {}, {}, 0, 0, 0, 0, 0, 0, {}, 0.0};
    out.teacher_vgae_checksum = teacher_vgae->params().checksum();
    out.teacher_gat_checksum = teacher_gat->params().checksum();
    PipelineResult& r = out.student;

    auto split = split_stream(train_stream, config.validation_fraction);
    std::vector<GraphInput> normals, attacks;
    for (const auto& g : split.train) (g.label ? attacks : normals).push_back(g);
    if (normals.empty()) throw DataError("training split holds no normal windows; the VGAE cannot be trained");

    // Stage 1: student VGAE with latent guidance.
    auto t0 = Clock::now();
    std::vector<LatentMatrices> teacher_latent(normals.size());
    parallel_for(normals.size(), config.policy,
                 [&](std::size_t i) { teacher_latent[i] = frozen_latent(*teacher_vgae, normals[i]); });
    out.teacher_inference_seconds += seconds_since(t0);

    LatentGuidance guidance;
    nn::Rng proj_rng(nn::Rng::derive(config.seed, 0x9d));
    add_latent_projection(guidance.params, config.vgae.latent_dim, teacher_vgae->config().latent_dim, proj_rng);
    guidance.term = [&](std::span<const nn::Var> bound, const LatentState& lat, std::size_t item) {
        nn::Tape& tape = *bound[0].tape();
        const auto& t = teacher_latent[item];
        nn::Var kl = kd_latent_loss(lat, tape.constant(t.mu), tape.constant(t.log_sigma), bind_latent_projection(bound));
        return nn::scale(kl, 1.0 - kd.alpha);
    };
    progress(config.verbose, "stage 1: student VGAE with latent guidance on " + std::to_string(normals.size()) +
                                 " normal windows");
    t0 = Clock::now();
    auto trained = train_vgae(normals, config.vgae, config.vgae_train, &guidance);
    r.vgae = std::move(trained.model);
    r.vgae_loss = std::move(trained.epoch_loss);
    out.projection = std::move(trained.guidance_params);
    r.timings.vgae_train = seconds_since(t0);
    r.lineage.vgae_train_windows = normals.size();
    r.lineage.validation_windows = split.validation.size();
    r.lineage.events.push_back("student vgae trained on training-split normal windows with teacher latents");

    t0 = Clock::now();
    const VgaeModel& ranker = kd.reuse_teacher_ranking ? *teacher_vgae : r.vgae;
    const auto scores = ranker.anomaly_scores(normals, config.score_mode, config.weights, config.seed, config.policy);
    const auto order = reconstruction_rank(normals, scores);
    std::vector<GraphInput> ranked;
    for (auto i : order) {
        ranked.push_back(normals[i]);
        r.rank_windows.push_back(normals[i].window_start_index);
        r.rank_scores.push_back(scores[i]);
    }
    r.timings.ranking = seconds_since(t0);
    r.lineage.ranked_windows = ranked.size();
    r.lineage.events.push_back(kd.reuse_teacher_ranking ? "training normals ranked by teacher reconstruction error"
                                                        : "training normals ranked by student reconstruction error");

    // Stage 2: student GAT with softened teacher targets.
    if (attacks.empty()) {
        r.vgae_only_mode = true;
        r.effective_fusion = {1.0, 0.0};
        r.lineage.events.push_back("no attack windows in training split: VGAE-only anomaly mode");
    } else {
        r.undersampling = undersample(ranked, attacks, config.ratio);
        const auto& set = r.undersampling.graphs;
        t0 = Clock::now();
        const auto teacher_preds = teacher_gat->predict_all(set, config.policy);
        out.teacher_inference_seconds += seconds_since(t0);
        const ClassifierLoss loss = [&](nn::Var logits, std::size_t item) {
            const auto& tl = teacher_preds[item].logits;
            nn::Var teacher = logits.tape()->constant(nn::Matrix(1, 2, {tl[0], tl[1]}));
            return kd_classifier_loss(logits, teacher, {static_cast<std::uint32_t>(set[item].label)}, kd);
        };
        progress(config.verbose, "stage 2: student GAT with classifier distillation on " +
                                     std::to_string(set.size()) + " windows");
        t0 = Clock::now();
        auto gat = train_gat(set, split.validation, config.gat, config.gat_train, loss);
        r.timings.gat_train = seconds_since(t0);
        r.gat = std::move(gat.model);
        r.gat_log = std::move(gat.log);
        r.lineage.gat_train_windows = set.size();
        r.undersampling.graphs.clear();
        r.undersampling.graphs.shrink_to_fit();
        r.lineage.events.push_back("student gat trained on undersampled set with teacher soft targets");
    }

    t0 = Clock::now();
    std::vector<GraphInput> val_normals;
    for (const auto& g : split.validation)
        if (g.label == 0) val_normals.push_back(g);
    r.calibration = calibrate_vgae(
        r.vgae.anomaly_scores(val_normals, config.score_mode, config.weights, config.seed, config.policy));
    const auto teacher_calibration = calibrate_vgae(
        teacher_vgae->anomaly_scores(val_normals, config.score_mode, config.weights, config.seed, config.policy));
    r.timings.calibration = seconds_since(t0);
    r.lineage.events.push_back("student and teacher vgae calibrated on validation normal windows");

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

    out.teacher_scores =
        score_windows(test_graphs, *teacher_vgae, teacher_calibration, teacher_gat, config.fusion, config.threshold, config);
    out.teacher_gat_only = evaluate(out.teacher_scores, config.threshold, ProbSource::Gat);
    out.teacher_fused = evaluate(out.teacher_scores, config.threshold, ProbSource::Fused);

    out.teacher_vgae_params = teacher_vgae->params().scalar_count();
    out.student_vgae_params = r.vgae.params().scalar_count();
    out.teacher_gat_params = count_params(teacher_gat->config());
    out.student_gat_params = count_params(config.gat);
    if (teacher_vgae->params().checksum() != out.teacher_vgae_checksum ||
        teacher_gat->params().checksum() != out.teacher_gat_checksum)
        throw StateError("teacher parameters changed during distillation");
    progress(config.verbose, "student F1 " + std::to_string(r.gat_only.f1) + " teacher F1 " +
                                 std::to_string(out.teacher_gat_only.f1));
    return out;
}

nlohmann::json distill_report(const DistillResult& d, const DistillConfig& c) {
    nlohmann::json j;
    j["student"] = pipeline_report(d.student, c.pipeline);
    j["kd"] = {{"tau", c.kd.tau},
               {"alpha", c.kd.alpha},
               {"tau_squared", c.kd.tau_squared},
               {"reuse_teacher_ranking", c.kd.reuse_teacher_ranking}};
    j["teacher"] = {{"gat_only", metrics_json(d.teacher_gat_only)}, {"fused", metrics_json(d.teacher_fused)}};
    auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
    j["params"] = {{"teacher_gat", d.teacher_gat_params},
                   {"student_gat", d.student_gat_params},
                   {"gat_ratio", ratio(d.student_gat_params, d.teacher_gat_params)},
                   {"teacher_vgae", d.teacher_vgae_params},
                   {"student_vgae", d.student_vgae_params},
                   {"vgae_ratio", ratio(d.student_vgae_params, d.teacher_vgae_params)}};
    j["comparison"] = {{"teacher_f1", d.teacher_gat_only.f1},
                       {"student_f1", d.student.gat_only.f1},
                       {"f1_gap", d.teacher_gat_only.f1 - d.student.gat_only.f1},
                       {"teacher_accuracy", d.teacher_gat_only.accuracy},
                       {"student_accuracy", d.student.gat_only.accuracy}};
    j["timings_seconds"] = {{"teacher_inference", d.teacher_inference_seconds},
                            {"student_vgae_train", d.student.timings.vgae_train},
                            {"student_gat_train", d.student.timings.gat_train},
                            {"evaluation", d.student.timings.evaluation}};
    j["teacher_checksums"] = {{"vgae", d.teacher_vgae_checksum}, {"gat", d.teacher_gat_checksum}};
    return j;
}

}  // namespace canids
