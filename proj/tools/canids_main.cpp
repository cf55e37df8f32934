#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"

using namespace canids::cli;

namespace {

void add_common(CLI::App* sub, CommonOptions& c) {
    sub->add_option("--out-dir", c.out_dir, "Directory receiving artifacts, lock file and manifest.json");
    sub->add_option("--seed", c.seed, "Seed for every random choice");
    sub->add_option("--config", c.config, "key = value run config (JSON scenario for synth)");
    sub->add_flag("--quiet", c.quiet, "No progress lines on stderr");
    sub->add_flag("--serial", c.serial, "Run the serial reference kernels");
}

void add_model_flags(CLI::App* sub, CommonOptions& c) {
    sub->add_option("--preset", c.preset, "Model size")->check(CLI::IsMember({"teacher", "student"}));
    sub->add_option("--ratio", c.ratio, "Normal-to-attack undersampling ratio");
    sub->add_option("--fusion-weights", c.fusion_weights, "VGAE,GAT fusion weights, e.g. 0.15,0.85");
    sub->add_option("--threshold", c.threshold, "Decision threshold on attack probability");
}

// `--out FILE` is shorthand for --out-dir <dir of FILE> plus that file name.
void add_out_file(CLI::App* sub, std::optional<std::filesystem::path>& out) {
    sub->add_option("--out", out, "Output file (alternative to --out-dir)")->excludes("--out-dir");
}

void resolve_out(const std::optional<std::filesystem::path>& out, CommonOptions& common, std::string& name) {
    if (!out) return;
    if (!out->has_filename()) throw UsageError("usage", "--out needs a file name");
    common.out_dir = out->has_parent_path() ? out->parent_path() : std::filesystem::path(".");
    name = out->filename().string();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"canids: two-stage graph intrusion detection for CAN bus logs"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "canids 0.1.0");

    CommonOptions common;
    SynthOptions synth;
    IngestOptions ingest;
    BuildGraphsOptions build;
    TrainVgaeOptions tvgae;
    UndersampleOptions under;
    TrainGatOptions tgat;
    DistillOptions distill;
    EvaluateOptions eval;
    ExportOptions exp;
    ReportOptions report;
    RunOptions run;
    std::optional<std::filesystem::path> out_file;
    std::function<CommandResult()> action;
    std::string command;

    auto bind = [&](CLI::App* sub, std::function<CommandResult()> fn) {
        sub->callback([&, sub, fn] {
            command = sub->get_name();
            action = fn;
        });
    };

    auto* s = app.add_subcommand("synth", "Generate a labeled synthetic CAN log (log.csv)");
    add_common(s, common);
    s->add_option("--frames", synth.frames, "Frame count of the built-in scenario (default 20000)");
    s->add_option("--duration", synth.duration, "Scenario duration in seconds");
    add_out_file(s, out_file);
    bind(s, [&] { return cmd_synth(common, synth); });

    s = app.add_subcommand("ingest", "Parse a dataset log into normalized frames.csv");
    add_common(s, common);
    s->add_option("input,--input,--in", ingest.input, "Input CSV log")->required();
    s->add_option("--format", ingest.format, "car-hacking or generic")->check(CLI::IsMember({"car-hacking", "generic"}));
    s->add_option("--columns,--column-map", ingest.columns,
                  "Column map for generic logs, e.g. ts=0,id=1,dlc=2,data=3,label=11");
    add_out_file(s, out_file);
    bind(s, [&] { return cmd_ingest(common, ingest); });

    s = app.add_subcommand("build-graphs", "Slide a window over a log and write graphs.txt");
    add_common(s, common);
    s->add_option("--input,--in", build.input, "Car-Hacking style log (synth or ingest output)")->required();
    s->add_option("--window", build.window, "Frames per window (>= 2)");
    s->add_option("--stride", build.stride, "Frames between window starts (default: window)");
    s->add_flag("--undirected", build.undirected, "Build undirected graphs");
    add_out_file(s, out_file);
    bind(s, [&] { return cmd_build_graphs(common, build); });

    s = app.add_subcommand("train-vgae", "Train the VGAE on training-split normal windows");
    add_common(s, common);
    add_model_flags(s, common);
    s->add_option("--graphs", tvgae.graphs, "Training stream graphs")->required();
    bind(s, [&] { return cmd_train_vgae(common, tvgae); });

    s = app.add_subcommand("undersample", "Rank training normals by reconstruction error and undersample");
    add_common(s, common);
    add_model_flags(s, common);
    s->add_option("--graphs", under.graphs, "Training stream graphs")->required();
    s->add_option("--vgae", under.vgae, "VGAE checkpoint")->required();
    bind(s, [&] { return cmd_undersample(common, under); });

    s = app.add_subcommand("train-gat", "Train the GAT classifier on the undersampled set");
    add_common(s, common);
    add_model_flags(s, common);
    s->add_option("--train", tgat.train, "Undersampled graphs")->required();
    s->add_option("--graphs", tgat.graphs, "Training stream graphs (validation split)")->required();
    bind(s, [&] { return cmd_train_gat(common, tgat); });

    s = app.add_subcommand("distill", "Distill student VGAE and GAT from teacher checkpoints");
    add_common(s, common);
    add_model_flags(s, common);
    s->add_option("--graphs", distill.graphs, "Training stream graphs")->required();
    s->add_option("--test", distill.test, "Test stream graphs")->required();
    s->add_option("--teacher-vgae", distill.teacher_vgae, "Teacher VGAE checkpoint")->required();
    s->add_option("--teacher-gat", distill.teacher_gat, "Teacher GAT checkpoint")->required();
    s->add_option("--tau", common.tau, "Softmax temperature");
    s->add_option("--alpha", common.alpha, "Weight of the hard-label loss");
    s->add_flag("--reuse-teacher-ranking", distill.reuse_teacher_ranking, "Rank normals with the teacher VGAE");
    bind(s, [&] { return cmd_distill(common, distill); });

    s = app.add_subcommand("evaluate", "Score a test stream, or recompute metrics from scores.csv");
    add_common(s, common);
    add_model_flags(s, common);
    auto* scores = s->add_option("--scores", eval.scores, "Existing scores.csv");
    auto* g = s->add_option("--graphs", eval.graphs, "Training stream graphs (calibration split)");
    auto* t = s->add_option("--test", eval.test, "Test stream graphs");
    auto* v = s->add_option("--vgae", eval.vgae, "VGAE checkpoint");
    auto* ga = s->add_option("--gat", eval.gat, "GAT checkpoint (omit for VGAE-only scoring)");
    scores->excludes(g)->excludes(t)->excludes(v)->excludes(ga);
    bind(s, [&, g, t, v, scores] {
        if (scores->count() == 0 && (g->count() == 0 || t->count() == 0 || v->count() == 0))
            throw UsageError("usage", "evaluate needs --scores, or --graphs, --test and --vgae");
        return cmd_evaluate(common, eval);
    });

    s = app.add_subcommand("export-embeddings", "Write per-window GAT and/or VGAE embeddings");
    add_common(s, common);
    s->add_option("--graphs", exp.graphs, "Graphs to embed")->required();
    s->add_option("--gat", exp.gat, "GAT checkpoint");
    s->add_option("--vgae", exp.vgae, "VGAE checkpoint");
    bind(s, [&] { return cmd_export_embeddings(common, exp); });

    s = app.add_subcommand("report", "Collect the JSON artifacts of a directory into summary.json");
    add_common(s, common);
    s->add_option("--dir", report.dir, "Artifact directory")->required();
    bind(s, [&] { return cmd_report(common, report); });

    s = app.add_subcommand("run", "Both stages end to end from two Car-Hacking style logs");
    add_common(s, common);
    add_model_flags(s, common);
    s->add_option("--train-log", run.train_log, "Training log")->required();
    s->add_option("--test-log", run.test_log, "Test log")->required();
    s->add_option("--window", run.window, "Frames per window (>= 2)");
    s->add_option("--stride", run.stride, "Frames between window starts (default: window)");
    bind(s, [&] { return cmd_run(common, run); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: usage: %s\n", e.what());
        std::fprintf(stderr, "run 'canids --help' for usage\n");
        return kUsageExit;
    }

    const std::vector<std::string> args(argv + 1, argv + argc);
    const auto start = std::chrono::steady_clock::now();
    try {
        if (command == "synth") resolve_out(out_file, common, synth.out_name);
        if (command == "ingest") resolve_out(out_file, common, ingest.out_name);
        if (command == "build-graphs") resolve_out(out_file, common, build.out_name);
        DirLock lock(common.out_dir);
        const auto result = action();
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        update_manifest(common.out_dir, command, args, common, result, seconds);
        std::cout << result.summary.dump() << "\n";
        return 0;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s: %s\n", e.category(), e.what());
        return kUsageExit;
    } catch (const canids::Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", e.category(), e.what());
        return kRuntimeExit;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return kRuntimeExit;
    }
}
