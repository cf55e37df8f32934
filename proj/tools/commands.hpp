#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "canids/error.hpp"
#include "json.hpp"

namespace canids::cli {

// Bad invocation: unknown flag, missing input file or input of the wrong schema.
// Exits with kUsageExit; the category is "usage", "missing-file" or "schema".
class UsageError : public Error {
public:
    UsageError(std::string category, const std::string& what) : Error(what), category_(std::move(category)) {}
    const char* category() const noexcept override { return category_.c_str(); }

private:
    std::string category_;
};

inline constexpr int kUsageExit = 2;
inline constexpr int kRuntimeExit = 1;

// Flags shared by every subcommand. Optional fields are unset when the flag was not
// given, so a --config file can supply them.
struct CommonOptions {
    std::filesystem::path out_dir = ".";
    std::optional<std::uint64_t> seed;  // 0 when neither the flag nor the config sets it
    std::optional<std::filesystem::path> config;
    std::optional<std::string> preset;
    std::optional<double> ratio;
    std::optional<double> tau;
    std::optional<double> alpha;
    std::optional<std::string> fusion_weights;
    std::optional<double> threshold;
    bool quiet = false;
    bool serial = false;
};

struct SynthOptions {
    std::optional<std::size_t> frames;
    std::optional<double> duration;
    std::string out_name = "log.csv";
};

struct IngestOptions {
    std::filesystem::path input;
    std::string format = "car-hacking";
    std::string columns;
    std::string out_name = "frames.csv";
};

struct BuildGraphsOptions {
    std::filesystem::path input;
    std::size_t window = 100;
    std::optional<std::size_t> stride;
    bool undirected = false;
    std::string out_name = "graphs.txt";
};

struct TrainVgaeOptions {
    std::filesystem::path graphs;
};

struct UndersampleOptions {
    std::filesystem::path graphs;
    std::filesystem::path vgae;
};

struct TrainGatOptions {
    std::filesystem::path train;
    std::filesystem::path graphs;
};

struct DistillOptions {
    std::filesystem::path graphs;
    std::filesystem::path test;
    std::filesystem::path teacher_vgae;
    std::filesystem::path teacher_gat;
    bool reuse_teacher_ranking = false;
};

struct EvaluateOptions {
    std::optional<std::filesystem::path> scores;  // recompute metrics from an existing scores.csv
    std::filesystem::path graphs;
    std::filesystem::path test;
    std::filesystem::path vgae;
    std::optional<std::filesystem::path> gat;
};

struct ExportOptions {
    std::filesystem::path graphs;
    std::optional<std::filesystem::path> gat;
    std::optional<std::filesystem::path> vgae;
};

struct ReportOptions {
    std::filesystem::path dir;
};

struct RunOptions {
    std::filesystem::path train_log;
    std::filesystem::path test_log;
    std::size_t window = 100;
    std::optional<std::size_t> stride;
};

// Outcome of one subcommand: the JSON printed on stdout and the files it wrote.
struct CommandResult {
    nlohmann::json summary;
    std::vector<std::filesystem::path> artifacts;
};

CommandResult cmd_synth(const CommonOptions& common, const SynthOptions& opts);
CommandResult cmd_ingest(const CommonOptions& common, const IngestOptions& opts);
CommandResult cmd_build_graphs(const CommonOptions& common, const BuildGraphsOptions& opts);
CommandResult cmd_train_vgae(const CommonOptions& common, const TrainVgaeOptions& opts);
CommandResult cmd_undersample(const CommonOptions& common, const UndersampleOptions& opts);
CommandResult cmd_train_gat(const CommonOptions& common, const TrainGatOptions& opts);
CommandResult cmd_distill(const CommonOptions& common, const DistillOptions& opts);
CommandResult cmd_evaluate(const CommonOptions& common, const EvaluateOptions& opts);
CommandResult cmd_export_embeddings(const CommonOptions& common, const ExportOptions& opts);
CommandResult cmd_report(const CommonOptions& common, const ReportOptions& opts);
CommandResult cmd_run(const CommonOptions& common, const RunOptions& opts);

// Exclusive writer lock on an output directory, released on destruction.
class DirLock {
public:
    explicit DirLock(const std::filesystem::path& dir);
    ~DirLock();
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    std::filesystem::path path_;
};

inline constexpr const char* kLockFile = ".canids.lock";
inline constexpr const char* kManifestFile = "manifest.json";

// Merges this invocation's entry into <out_dir>/manifest.json.
void update_manifest(const std::filesystem::path& out_dir, const std::string& command,
                     const std::vector<std::string>& argv, const CommonOptions& common, const CommandResult& result,
                     double seconds);

std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace canids::cli
