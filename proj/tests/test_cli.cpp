#include <sys/wait.h>

#include <cstdlib>
#include <string>

#include "canids/io.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support/tempdir.hpp"

using canids::read_file;
using canids::write_file_atomic;
using canids::testing::TempDir;
using nlohmann::json;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

Outcome canids_cli(const std::string& args, const TempDir& dir) {
    const auto out = dir / ".stdout", err = dir / ".stderr";
    const std::string cmd = "cd '" + dir.path().string() + "' && '" CANIDS_CLI_PATH "' " + args + " > '" +
                            out.string() + "' 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.out = read_file(out);
    o.err = read_file(err);
    std::filesystem::remove(out);
    std::filesystem::remove(err);
    return o;
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

TEST_CASE("usage errors exit 2") {
    TempDir dir;
    auto r = canids_cli("", dir);
    CHECK(r.code == 2);
    r = canids_cli("frobnicate", dir);
    CHECK(r.code == 2);
    CHECK(starts_with(r.err, "error: usage"));
    r = canids_cli("synth --bogus", dir);
    CHECK(r.code == 2);
    r = canids_cli("build-graphs --input missing.csv", dir);
    CHECK(r.code == 2);
    CHECK(starts_with(r.err, "error: missing-file"));
    CHECK(r.out.empty());
    r = canids_cli("train-vgae --graphs missing.txt --preset middling", dir);
    CHECK(r.code == 2);
    r = canids_cli("evaluate --graphs g.txt", dir);
    CHECK(r.code == 2);
    r = canids_cli("--version", dir);
    CHECK(r.code == 0);
}

TEST_CASE("synth is deterministic and prints only JSON") {
    TempDir dir;
    const auto a = canids_cli("synth --seed 7 --frames 5000 --out-dir a", dir);
    const auto b = canids_cli("synth --seed 7 --frames 5000 --out-dir b", dir);
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    CHECK(read_file(dir / "a/log.csv") == read_file(dir / "b/log.csv"));
    const auto summary = json::parse(a.out);
    CHECK(summary.at("frames").get<std::size_t>() == 5000);
    const auto c = canids_cli("synth --seed 8 --frames 5000 --out-dir c", dir);
    CHECK(read_file(dir / "a/log.csv") != read_file(dir / "c/log.csv"));
}

TEST_CASE("ingest and build-graphs") {
    TempDir dir;
    REQUIRE(canids_cli("synth --seed 1 --frames 3000 --out logs/x.csv", dir).code == 0);
    auto r = canids_cli("ingest logs/x.csv --out logs/frames.csv", dir);
    REQUIRE(r.code == 0);
    CHECK(read_file(dir / "logs/frames.csv") == read_file(dir / "logs/x.csv"));

    r = canids_cli("build-graphs --in logs/frames.csv --window 1", dir);
    CHECK(r.code == 2);
    CHECK(starts_with(r.err, "error: usage"));

    r = canids_cli("build-graphs --in logs/frames.csv --window 50 --out g/graphs.txt", dir);
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out).at("stats").at("count").get<std::size_t>() == 60);
    CHECK(starts_with(read_file(dir / "g/graphs.txt"), "canids-graphs 1\n"));

    // a graph cache where a checkpoint is expected is a schema error
    r = canids_cli("undersample --graphs g/graphs.txt --vgae g/graphs.txt", dir);
    CHECK(r.code == 2);
    CHECK(starts_with(r.err, "error: schema"));

    // a malformed row after a valid first row fails at parse time
    write_file_atomic(dir / "bad.csv", "1.0,0100,0,R\n2.0,0100,0,R\n3.0,zz,0,R\n");
    r = canids_cli("ingest bad.csv --out-dir bad", dir);
    CHECK(r.code == 1);
    CHECK(starts_with(r.err, "error: parse: line 3"));
}

TEST_CASE("evaluate --scores recomputes metrics from a scores file") {
    TempDir dir;
    // tp = 2, fp = 1, tn = 3, fn = 1 on the predicted column
    write_file_atomic(dir / "scores.csv",
                      "window_start_index,vgae_score,vgae_prob,gat_prob,fused_prob,predicted,truth\n"
                      "0,1.0,0.0,0.9,0.765,1,1\n"
                      "100,2.0,0.1,0.8,0.695,1,1\n"
                      "200,0.5,0.0,0.7,0.595,1,0\n"
                      "300,0.4,0.0,0.1,0.085,0,0\n"
                      "400,0.3,0.0,0.2,0.17,0,0\n"
                      "500,0.2,0.0,0.0,0.0,0,0\n"
                      "600,3.0,1.0,0.3,0.405,0,1\n");
    const auto r = canids_cli("evaluate --scores scores.csv --out-dir eval", dir);
    REQUIRE(r.code == 0);
    const auto m = json::parse(read_file(dir / "eval/metrics.json"));
    const auto& p = m.at("predicted");
    CHECK(p.at("tp").get<int>() == 2);
    CHECK(p.at("fp").get<int>() == 1);
    CHECK(p.at("tn").get<int>() == 3);
    CHECK(p.at("fn").get<int>() == 1);
    CHECK(p.at("f1").get<double>() == doctest::Approx(4.0 / 6.0).epsilon(1e-15));
    CHECK(p.at("accuracy").get<double>() == doctest::Approx(5.0 / 7.0).epsilon(1e-15));
    // vgae_score ranks attacks: attack scores {1, 2, 3} vs benign {0.5, 0.4, 0.3, 0.2}
    CHECK(m.at("vgae_score_roc_auc").get<double>() == 1.0);
    CHECK(json::parse(r.out) == json::parse(r.out));

    write_file_atomic(dir / "wrong.csv", "a,b,c\n1,2,3\n");
    CHECK(canids_cli("evaluate --scores wrong.csv --out-dir eval2", dir).code == 2);
}

TEST_CASE("lock file and manifest") {
    TempDir dir;
    std::filesystem::create_directories(dir / "out");
    write_file_atomic(dir / "out/.canids.lock", "");
    auto r = canids_cli("synth --frames 2000 --out-dir out", dir);
    CHECK(r.code == 1);
    CHECK(starts_with(r.err, "error: state"));
    CHECK_FALSE(std::filesystem::exists(dir / "out/log.csv"));
    std::filesystem::remove(dir / "out/.canids.lock");

    r = canids_cli("synth --frames 2000 --seed 3 --out-dir out", dir);
    REQUIRE(r.code == 0);
    CHECK_FALSE(std::filesystem::exists(dir / "out/.canids.lock"));
    r = canids_cli("build-graphs --input out/log.csv --window 40 --out-dir out", dir);
    REQUIRE(r.code == 0);

    const auto manifest = json::parse(read_file(dir / "out/manifest.json"));
    CHECK(manifest.at("format") == "canids-manifest 1");
    const auto& synth = manifest.at("entries").at("synth");
    CHECK(synth.at("seed").get<std::uint64_t>() == 3);
    bool listed = false;
    for (const auto& a : synth.at("artifacts"))
        if (a.at("path").get<std::string>().find("log.csv") != std::string::npos) {
            listed = true;
            CHECK(a.at("bytes").get<std::size_t>() == std::filesystem::file_size(dir / "out/log.csv"));
        }
    CHECK(listed);
    CHECK(manifest.at("entries").contains("build-graphs"));

    r = canids_cli("report --dir out --out-dir out", dir);
    REQUIRE(r.code == 0);
    CHECK(std::filesystem::exists(dir / "out/summary.json"));
}
