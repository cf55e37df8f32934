#include <algorithm>
#include <cmath>

#include "canids/error.hpp"
#include "canids/metrics.hpp"
#include "canids/pipeline.hpp"
#include "doctest.h"
#include "oracles/oracles.hpp"
#include "support/cases.hpp"
#include "support/small_run.hpp"
#include "support/tempdir.hpp"

using namespace canids;

namespace {

std::vector<GraphInput> labeled_graphs(std::size_t count, int label, std::size_t first_start) {
    nn::Rng rng(first_start + 1);
    const auto base = testing::random_graph(rng, 10, 3);
    std::vector<GraphInput> out(count, base);
    for (std::size_t i = 0; i < count; ++i) {
        out[i].label = label;
        out[i].window_start_index = first_start + i;
    }
    return out;
}

double sorted_quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

}  // namespace

TEST_CASE("undersampling keeps the rank prefix at the requested ratio") {
    const auto normals = labeled_graphs(1000, 0, 0), attacks = labeled_graphs(100, 1, 5000);
    const auto r = undersample(normals, attacks, 4.0);
    CHECK(r.normal_count == 400);
    CHECK(r.attack_count == 100);
    CHECK(r.graphs.size() == 500);
    for (std::size_t i = 0; i < 400; ++i) CHECK(r.normal_windows[i] == normals[i].window_start_index);
    CHECK(r.achieved_ratio == 4.0);

    const auto few = undersample(std::span(normals).first(300), attacks, 4.0);
    CHECK(few.normal_count == 300);
    CHECK(few.achieved_ratio == 3.0);

    nn::Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = rng.below(300), a = 1 + rng.below(80);
        const double ratio = rng.uniform(0.1, 6.0);
        const auto u = undersample(std::span(normals).first(n), std::span(attacks).first(a), ratio);
        const auto expected = std::min<std::size_t>(static_cast<std::size_t>(std::ceil(ratio * a)), n);
        CHECK(u.normal_count == expected);
        CHECK(u.graphs.size() == expected + a);
    }
    CHECK_THROWS_AS(undersample(normals, {}, 4.0), DataError);
    CHECK_THROWS_AS(undersample(normals, attacks, 0.0), ConfigError);
}

TEST_CASE("quantile and calibration") {
    nn::Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> v(1 + rng.below(200));
        for (auto& x : v) x = rng.uniform(-3, 3);
        const double q = rng.uniform();
        CHECK(quantile(v, q) == doctest::Approx(sorted_quantile(v, q)).epsilon(1e-14));
    }

    std::vector<double> normal(100);
    for (auto& x : normal) x = rng.uniform(1, 2);
    const auto cal = calibrate_vgae(normal);
    CHECK_FALSE(cal.degenerate);
    CHECK(cal(cal.q50) == 0.0);
    CHECK(cal(cal.q995) == 1.0);
    CHECK(cal(cal.q995 + 10) == 1.0);
    CHECK(cal(-100.0) == 0.0);
    std::vector<double> probe(500);
    for (auto& x : probe) x = rng.uniform(0, 3);
    std::sort(probe.begin(), probe.end());
    for (std::size_t i = 1; i < probe.size(); ++i) CHECK(cal(probe[i]) >= cal(probe[i - 1]));

    CHECK_THROWS_AS(calibrate_vgae(std::vector<double>(19, 1.0)), DataError);
    const auto flat = calibrate_vgae(std::vector<double>(20, 1.0));
    CHECK(flat.degenerate);
    CHECK_FALSE(flat.warning.empty());
    CHECK(flat(5.0) == 0.0);
}

TEST_CASE("fusion") {
    CHECK(fuse(0.0, 1.0) == 0.85);
    CHECK(fuse(1.0, 0.0) == 0.15);
    nn::Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double p = rng.uniform(), a = rng.uniform(), g = rng.uniform();
        CHECK(std::abs(fuse(p, p) - p) <= 1e-12);
        const double f = fuse(a, g);
        CHECK(std::abs(f - (0.15 * a + 0.85 * g)) <= 1e-12);
        CHECK(f >= 0.0);
        CHECK(f <= 1.0);
    }
    const auto w = parse_fusion_weights("0.3,0.7");
    CHECK(w.anomaly == 0.3);
    CHECK(w.gat == 0.7);
    CHECK_THROWS_AS(parse_fusion_weights("0.5,0.6"), ConfigError);
    CHECK_THROWS_AS(parse_fusion_weights("0.5"), ConfigError);
    CHECK_THROWS_AS(parse_fusion_weights("a,b"), ConfigError);
}

TEST_CASE("metrics against the confusion-matrix oracle") {
    const auto m = metrics_from_counts(1, 1, 1, 1);
    CHECK(m.precision == 0.5);
    CHECK(m.recall == 0.5);
    CHECK(m.f1 == 0.5);
    CHECK(m.accuracy == 0.5);
    const std::vector<int> truth{1, 0, 1, 0};
    const auto perfect = compute_metrics(truth, truth);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.f1 == 1.0);
    CHECK(compute_metrics(std::vector<int>{0, 0}, std::vector<int>{0, 0}).f1 == 0.0);

    nn::Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> pred(1000), tr(1000);
        std::vector<double> score(1000);
        const double bias = rng.uniform();
        for (std::size_t i = 0; i < 1000; ++i) {
            pred[i] = rng.uniform() < bias;
            tr[i] = rng.uniform() < 0.3;
            score[i] = std::round(rng.uniform(0, 10) + 3 * tr[i]);  // ties on purpose
        }
        const auto got = compute_metrics(pred, tr);
        const auto want = oracle::brute_metrics(pred, tr);
        CHECK(got.tp == want.tp);
        CHECK(got.fp == want.fp);
        CHECK(got.tn == want.tn);
        CHECK(got.fn == want.fn);
        CHECK(got.accuracy == want.accuracy);
        CHECK(got.precision == want.precision);
        CHECK(got.recall == want.recall);
        CHECK(got.f1 == want.f1);
        if (got.precision + got.recall > 0)
            CHECK(got.f1 == doctest::Approx(2 * got.precision * got.recall / (got.precision + got.recall)).epsilon(1e-12));
        CHECK(roc_auc(score, tr) == doctest::Approx(oracle::brute_auc(score, tr)).epsilon(1e-12));
    }
}

TEST_CASE("chronological split") {
    const auto g = labeled_graphs(10, 0, 0);
    const auto s = split_stream(g, 0.2);
    REQUIRE(s.train.size() == 8);
    REQUIRE(s.validation.size() == 2);
    CHECK(s.train.back().window_start_index == 7);
    CHECK(s.validation.front().window_start_index == 8);
    CHECK_THROWS(split_stream(g, 1.5));
}

TEST_CASE("scores CSV round-trip") {
    nn::Rng rng(5);
    std::vector<ScoredWindow> rows(50);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& r = rows[i];
        r.window_start_index = i * 100;
        r.vgae_score = rng.uniform(0, 40);
        r.vgae_prob = rng.uniform();
        r.gat_prob = rng.uniform();
        r.fused_prob = fuse(r.vgae_prob, r.gat_prob);
        r.predicted = r.fused_prob >= 0.5;
        r.truth = rng.below(2);
    }
    CHECK(parse_scores_csv(scores_csv(rows)) == rows);
    CHECK_THROWS_AS(parse_scores_csv("garbage\n1,2\n"), ParseError);

    const auto m = evaluate(rows, 0.5, ProbSource::Fused);
    std::vector<int> pred, truth;
    for (const auto& r : rows) {
        pred.push_back(r.predicted);
        truth.push_back(r.truth);
    }
    CHECK(m.f1 == compute_metrics(pred, truth).f1);
}

TEST_CASE("run configuration file") {
    const auto kv = parse_key_values("# comment\nseed = 9\npreset = student\nratio=3\nfusion_weights = 0.2,0.8\nextra = 1\n");
    PipelineConfig c;
    const auto rest = apply_run_config(kv, c);
    CHECK(c.seed == 9);
    CHECK(c.ratio == 3.0);
    CHECK(c.gat.num_layers == GatConfig::student().num_layers);
    CHECK(c.vgae.latent_dim == VgaeConfig::student().latent_dim);
    CHECK(c.fusion.anomaly == 0.2);
    CHECK(rest.size() == 1);
    CHECK(rest.count("extra") == 1);
    CHECK_THROWS_AS(parse_key_values("no equals sign\n"), ParseError);
    PipelineConfig bad;
    CHECK_THROWS_AS(apply_run_config({{"ratio", "abc"}}, bad), ConfigError);
}

TEST_CASE("two-stage run: exact undersampling, lineage and determinism") {
    const auto& data = testing::small_run();
    std::size_t test_reads = 0;
    const TestSource test = [&] {
        ++test_reads;
        return data.test;
    };
    const auto config = testing::quick_config();
    const auto r = run_two_stage(data.train, test, config);
    CHECK(test_reads == 1);
    REQUIRE(r.gat);
    CHECK_FALSE(r.vgae_only_mode);
    CHECK(r.lineage.vgae_train_attack_windows == 0);
    CHECK(r.lineage.events.back().find("test stream") != std::string::npos);
    for (std::size_t i = 0; i + 1 < r.lineage.events.size(); ++i)
        CHECK(r.lineage.events[i].find("test") == std::string::npos);

    const auto split = split_stream(data.train, config.validation_fraction);
    std::size_t attacks = 0, normals = 0;
    for (const auto& g : split.train) (g.label ? attacks : normals) += 1;
    REQUIRE(attacks > 0);
    const auto expected = std::min<std::size_t>(static_cast<std::size_t>(std::ceil(4.0 * attacks)), normals);
    CHECK(r.undersampling.normal_count == expected);
    CHECK(r.undersampling.attack_count == attacks);
    CHECK(r.rank_windows.size() == normals);
    for (std::size_t i = 0; i < expected; ++i) CHECK(r.undersampling.normal_windows[i] == r.rank_windows[i]);
    for (std::size_t i = 1; i < r.rank_scores.size(); ++i) CHECK(r.rank_scores[i] <= r.rank_scores[i - 1]);

    REQUIRE(r.scores.size() == data.test.size());
    for (const auto& s : r.scores) {
        CHECK(s.fused_prob == fuse(s.vgae_prob, s.gat_prob, config.fusion));
        CHECK(s.predicted == (s.fused_prob >= config.threshold ? 1 : 0));
        CHECK(s.vgae_prob >= 0.0);
        CHECK(s.vgae_prob <= 1.0);
    }

    const auto again = run_two_stage(data.train, [&] { return data.test; }, config);
    CHECK(again.scores == r.scores);
    CHECK(again.fused.f1 == r.fused.f1);
    CHECK(again.gat_only.f1 == r.gat_only.f1);

    const auto report = pipeline_report(r, config);
    CHECK(report.contains("metrics"));
    testing::TempDir dir;
    const auto written = write_pipeline_outputs(dir.path(), r, config);
    for (const auto& p : written) CHECK(std::filesystem::exists(p));
    CHECK(std::filesystem::exists(dir / "scores.csv"));
    CHECK(std::filesystem::exists(dir / "report.json"));
}

TEST_CASE("attack-free training data runs VGAE-only") {
    const auto& data = testing::small_run();
    std::vector<GraphInput> benign;
    for (const auto& g : data.train)
        if (g.label == 0) benign.push_back(g);
    const auto r = run_two_stage(benign, [&] { return data.test; }, testing::quick_config());
    CHECK(r.vgae_only_mode);
    CHECK_FALSE(r.gat);
    CHECK(r.effective_fusion.anomaly == 1.0);
    CHECK(r.effective_fusion.gat == 0.0);
    for (const auto& s : r.scores) {
        CHECK(s.gat_prob == 0.0);
        CHECK(s.predicted == (s.vgae_prob >= 0.5 ? 1 : 0));
    }
}
