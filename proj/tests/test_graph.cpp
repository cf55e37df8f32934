#include <cmath>
#include <map>
#include <set>

#include "canids/error.hpp"
#include "canids/graph.hpp"
#include "canids/graph_cache.hpp"
#include "canids/graph_input.hpp"
#include "doctest.h"
#include "oracles/oracles.hpp"
#include "support/cases.hpp"
#include "support/tempdir.hpp"

using namespace canids;

namespace {

std::vector<CanFrame> frames_with_ids(std::initializer_list<std::uint16_t> ids) {
    std::vector<CanFrame> frames;
    double t = 0.0;
    for (auto id : ids) {
        CanFrame f;
        f.timestamp = t += 0.01;
        f.can_id = id;
        frames.push_back(f);
    }
    return frames;
}

void check_against_oracle(const std::vector<CanFrame>& frames, std::size_t start, std::size_t window,
                          bool directed) {
    const auto g = build_window(frames, start, {window, window, directed});
    const auto brute = oracle::brute_window(frames, start, window, directed);

    REQUIRE(g.num_nodes() == brute.nodes.size());
    std::map<std::uint16_t, std::size_t> index;
    for (std::size_t i = 0; i < g.num_nodes(); ++i) index[g.node_ids[i]] = i;
    REQUIRE(index.size() == g.num_nodes());
    for (const auto& b : brute.nodes) {
        REQUIRE(index.count(b.can_id) == 1);
        const auto& f = g.features[index[b.can_id]];
        CHECK(std::abs(f.normalized_id - b.normalized_id) <= 1e-12);
        CHECK(std::abs(f.frequency - b.frequency) <= 1e-12);
        CHECK(std::abs(f.mean_payload - b.mean_payload) <= 1e-12);
    }

    std::map<std::pair<std::uint16_t, std::uint16_t>, std::size_t> edges;
    std::size_t total = 0;
    for (const auto& e : g.edges) {
        auto key = std::make_pair(g.node_ids[e.src], g.node_ids[e.dst]);
        if (!directed) {
            CHECK(e.src <= e.dst);
            if (key.first > key.second) std::swap(key.first, key.second);
        }
        CHECK(edges.count(key) == 0);
        edges[key] = e.weight;
        total += e.weight;
    }
    CHECK(edges == brute.edges);
    CHECK(total == window - 1);
    CHECK(g.label == brute.label);
    CHECK(g.window_start_index == start);

    // first-appearance node order
    std::set<std::uint16_t> seen;
    std::vector<std::uint16_t> order;
    for (std::size_t i = start; i < start + window; ++i)
        if (seen.insert(frames[i].can_id).second) order.push_back(frames[i].can_id);
    CHECK(order == g.node_ids);
}

}  // namespace

TEST_CASE("[A,B,A,B] window") {
    const auto frames = frames_with_ids({10, 20, 10, 20});
    const auto g = build_window(frames, 0, {4, 4, true});
    REQUIRE(g.num_nodes() == 2);
    CHECK(g.node_ids == std::vector<std::uint16_t>{10, 20});
    CHECK(g.features[0].frequency == 0.5);
    CHECK(g.features[1].frequency == 0.5);
    REQUIRE(g.edges.size() == 2);
    CHECK(g.edges[0] == Edge{0, 1, 2});
    CHECK(g.edges[1] == Edge{1, 0, 1});
    CHECK(g.label == 0);
}

TEST_CASE("single-ID window has one self-edge of weight W-1") {
    std::vector<CanFrame> frames(100);
    for (auto& f : frames) f.can_id = 42;
    const auto g = build_window(frames, 0, {100, 100, true});
    REQUIRE(g.num_nodes() == 1);
    CHECK(g.features[0].frequency == 1.0);
    CHECK(g.features[0].normalized_id == 42.0 / 2047.0);
    REQUIRE(g.edges.size() == 1);
    CHECK(g.edges[0] == Edge{0, 0, 99});
}

TEST_CASE("one attack frame labels the window") {
    auto frames = frames_with_ids({1, 2, 3, 4, 5, 6, 7, 8});
    frames[6].label = Label::Attack;
    const auto graphs = build_windows(frames, {4, 4, true});
    REQUIRE(graphs.size() == 2);
    CHECK(graphs[0].label == 0);
    CHECK(graphs[1].label == 1);
}

TEST_CASE("dlc-0 frames do not dilute mean payload") {
    auto frames = frames_with_ids({5, 5, 6});
    frames[0].dlc = 2;
    frames[0].payload[0] = 255;
    frames[0].payload[1] = 0;
    const auto g = build_window(frames, 0, {3, 3, true});
    CHECK(g.features[0].mean_payload == 0.5);
    CHECK(g.features[1].mean_payload == 0.0);
}

TEST_CASE("random sequences match the brute-force builder") {
    nn::Rng rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t length = 2 + rng.below(299);
        const std::size_t alphabet = 1 + rng.below(20);
        const auto frames = testing::random_frames(rng, length, alphabet, 0.05);
        const std::size_t window = 2 + rng.below(length - 1);
        const std::size_t start = rng.below(length - window + 1);
        check_against_oracle(frames, start, window, trial % 3 != 0);
    }
}

TEST_CASE("window invariants over a stream") {
    nn::Rng rng(5);
    const auto frames = testing::random_frames(rng, 1000, 15);
    for (std::size_t stride : {1, 7, 50}) {
        const auto graphs = build_windows(frames, {50, stride, true});
        CHECK(graphs.size() == (1000 - 50) / stride + 1);
        for (std::size_t i = 0; i < graphs.size(); ++i) {
            const auto& g = graphs[i];
            CHECK(g.window_start_index == i * stride);
            CHECK(g.num_nodes() <= 15);
            double freq = 0.0;
            for (const auto& f : g.features) {
                freq += f.frequency;
                CHECK(std::isfinite(f.mean_payload));
                CHECK(f.frequency >= 0.0);
                CHECK(f.frequency <= 1.0);
                CHECK(f.mean_payload >= 0.0);
                CHECK(f.mean_payload <= 1.0);
            }
            CHECK(std::abs(freq - 1.0) <= 1e-12);
            std::size_t total = 0;
            for (const auto& e : g.edges) total += e.weight;
            CHECK(total == 49);
        }
    }
    CHECK(build_windows(frames, {50, 50, true}) == build_windows(frames, {50, 50, true}));
}

TEST_CASE("serial and parallel window building agree") {
    nn::Rng rng(6);
    const auto frames = testing::random_frames(rng, 5000, 20);
    CHECK(build_windows(frames, {100, 10, true}, ExecPolicy::Serial) ==
          build_windows(frames, {100, 10, true}, ExecPolicy::Parallel));
}

TEST_CASE("invalid window options are config errors") {
    const auto frames = frames_with_ids({1, 2, 3});
    CHECK_THROWS_AS(build_windows(frames, {1, 1, true}), ConfigError);
    CHECK_THROWS_AS(build_windows(frames, {2, 0, true}), ConfigError);
    CHECK_THROWS_AS(build_windows(frames, {2, 3, true}), ConfigError);
    CHECK_THROWS_AS(build_windows(frames, {4, 4, true}), ConfigError);
}

TEST_CASE("feature_stats") {
    nn::Rng rng(8);
    auto frames = testing::random_frames(rng, 10, 5, 0.0);
    auto g0 = build_window(frames, 0, {10, 10, true});
    auto g1 = g0;
    g1.label = 1;
    const std::vector<WindowGraph> one{g0};
    const auto s1 = feature_stats(one);
    CHECK(s1.mean_nodes == static_cast<double>(g0.num_nodes()));
    const std::vector<WindowGraph> two{g0, g1};
    CHECK(feature_stats(two).attack_fraction == 0.5);
    CHECK_THROWS(feature_stats(std::span<const WindowGraph>{}));
}

TEST_CASE("graph cache round-trips bit for bit") {
    nn::Rng rng(9);
    const auto frames = testing::random_frames(rng, 2000, 18, 0.2);
    const auto graphs = build_windows(frames, {100, 30, true});
    testing::TempDir dir;
    save_graphs(dir / "g.txt", graphs);
    CHECK(load_graphs(dir / "g.txt") == graphs);
    const auto undirected = build_windows(frames, {100, 100, false});
    CHECK(deserialize_graphs(serialize_graphs(undirected)) == undirected);
    CHECK_THROWS_AS(deserialize_graphs("canids-graphs 1\nwindow 0 0 1 2 1\nn 1 0 0 0\n"), ParseError);
    CHECK_THROWS_AS(deserialize_graphs("not a cache\n"), ParseError);
}

TEST_CASE("prepared graphs add self-loops and partition node pairs") {
    nn::Rng rng(10);
    for (int trial = 0; trial < 50; ++trial) {
        const auto frames = testing::random_frames(rng, 2 + rng.below(100), 1 + rng.below(12));
        const auto g = build_window(frames, 0, {frames.size(), frames.size(), trial % 2 == 0});
        const auto in = prepare_graph(g);
        const std::size_t n = in.num_nodes();
        CHECK(in.features.rows() == n);
        CHECK(in.features.cols() == kNodeFeatureDim);
        std::set<std::uint32_t> looped;
        for (std::size_t e = 0; e < in.src.size(); ++e)
            if (in.src[e] == in.dst[e]) looped.insert(in.src[e]);
        CHECK(looped.size() == n);
        CHECK(in.positives.size() + in.negatives.size() == n * (n + 1) / 2);
        std::set<NodePair> all(in.positives.begin(), in.positives.end());
        all.insert(in.negatives.begin(), in.negatives.end());
        CHECK(all.size() == n * (n + 1) / 2);
        for (std::size_t e = 0; e < in.log_weight.rows(); ++e) CHECK(in.log_weight(e, 0) >= 0.0);
    }
}
