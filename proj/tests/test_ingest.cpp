#include <cmath>

#include "canids/error.hpp"
#include "canids/ingest.hpp"
#include "canids/io.hpp"
#include "doctest.h"
#include "support/cases.hpp"
#include "support/tempdir.hpp"

using namespace canids;
using canids::testing::TempDir;

TEST_CASE("Car-Hacking row parses to id, dlc, payload and label") {
    const auto f = parse_car_hacking_row("1478198376.389427,0316,8,05,21,68,09,21,21,00,6f,R", 1);
    CHECK(f.can_id == 790);
    CHECK(f.dlc == 8);
    CHECK(f.payload[0] == 0x05);
    CHECK(f.payload[7] == 0x6f);
    CHECK(f.label == Label::Benign);
    CHECK(f.timestamp == 1478198376.389427);
    CHECK(parse_car_hacking_row("0.5,0002,2,ff,00,T", 1).label == Label::Attack);
}

TEST_CASE("malformed rows raise parse errors with the line number") {
    auto line_of = [](std::string_view row) -> std::size_t {
        try {
            parse_car_hacking_row(row, 17);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    CHECK(line_of("bad,row") == 17);
    CHECK(line_of("1.0,zz12,1,00,R") == 17);       // non-hex id
    CHECK(line_of("1.0,0800,1,00,R") == 17);       // id above 2047
    CHECK(line_of("1.0,0100,3,00,01,R") == 17);    // dlc/payload mismatch
    CHECK(line_of("1.0,0100,9,0,0,0,0,0,0,0,0,0,R") == 17);
    CHECK(line_of("1.0,0100,1,100,R") == 17);      // byte above 255
    CHECK(line_of("1.0,0100,1,00,X") == 17);       // unknown flag
}

TEST_CASE("decreasing timestamps are rejected at the offending line") {
    TempDir dir;
    write_file_atomic(dir / "log.csv", "1.0,0100,0,R\n2.0,0100,0,R\n1.5,0100,0,R\n");
    try {
        parse_car_hacking_csv(dir / "log.csv");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
}

TEST_CASE("generic CSV with a column map") {
    TempDir dir;
    write_file_atomic(dir / "g.csv", "0.1,123,2,aa,bb,x,x,x,x,x,x,T\n0.2,124,0,x,x,x,x,x,x,x,x,R\n");
    const auto map = parse_column_map("ts=0,id=1,dlc=2,data=3,label=11");
    const auto frames = parse_generic_labeled_csv(dir / "g.csv", map);
    REQUIRE(frames.size() == 2);
    CHECK(frames[0].can_id == 0x123);
    CHECK(frames[0].dlc == 2);
    CHECK(frames[0].payload[1] == 0xbb);
    CHECK(frames[0].label == Label::Attack);
    CHECK(frames[1].label == Label::Benign);

    CHECK_THROWS_AS(parse_generic_labeled_csv(dir / "g.csv", parse_column_map("ts=0,id=1,dlc=2,data=3,label=99")),
                    ConfigError);

    write_file_atomic(dir / "empty.csv", "");
    CHECK(parse_generic_labeled_csv(dir / "empty.csv", map).empty());
}

TEST_CASE("generic CSV hex-string payload layout") {
    TempDir dir;
    write_file_atomic(dir / "h.csv", "timestamp,arbitration_id,data_field,attack\n1.0,1a0,0011ff,1\n2.0,1a1,,0\n");
    const auto map = parse_column_map("ts=0,id=1,data=2,label=3,header=1");
    const auto frames = parse_generic_labeled_csv(dir / "h.csv", map);
    REQUIRE(frames.size() == 2);
    CHECK(frames[0].dlc == 3);
    CHECK(frames[0].payload[2] == 0xff);
    CHECK(frames[0].label == Label::Attack);
    CHECK(frames[1].dlc == 0);
    CHECK_THROWS_AS(parse_column_map("ts=0,id=1"), ConfigError);
}

TEST_CASE("fuzzed valid rows satisfy frame invariants and round-trip exactly") {
    nn::Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        auto frames = canids::testing::random_frames(rng, 1 + rng.below(40), 1 + rng.below(20), 0.3);
        for (auto& f : frames) {
            const auto row = format_car_hacking_row(f);
            const auto back = parse_car_hacking_row(row, 1);
            CHECK(back.can_id <= kMaxStandardId);
            CHECK(back.dlc <= kMaxDlc);
            CHECK(back.bytes().size() == back.dlc);
            CHECK(back.can_id == f.can_id);
            CHECK(back.payload == f.payload);
            CHECK(back.label == f.label);
            CHECK(std::abs(back.timestamp - f.timestamp) <= 5e-7);
            CHECK(format_car_hacking_row(back) == row);
        }
    }
}

TEST_CASE("multiple files concatenate in order") {
    TempDir dir;
    write_file_atomic(dir / "a.csv", "1.0,0001,0,R\n");
    write_file_atomic(dir / "b.csv", "0.5,0002,0,T\n");
    const auto all = parse_car_hacking_files({dir / "a.csv", dir / "b.csv"});
    REQUIRE(all.size() == 2);
    CHECK(all[0].can_id == 1);
    CHECK(all[1].label == Label::Attack);
}

TEST_CASE("format_double round-trips and atomic writes leave no temp files") {
    nn::Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double v = std::ldexp(rng.uniform(-1, 1), static_cast<int>(rng.below(200)) - 100);
        CHECK(parse_double(format_double(v)) == v);
    }
    TempDir dir;
    write_file_atomic(dir / "x.txt", "one");
    write_file_atomic(dir / "x.txt", "two");
    CHECK(read_file(dir / "x.txt") == "two");
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++entries;
    CHECK(entries == 1);
}
