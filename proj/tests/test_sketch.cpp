#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sfm/ingest.hpp"
#include "sfm/sketch.hpp"

using namespace sfm;

namespace {

std::vector<std::string> distinct_items(size_t count, uint64_t tag) {
    std::vector<std::string> items;
    items.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        items.push_back("k" + std::to_string(tag) + ":" + std::to_string(i));
    }
    return items;
}

PcsaSketch sketch_of(const std::vector<std::string>& items, const SketchParams& params) {
    PcsaSketch s(params);
    for (const auto& item : items) s.insert(item);
    return s;
}

} // namespace

TEST_CASE("sketch params validation") {
    CHECK_THROWS_AS(PcsaSketch(SketchParams{0, 24, 0}), DomainError);
    CHECK_THROWS_AS(PcsaSketch(SketchParams{4, 0, 0}), DomainError);
    // B * P must stay addressable by a 32-bit bit index
    CHECK_THROWS_AS(PcsaSketch(SketchParams{1u << 31, 4, 0}), DomainError);
    CHECK_NOTHROW(SketchParams{1u << 30, 4, 0}.validate());
}

TEST_CASE("insert sets exactly one bit") {
    PcsaSketch s(SketchParams{32, 16, 7});
    CHECK(s.popcount() == 0);
    s.insert("only");
    CHECK(s.popcount() == 1);
    const HashedItem h = hash_item("only", s.params());
    CHECK(s.bit(h.bucket, h.value));
}

TEST_CASE("insert is idempotent and order-insensitive") {
    const SketchParams params{64, 24, 11};
    auto items = distinct_items(500, 1);

    PcsaSketch once = sketch_of(items, params);
    PcsaSketch twice = once;
    for (const auto& item : items) twice.insert(item);
    CHECK(once == twice);

    auto shuffled = items;
    std::mt19937_64 rng(99);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(sketch_of(shuffled, params) == once);
}

TEST_CASE("popcount matches direct replay of hash assignments") {
    const SketchParams params{64, 24, 1234};
    auto items = distinct_items(10'000, 2);
    PcsaSketch s = sketch_of(items, params);

    std::set<std::pair<uint32_t, uint32_t>> cells;
    for (const auto& item : items) {
        const HashedItem h = hash_item(item, params);
        cells.emplace(h.bucket, h.value);
    }
    CHECK(s.popcount() == cells.size());
    for (const auto& [bucket, value] : cells) CHECK(s.bit(bucket, value));
}

TEST_CASE("merge_exact equals the sketch of the union") {
    const SketchParams params{64, 24, 5};
    auto d1 = distinct_items(3000, 3);
    auto d2 = distinct_items(2000, 4);
    // overlap: share a block of items
    for (size_t i = 0; i < 500; ++i) d2.push_back(d1[i]);

    PcsaSketch s1 = sketch_of(d1, params);
    PcsaSketch s2 = sketch_of(d2, params);

    std::vector<std::string> joint = d1;
    joint.insert(joint.end(), d2.begin(), d2.end());
    CHECK(merge_exact(s1, s2) == sketch_of(joint, params));
}

TEST_CASE("merge_exact algebra") {
    const SketchParams params{32, 12, 8};
    PcsaSketch a = sketch_of(distinct_items(400, 5), params);
    PcsaSketch b = sketch_of(distinct_items(300, 6), params);
    PcsaSketch c = sketch_of(distinct_items(200, 7), params);
    PcsaSketch empty(params);

    CHECK(merge_exact(a, empty) == a);
    CHECK(merge_exact(a, a) == a);
    CHECK(merge_exact(a, b) == merge_exact(b, a));
    CHECK(merge_exact(merge_exact(a, b), c) == merge_exact(a, merge_exact(b, c)));
}

TEST_CASE("merge_exact rejects parameter mismatch") {
    PcsaSketch a(SketchParams{32, 12, 8});
    PcsaSketch b(SketchParams{32, 12, 9});   // different seed
    PcsaSketch c(SketchParams{64, 12, 8});   // different shape
    CHECK_THROWS_AS(merge_exact(a, b), IncompatibleSketchError);
    CHECK_THROWS_AS(merge_exact(a, c), IncompatibleSketchError);
}

TEST_CASE("ingest skips empty lines unless asked to keep them") {
    const SketchParams params{32, 12, 3};

    std::istringstream with_blanks("alpha\n\nbeta\n\n\ngamma\n");
    PcsaSketch s1(params);
    const IngestStats stats1 = ingest_items(with_blanks, s1, false);
    CHECK(stats1.items == 3);
    CHECK(stats1.skipped_empty == 3);

    std::istringstream again("alpha\nbeta\ngamma\n");
    PcsaSketch s2(params);
    ingest_items(again, s2, false);
    CHECK(s1 == s2);

    std::istringstream keep("alpha\n\nbeta\n");
    PcsaSketch s3(params);
    const IngestStats stats3 = ingest_items(keep, s3, true);
    CHECK(stats3.items == 3);
    CHECK(stats3.skipped_empty == 0);
    const HashedItem h = hash_item("", params);
    CHECK(s3.bit(h.bucket, h.value));
}

TEST_CASE("ingest treats the last unterminated line as an item") {
    const SketchParams params{32, 12, 3};
    std::istringstream in("alpha\nbeta");
    PcsaSketch s(params);
    CHECK(ingest_items(in, s, false).items == 2);
}
