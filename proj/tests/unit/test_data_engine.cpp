// SPDX-License-Identifier: Apache-2.0
#include "test_images.hpp"

#include "urba/data_engine.hpp"
#include "urba/error.hpp"
#include "urba/harness.hpp"
#include "urba/mock_backends.hpp"
#include "urba/prompts.hpp"
#include "urba/raw_synthetic.hpp"

#include <doctest.h>
#include <fmt/format.h>

#include <numeric>
#include <random>
#include <set>

using namespace urba;
using urba::testing::TempDir;

namespace {

// Independent level checker: shared edge of positive length, BFS over tiles.
bool touches(const BBox& a, const BBox& b) {
    const auto ox = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    const auto oy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    if (ox > 0 && oy > 0) return true;
    return (ox == 0 && oy > 0) || (oy == 0 && ox > 0);
}

bool level_ok(const QACandidate& c) {
    const auto& t = c.source_tiles;
    switch (c.level) {
    case Level::micro: return t.size() == 1;
    case Level::regional: {
        if (t.size() < 2) return false;
        std::vector<bool> seen(t.size(), false);
        std::vector<std::size_t> stack{0};
        seen[0] = true;
        while (!stack.empty()) {
            const auto i = stack.back();
            stack.pop_back();
            for (std::size_t j = 0; j < t.size(); ++j) {
                if (!seen[j] && touches(t[i], t[j])) {
                    seen[j] = true;
                    stack.push_back(j);
                }
            }
        }
        return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
    }
    case Level::global:
        for (std::size_t i = 0; i < t.size(); ++i)
            for (std::size_t j = i + 1; j < t.size(); ++j)
                if (!touches(t[i], t[j])) return true;
        return false;
    }
    return false;
}

bool options_ok(const QACandidate& c) {
    std::set<std::string> distinct(c.options.begin(), c.options.end());
    return distinct.size() == 4 && c.answer >= 'A' && c.answer <= 'D';
}

class ConstVlm : public VlmBackend {
public:
    explicit ConstVlm(std::string reply) : reply_(std::move(reply)) {}
    std::string answer(const PixelWindow&, std::string_view prompt) override {
        prompts.emplace_back(prompt);
        return reply_;
    }
    std::vector<std::string> prompts;

private:
    std::string reply_;
};

class DownVlm : public VlmBackend {
public:
    std::string answer(const PixelWindow&, std::string_view) override {
        throw Error(ErrorCode::backend_unavailable, "filter offline");
    }
};

QACandidate sample_candidate(char answer = 'B') {
    QACandidate c;
    c.question = "What is on the roof?";
    c.options = {"a cat", "a flag", "a dish", "snow"};
    c.answer = answer;
    c.source_tiles = {{0, 0, 512, 512}};
    return c;
}

PlantRequest plant(std::uint32_t id, std::int64_t x, std::int64_t y, std::string label, std::int64_t size = 0) {
    PlantRequest p;
    p.id = id;
    p.x = x;
    p.y = y;
    p.size = size;
    p.label = label;
    p.caption = "a " + label;
    p.facts = {{fmt::format("what is at plant {}?", id), label}};
    p.qa = PlantQA{fmt::format("Which object is planted as marker {}?", id),
                   {label, label + " replica", "nothing", "a shadow"},
                   'A'};
    return p;
}

} // namespace

TEST_CASE("tile_grid") {
    const auto a = tile_grid(1024, 1024, 512);
    CHECK(a == std::vector<BBox>{{0, 0, 512, 512}, {512, 0, 1024, 512}, {0, 512, 512, 1024}, {512, 512, 1024, 1024}});
    const auto b = tile_grid(1000, 600, 512);
    REQUIRE(b.size() == 4);
    CHECK(b[0].width() == 512);
    CHECK(b[0].height() == 512);
    CHECK((b[1].width() == 488 && b[1].height() == 512));
    CHECK((b[2].width() == 512 && b[2].height() == 88));
    CHECK((b[3].width() == 488 && b[3].height() == 88));
    CHECK(tile_grid(100, 100, 512) == std::vector<BBox>{{0, 0, 100, 100}});
    CHECK_THROWS_AS(tile_grid(100, 100, 63), Error);

    std::mt19937_64 rng(12);
    for (int t = 0; t < 200; ++t) {
        const std::int64_t w = 1 + static_cast<std::int64_t>(rng() % 5000), h = 1 + static_cast<std::int64_t>(rng() % 5000);
        const std::int64_t tile = 64 + static_cast<std::int64_t>(rng() % 2000);
        const auto tiles = tile_grid(w, h, tile);
        std::int64_t area = 0;
        for (std::size_t i = 0; i < tiles.size(); ++i) {
            area += tiles[i].area();
            CHECK(tiles[i].width() <= tile);
            for (std::size_t j = i + 1; j < tiles.size(); ++j) CHECK_FALSE(tiles[i].intersects(tiles[j]));
        }
        CHECK(area == w * h);
    }
}

TEST_CASE("candidate validation") {
    auto c = sample_candidate();
    CHECK_NOTHROW(validate_candidate(c));
    c.options[3] = c.options[0];
    CHECK_THROWS_AS(validate_candidate(c), Error);

    auto r = sample_candidate();
    r.level = Level::regional;
    r.source_tiles = {{0, 0, 10, 10}, {10, 0, 20, 10}, {20, 0, 30, 10}};
    CHECK_NOTHROW(validate_candidate(r));
    r.source_tiles = {{0, 0, 10, 10}, {20, 0, 30, 10}};
    CHECK_THROWS_AS(validate_candidate(r), Error);

    auto g = sample_candidate();
    g.level = Level::global;
    g.source_tiles = {{0, 0, 10, 10}, {10, 0, 20, 10}};
    CHECK_THROWS_AS(validate_candidate(g), Error);
    g.source_tiles = {{0, 0, 10, 10}, {10, 10, 20, 20}};  // corner contact only
    CHECK_NOTHROW(validate_candidate(g));
}

TEST_CASE("parse_qa_reply is strict") {
    const auto two = parse_qa_reply(
        R"({"qas":[{"question":"q1","options":["a","b","c","d"],"answer":"C"},{"question":"q2","options":["e","f","g","h"],"answer":"A"}]})");
    REQUIRE(two.size() == 2);
    CHECK(two[0].answer == 'C');
    CHECK(parse_qa_reply(R"({"qas":[]})").empty());
    CHECK_THROWS_AS(parse_qa_reply("Sure! Here are some questions."), Error);
    CHECK_THROWS_AS(parse_qa_reply(R"({"qas":[{"question":"q","options":["a","b","c"],"answer":"A"}]})"), Error);
    CHECK_THROWS_AS(parse_qa_reply(R"({"qas":[{"question":"q","options":["a","b","c","d"],"answer":"E"}]})"), Error);
}

TEST_CASE("gen_micro") {
    const auto tile = PixelWindow::blank(64, 64);
    ConstVlm empty(R"({"qas":[]})");
    const auto e = gen_micro(tile, {0, 0, 64, 64}, empty, "mock");
    CHECK(e.candidates.empty());
    CHECK_FALSE(e.rejection.has_value());
    CHECK(empty.prompts.at(0).starts_with(kMicroQaInstruction));

    const std::string qa = R"({"question":"q","options":["a","b","c","d"],"answer":"A"})";
    ConstVlm three(R"({"qas":[)" + qa + "," + qa + "," + qa + "]}");
    const auto t = gen_micro(tile, {0, 0, 64, 64}, three, "mock");
    CHECK(t.candidates.empty());
    CHECK(t.rejection.has_value());

    ConstVlm junk("I see a bridge.");
    CHECK(gen_micro(tile, {0, 0, 64, 64}, junk, "mock").rejection.has_value());

    ConstVlm one(R"({"qas":[)" + qa + "]}");
    const auto o = gen_micro(tile, {64, 0, 128, 64}, one, "mock-gen");
    REQUIRE(o.candidates.size() == 1);
    CHECK(o.candidates[0].level == Level::micro);
    CHECK(o.candidates[0].source_tiles == std::vector<BBox>{{64, 0, 128, 64}});
    CHECK(o.candidates[0].provenance.backend == "mock-gen");
    CHECK(o.candidates[0].provenance.prompt_hash.size() == 16);
}

TEST_CASE("gen_micro on a fixture tile returns the planted questions") {
    TempDir dir;
    FixturePlantSpec spec;
    spec.jitter = 0;
    spec.plants = {plant(40, 300, 300, "windmill"), plant(41, 700, 700, "lighthouse"), plant(42, 1500, 400, "barn")};
    const auto fx = generate_fixture(3, 2048, 1024, spec, dir.path());
    FixtureVision vision(std::make_shared<const FixtureManifest>(fx.manifest));
    const auto out = gen_micro(read_window(fx.image, {0, 0, 1024, 1024}), {0, 0, 1024, 1024}, vision, "fixture");
    REQUIRE(out.candidates.size() == 2);
    CHECK(out.candidates[0].question == "Which object is planted as marker 40?");
    CHECK(out.candidates[1].question == "Which object is planted as marker 41?");
}

TEST_CASE("compose_levels") {
    TempDir dir;
    FixturePlantSpec spec;
    spec.jitter = 0;
    spec.plants = {plant(50, 500, 500, "tower"), plant(51, 1500, 500, "bridge")};
    const auto fx = generate_fixture(4, 2048, 1024, spec, dir.path());
    FixtureVision vision(std::make_shared<const FixtureManifest>(fx.manifest));
    const ImageView view(fx.image);

    std::vector<TilePatch> patches;
    for (const auto& t : tile_grid(2048, 1024, 1024)) {
        const auto micro = gen_micro(read_window(fx.image, t), t, vision, "fixture");
        REQUIRE(micro.candidates.size() == 1);
        patches.push_back({t, view.crop(t), micro.candidates[0]});
    }
    ComposeCounts counts;
    counts.regional = 1;
    counts.global = 1;
    const auto out = compose_levels(patches, vision, "fixture", counts);
    REQUIRE(out.candidates.size() == 1);
    const auto& r = out.candidates[0];
    CHECK(r.level == Level::regional);
    CHECK(r.source_tiles.size() == 2);
    CHECK(level_ok(r));
    CHECK(options_ok(r));
    CHECK(out.regional_shortfall == 0);
    CHECK(out.global_shortfall == 1);  // a 2x1 grid has no non-adjacent pair

    const auto single = compose_levels({patches[0]}, vision, "fixture", counts);
    CHECK(single.candidates.empty());
    CHECK(single.regional_shortfall == 1);
    CHECK(single.global_shortfall == 1);
    CHECK_FALSE(single.log.empty());
}

TEST_CASE("auto_filter") {
    const auto img = PixelWindow::blank(32, 32);
    ConstVlm gold("FINAL ANSWER: B");
    CHECK(auto_filter(sample_candidate('B'), img, gold) == FilterVerdict::drop_too_easy);
    CHECK(gold.prompts.size() == 3);
    ConstVlm wrong("FINAL ANSWER: D");
    CHECK(auto_filter(sample_candidate('B'), img, wrong) == FilterVerdict::keep);
    auto dup = sample_candidate();
    dup.options[2] = dup.options[1];
    CHECK(auto_filter(dup, img, gold) == FilterVerdict::drop_malformed);
    DownVlm down;
    CHECK(auto_filter(sample_candidate(), img, down) == FilterVerdict::unfiltered);

    CHECK(to_string(FilterVerdict::keep) == "kept");
    CHECK(to_string(FilterVerdict::drop_too_easy) == "dropped:too-easy");
    CHECK(to_string(FilterVerdict::drop_malformed) == "dropped:malformed");
    CHECK(to_string(FilterVerdict::unfiltered) == "unfiltered");
}

TEST_CASE("object_count") {
    TempDir dir;
    FixturePlantSpec spec;
    spec.jitter = 0;
    std::uint32_t id = 100;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) spec.plants.push_back(plant(id++, 512 + 1024 * c, 512 + 1024 * r, "house", 200));
    const auto fx = generate_fixture(8, 4096, 3072, spec, dir / "twelve");
    FixtureVision vision(std::make_shared<const FixtureManifest>(fx.manifest));
    CHECK(object_count(fx.image, vision, {"house"}) == 12);

    FixturePlantSpec seam;
    seam.jitter = 0;
    seam.plants = {plant(200, 1024, 500, "silo", 200), plant(201, 500, 1500, "silo", 100)};
    const auto fs = generate_fixture(9, 2048, 2048, seam, dir / "seam");
    FixtureVision sv(std::make_shared<const FixtureManifest>(fs.manifest));
    const auto objects = detect_objects(fs.image, sv, {"silo"});
    REQUIRE(objects.size() == 2);
    CHECK(objects[0].bbox == fs.manifest.find(200)->bbox);

    write_raw_synthetic(dir / "empty.ursy", 2048, 1024, SyntheticSpec{});
    FixtureVision none(std::make_shared<const FixtureManifest>());
    CHECK(object_count(open_image(dir / "empty.ursy"), none, {"house"}) == 0);
}

TEST_CASE("run_datagen emits valid, reproducible candidates") {
    TempDir dir;
    FixturePlantSpec spec;
    spec.jitter = 0;
    std::uint32_t id = 500;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) spec.plants.push_back(plant(id++, 300 + 1024 * c, 300 + 1024 * r, fmt::format("statue {}", id)));
    const auto fx = generate_fixture(10, 3072, 3072, spec, dir.path());
    auto manifest = std::make_shared<const FixtureManifest>(fx.manifest);
    FixtureVision gen(manifest);
    DatagenConfig cfg;
    cfg.compose.regional = 3;
    cfg.compose.global = 2;
    cfg.compose.seed = 77;
    const auto a = run_datagen(fx.image, gen, "fixture", nullptr, cfg);
    const auto b = run_datagen(fx.image, gen, "fixture", nullptr, cfg);
    CHECK(a.tiles == 9);
    std::map<Level, int> levels;
    for (const auto& rec : a.records) {
        CAPTURE(rec.id);
        CHECK(level_ok(rec.candidate));
        CHECK(options_ok(rec.candidate));
        CHECK(rec.status == "pending-review");
        ++levels[rec.candidate.level];
    }
    CHECK(levels[Level::micro] == 9);
    CHECK(levels[Level::regional] == 3);
    CHECK(levels[Level::global] == 2);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(to_json(a.records[i]).dump() == to_json(b.records[i]).dump());

    ConstVlm wrong("FINAL ANSWER: D");
    const auto filtered = run_datagen(fx.image, gen, "fixture", &wrong, cfg);
    for (const auto& rec : filtered.records) {
        CHECK(rec.status == (rec.candidate.answer == 'D' ? "dropped:too-easy" : "kept"));
    }
}
