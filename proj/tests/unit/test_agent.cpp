// SPDX-License-Identifier: Apache-2.0
#include "scenarios.hpp"
#include "test_images.hpp"

#include "urba/agent.hpp"
#include "urba/error.hpp"
#include "urba/mock_backends.hpp"
#include "urba/raw_synthetic.hpp"

#include <doctest.h>

using namespace urba;
using urba::testing::TempDir;
using urba::testing::tool_block;

namespace {

class FlakyChat : public ChatBackend {
public:
    std::string chat(std::span<const Message>) override { throw Error(ErrorCode::backend_unavailable, "connection refused"); }
};

class RepeatChat : public ChatBackend {
public:
    explicit RepeatChat(std::string reply) : reply_(std::move(reply)) {}
    std::string chat(std::span<const Message> messages) override {
        ++calls;
        last_size = messages.size();
        return reply_;
    }
    int calls = 0;
    std::size_t last_size = 0;

private:
    std::string reply_;
};

QuestionRecord small_question(const std::filesystem::path& image) {
    QuestionRecord q;
    q.id = "q-1";
    q.image = image;
    q.subset = Subset::street_view;
    q.level = Level::micro;
    q.question = "Which sign is on the shop?";
    q.options = {"bakery", "pharmacy", "florist", "bank"};
    q.answer = 'C';
    return q;
}

struct SmallScene {
    TempDir dir;
    ImageRef image;
    Backends backends;
    SmallScene() {
        write_raw_synthetic(dir / "s.ursy", 800, 600, SyntheticSpec{});
        image = open_image(dir / "s.ursy");
        auto vision = std::make_shared<FixtureVision>(std::make_shared<const FixtureManifest>());
        backends = {vision, vision, vision, std::make_shared<HashEmbedder>()};
    }
};

int sum_counts(const ToolCounts& c) {
    int n = 0;
    for (const auto& [k, v] : c) n += v;
    return n;
}

int dispatched_in(const EpisodeResult& r) {
    int n = 0;
    for (const auto& s : r.transcript) {
        if (s.role == "model" && s.call) ++n;
    }
    return n;
}

} // namespace

TEST_CASE("extract_answer") {
    CHECK(extract_answer("…therefore FINAL ANSWER: C") == 'C');
    CHECK(extract_answer("final answer: (b).") == 'B');
    CHECK_FALSE(extract_answer("It is probably the bridge.").has_value());
    CHECK(extract_answer("  d \n") == 'D');
    CHECK(extract_answer("FINAL ANSWER: A ... wait, FINAL ANSWER: **D**") == 'D');
    CHECK(extract_answer("Final Answer [c]") == 'C');
    CHECK_FALSE(extract_answer("FINAL ANSWER: E").has_value());
    CHECK_FALSE(extract_answer("FINAL ANSWER: Apple").has_value());
    CHECK_FALSE(extract_answer("E").has_value());
}

TEST_CASE("system prompt") {
    const auto q = small_question("x.png");
    const auto a = build_system_prompt(tool_registry(), q, 1000, 500);
    CHECK(a == build_system_prompt(tool_registry(), q, 1000, 500));
    int sections = 0;
    for (std::size_t pos = 0; (pos = a.find("\n### ", pos)) != std::string::npos; ++pos) ++sections;
    CHECK(sections == 6);
    for (auto name : kToolNames) CHECK(a.find(std::string("### ") + std::string(name) + "\n") != std::string::npos);
    CHECK(a.find("img_0 (1000×500") != std::string::npos);
    CHECK(a.find("Which sign is on the shop?") != std::string::npos);
    CHECK(a.find("C. florist") != std::string::npos);
    CHECK(a.find("FINAL ANSWER: <letter>") != std::string::npos);

    auto intl = q;
    intl.options = {"\xE5\xA1\x94", "Stra\xC3\x9F" "e", "\xD0\xBC\xD0\xBE\xD1\x81\xD1\x82", "caf\xC3\xA9"};
    const auto b = build_system_prompt(tool_registry(), intl, 10, 10);
    for (const auto& o : intl.options) CHECK(b.find(o) != std::string::npos);
}

TEST_CASE("immediate answer uses no tools") {
    SmallScene s;
    ScriptedChat chat({"FINAL ANSWER: A"});
    const auto r = run_episode(small_question(s.image.path), s.image, chat, s.backends);
    CHECK(r.status == EpisodeStatus::answered);
    CHECK(r.final_answer == 'A');
    CHECK(sum_counts(r.tool_counts) == 0);
    CHECK(r.model_calls == 1);
}

TEST_CASE("malformed blocks forever end invalid") {
    SmallScene s;
    RepeatChat chat("```tool\n{oops\n```");
    EpisodeConfig cfg;
    cfg.max_parse_retries = 2;
    const auto r = run_episode(small_question(s.image.path), s.image, chat, s.backends, cfg);
    CHECK(r.status == EpisodeStatus::invalid);
    CHECK_FALSE(r.final_answer.has_value());
    CHECK(chat.calls == 3);
    int errors = 0;
    for (const auto& step : r.transcript) {
        if (step.error) {
            ++errors;
            CHECK(step.error->code == ErrorCode::malformed_call);
        }
    }
    CHECK(errors == 3);
}

TEST_CASE("prose without an answer is reprompted, then invalid") {
    SmallScene s;
    ScriptedChat chat({"Hmm, hard to say.", "Still thinking.", "FINAL ANSWER: b"});
    const auto r = run_episode(small_question(s.image.path), s.image, chat, s.backends);
    CHECK(r.status == EpisodeStatus::answered);
    CHECK(r.final_answer == 'B');
    CHECK(r.transcript[1].text == kAnswerReprompt);

    RepeatChat stubborn("no idea");
    const auto bad = run_episode(small_question(s.image.path), s.image, stubborn, s.backends);
    CHECK(bad.status == EpisodeStatus::invalid);
    CHECK(stubborn.calls == 3);
}

TEST_CASE("tool budget forces an answer") {
    SmallScene s;
    const auto crop = tool_block("crop", R"({"image":"img_0","bbox":[0,0,10,10]})");
    EpisodeConfig cfg;
    cfg.max_tool_calls = 2;
    ScriptedChat chat({crop, crop, crop, "FINAL ANSWER: C"});
    const auto r = run_episode(small_question(s.image.path), s.image, chat, s.backends, cfg);
    CHECK(r.status == EpisodeStatus::answered);
    CHECK(r.tool_counts.at("crop") == 2);
    bool notice = false;
    for (const auto& step : r.transcript) notice |= step.text.find(kToolBudgetNotice) != std::string::npos;
    CHECK(notice);

    RepeatChat greedy(crop);
    const auto g = run_episode(small_question(s.image.path), s.image, greedy, s.backends, cfg);
    CHECK(g.status == EpisodeStatus::invalid);
    CHECK(sum_counts(g.tool_counts) == 2);
    CHECK(greedy.calls <= cfg.max_model_turns);
}

TEST_CASE("model turn budget") {
    SmallScene s;
    RepeatChat chat(tool_block("vlm", R"({"image":"img_0","prompt":"anything?"})"));
    EpisodeConfig cfg;
    cfg.max_tool_calls = 100;
    cfg.max_model_turns = 5;
    const auto r = run_episode(small_question(s.image.path), s.image, chat, s.backends, cfg);
    CHECK(r.status == EpisodeStatus::budget_exhausted);
    CHECK(chat.calls == 5);
    CHECK(r.model_calls == 5);
    CHECK(r.tool_counts.at("vlm") == 5);
    CHECK(sum_counts(r.tool_counts) == dispatched_in(r));
}

TEST_CASE("decision backend failures are not invalid answers") {
    SmallScene s;
    FlakyChat chat;
    const auto r = run_episode(small_question(s.image.path), s.image, chat, s.backends);
    CHECK(r.status == EpisodeStatus::backend_failure);
    CHECK_FALSE(r.final_answer.has_value());

    ScriptedChat short_script({tool_block("crop", R"({"image":"img_0","bbox":[0,0,5,5]})")});
    const auto e = run_episode(small_question(s.image.path), s.image, short_script, s.backends);
    CHECK(e.status == EpisodeStatus::backend_failure);
    CHECK(e.tool_counts.at("crop") == 1);
}

TEST_CASE("tool errors are returned to the model") {
    SmallScene s;
    ScriptedChat chat({tool_block("semantic_retrieval", R"({"json":"idx_0","query":"shop"})"), "FINAL ANSWER: D"});
    const auto r = run_episode(small_question(s.image.path), s.image, chat, s.backends);
    CHECK(r.status == EpisodeStatus::answered);
    REQUIRE(r.transcript.size() == 3);
    CHECK(r.transcript[1].role == "tool");
    CHECK(r.transcript[1].text.starts_with("ERROR[no-index]:"));
    CHECK(r.tool_counts.at("semantic_retrieval") == 1);
}

TEST_CASE("transcript export") {
    SmallScene s;
    ScriptedChat chat({tool_block("crop", R"({"image":"img_0","bbox":[0,0,10,10]})"), "FINAL ANSWER: A"});
    const auto r = run_episode(small_question(s.image.path), s.image, chat, s.backends);
    const auto text = transcript_jsonl(r);
    std::vector<nlohmann::json> lines;
    std::size_t start = 0;
    for (std::size_t nl; (nl = text.find('\n', start)) != std::string::npos; start = nl + 1) {
        lines.push_back(nlohmann::json::parse(text.substr(start, nl - start)));
    }
    REQUIRE(lines.size() == 3);
    CHECK(lines[0]["turn"] == 1);
    CHECK(lines[0]["role"] == "model");
    CHECK(lines[0]["call"]["tool"] == "crop");
    CHECK(lines[1]["role"] == "tool");
    CHECK(lines[1]["text"] == "OK: created img_1 (10×10) from img_0 bbox [0,0,10,10]");
    CHECK_FALSE(lines[1].contains("error"));
    CHECK(lines[2]["text"] == "FINAL ANSWER: A");
}

TEST_CASE("planted needle episode on the full-size fixture") {
    TempDir dir;
    const auto fx = generate_fixture(1, urba::testing::kNeedleSide, urba::testing::kNeedleSide,
                                     urba::testing::needle_spec(), dir.path());
    const auto* pagoda = fx.manifest.find(urba::testing::kPagodaId);
    REQUIRE(pagoda != nullptr);
    CHECK(BBox{4096, 4096, 8192, 8192}.contains(pagoda->bbox));

    auto vision = std::make_shared<FixtureVision>(std::make_shared<const FixtureManifest>(fx.manifest));
    const Backends backends{vision, vision, vision, std::make_shared<HashEmbedder>()};
    ScriptedChat chat(urba::testing::needle_script());
    const auto r = run_episode(urba::testing::needle_question(fx.image_path), fx.image, chat, backends);

    CHECK(r.status == EpisodeStatus::answered);
    CHECK(r.final_answer == 'B');
    CHECK(r.tool_counts == ToolCounts{{"semantic_abstraction", 1}, {"semantic_retrieval", 1}, {"crop", 1},
                                      {"vlm", 1}, {"ground", 0}, {"enhance", 0}});
    REQUIRE(r.transcript.size() == 9);
    CHECK(r.transcript[3].text.find("1. [chunk 5] bbox=[4096,4096,8192,8192]") != std::string::npos);
    CHECK(r.transcript[7].text == "OK: a stone lantern");
}
