// SPDX-License-Identifier: Apache-2.0
#include "scenarios.hpp"

#include "urba/mock_backends.hpp"
#include "urba/raw_synthetic.hpp"

#include <fmt/format.h>

#include <fstream>

namespace urba::testing {

FixturePlantSpec needle_spec() {
    FixturePlantSpec spec;
    spec.jitter = 0;
    PlantRequest pagoda;
    pagoda.id = kPagodaId;
    pagoda.x = 5000;
    pagoda.y = 5000;
    pagoda.label = "red pagoda";
    pagoda.caption = "a red pagoda with a curved tiled roof";
    pagoda.facts = {{"what is beside the pagoda?", "a stone lantern"}};
    pagoda.qa = PlantQA{"What stands beside the red pagoda?",
                        {"a fountain", "a stone lantern", "a bicycle", "a bus stop"},
                        'B'};
    PlantRequest tram;
    tram.id = 12;
    tram.x = 12000;
    tram.y = 3000;
    tram.label = "blue tram";
    tram.caption = "a blue tram waiting at a platform";
    tram.facts = {{"what color is the tram?", "blue"}};
    PlantRequest kite;
    kite.id = 31;
    kite.x = 2500;
    kite.y = 14000;
    kite.label = "yellow kite";
    kite.caption = "a yellow kite above a meadow";
    kite.facts = {{"what is flying?", "a kite"}};
    spec.plants = {pagoda, tram, kite};
    return spec;
}

QuestionRecord needle_question(const std::filesystem::path& image) {
    QuestionRecord q;
    q.id = "needle-0001";
    q.image = image;
    q.subset = Subset::satellite;
    q.level = Level::micro;
    q.question = "What stands beside the red pagoda?";
    q.options = {"a fountain", "a stone lantern", "a bicycle", "a bus stop"};
    q.answer = 'B';
    return q;
}

std::string tool_block(const std::string& tool, const std::string& args_json) {
    return "```tool\n{\"tool\":\"" + tool + "\",\"args\":" + args_json + "}\n```";
}

std::vector<std::string> needle_script() {
    return {
        "I will build a caption index first.\n" +
            tool_block("semantic_abstraction", R"({"image":"img_0","chunk_number":16})"),
        "Now search it.\n" + tool_block("semantic_retrieval", R"({"json":"idx_0","query":"red pagoda","topk":3})"),
        "The pagoda is in chunk 5; crop it.\n" +
            tool_block("crop", R"({"image":"img_0","bbox":[4096,4096,8192,8192]})"),
        tool_block("vlm", R"({"image":"img_1","prompt":"what is beside the pagoda?"})"),
        "The crop shows a stone lantern beside the pagoda.\nFINAL ANSWER: B",
    };
}

ScriptedEval scripted_eval(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_raw_synthetic(dir / "eval.ursy", 2048, 1024, SyntheticSpec{});
    ScriptedEval out;
    out.manifest = dir / "manifest.jsonl";
    std::ofstream manifest(out.manifest);
    const std::array<Subset, 4> subsets = {Subset::portrait_scroll, Subset::narrative_scroll, Subset::satellite,
                                           Subset::street_view};
    const std::array<Level, 3> levels = {Level::micro, Level::regional, Level::global};
    const std::string crop = tool_block("crop", R"({"image":"img_0","bbox":[0,0,512,512]})");
    for (int i = 0; i < 10; ++i) {
        QuestionRecord q;
        q.id = fmt::format("q{:02}", i);
        q.image = "eval.ursy";
        q.subset = subsets[i % 4];
        q.level = levels[i % 3];
        q.question = fmt::format("Scripted question number {}?", i);
        q.options = {"north", "south", "east", "west"};
        q.answer = "ABCD"[i % 4];
        manifest << to_json(q).dump() << "\n";
        q.image = dir / "eval.ursy";
        out.questions.push_back(q);

        const char wrong = q.answer == 'A' ? 'B' : 'A';
        std::vector<std::string> script;
        if (i % 2 == 0) script.push_back("Let me look first.\n" + crop);
        if (i < 7) {
            script.push_back(fmt::format("FINAL ANSWER: {}", q.answer));
        } else if (i < 9) {
            script.push_back(fmt::format("FINAL ANSWER: {}", wrong));
        } else {
            script.insert(script.end(), {"I am not sure.", "Still unsure.", "Cannot decide."});
        }
        out.scripts[q.id] = std::move(script);
    }
    return out;
}

ChatFactory script_factory(const std::map<std::string, std::vector<std::string>>& scripts) {
    return [scripts](const QuestionRecord& q) -> std::unique_ptr<ChatBackend> {
        return std::make_unique<ScriptedChat>(scripts.at(q.id));
    };
}

} // namespace urba::testing
