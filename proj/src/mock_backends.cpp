// SPDX-License-Identifier: Apache-2.0
#include "urba/mock_backends.hpp"

#include "urba/error.hpp"
#include "urba/hash.hpp"
#include "urba/markers.hpp"
#include "urba/prompts.hpp"
#include "urba/question.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace urba {

ScriptedChat::ScriptedChat(std::vector<std::string> script) : script_(std::move(script)) {}

std::string ScriptedChat::chat(std::span<const Message> messages) {
    if (messages.empty()) throw Error(ErrorCode::invalid_argument, "chat needs at least one message");
    std::lock_guard lock(mutex_);
    if (next_ >= script_.size()) {
        throw Error(ErrorCode::script_exhausted, fmt::format("script exhausted after {} replies", script_.size()));
    }
    return script_[next_++];
}

std::size_t ScriptedChat::calls() const {
    std::lock_guard lock(mutex_);
    return next_;
}

RuleChat::RuleChat(std::map<std::string, std::string> rules, std::vector<std::string> canned)
    : rules_(std::move(rules)), canned_(std::move(canned)) {
    if (canned_.empty()) throw Error(ErrorCode::invalid_argument, "rule chat needs at least one canned reply");
}

std::string RuleChat::chat(std::span<const Message> messages) {
    if (messages.empty()) throw Error(ErrorCode::invalid_argument, "chat needs at least one message");
    const auto& last = messages.back().content;
    if (auto it = rules_.find(last); it != rules_.end()) return it->second;
    return canned_[fnv1a64(last) % canned_.size()];
}

HashEmbedder::HashEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw Error(ErrorCode::invalid_argument, "embedding dim must be positive");
}

std::string HashEmbedder::id() const { return fmt::format("hash-bow-{}-{}", dim_, seed_); }

Embedding HashEmbedder::embed_one(std::string_view text) const {
    if (text.empty()) throw Error(ErrorCode::invalid_argument, "cannot embed an empty text");
    std::vector<std::string> words;
    std::string word;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c >= 0x80) {
            word += static_cast<char>(std::tolower(c));
        } else if (!word.empty()) {
            words.push_back(std::move(word));
            word.clear();
        }
    }
    if (!word.empty()) words.push_back(std::move(word));
    if (words.empty()) words.emplace_back(text);

    Embedding e;
    e.values.assign(dim_, 0.0);
    for (const auto& w : words) {
        std::uint64_t state = fnv1a64(w) ^ seed_;
        for (auto& v : e.values) {
            const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
            v += 2.0 * u - 1.0;
        }
    }
    double norm = 0.0;
    for (double v : e.values) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw Error(ErrorCode::zero_norm, "hash embedding collapsed to zero");
    for (auto& v : e.values) v /= norm;
    return e;
}

std::vector<Embedding> HashEmbedder::embed(std::span<const std::string> texts) {
    if (texts.empty()) throw Error(ErrorCode::invalid_argument, "embed needs at least one text");
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
}

FixtureVision::FixtureVision(std::shared_ptr<const FixtureManifest> manifest) : manifest_(std::move(manifest)) {
    if (!manifest_) throw Error(ErrorCode::invalid_argument, "null fixture manifest");
}

std::vector<const Plant*> FixtureVision::visible_plants(const PixelWindow& image) const {
    std::set<std::uint32_t> ids;
    for (const auto& m : detect_markers(image)) ids.insert(m.id);
    std::vector<const Plant*> plants;
    for (auto id : ids)
        if (const Plant* p = manifest_->find(id)) plants.push_back(p);
    return plants;
}

std::string FixtureVision::caption(const PixelWindow& image) {
    const auto plants = visible_plants(image);
    if (plants.empty()) return std::string(kNoContentCaption);
    std::string out;
    for (const Plant* p : plants) {
        if (!out.empty()) out += "; ";
        out += fmt::format("region contains marker {}: {}", p->id, p->caption);
    }
    return out;
}

std::string FixtureVision::answer_question(const std::vector<const Plant*>& plants, std::string_view question) const {
    const auto q = normalize_text(question);
    for (const Plant* p : plants) {
        for (const auto& f : p->facts)
            if (normalize_text(f.prompt) == q) return f.answer;
        for (const auto& qa : p->qas)
            if (normalize_text(qa.question) == q) return qa.options[*letter_index(qa.answer)];
    }
    return {};
}

namespace {

std::string option_text(const nlohmann::json& qa, int index) {
    return qa.at("options").at(static_cast<std::size_t>(index)).get<std::string>();
}

int answer_slot(const nlohmann::json& qa) {
    const auto a = qa.at("answer").get<std::string>();
    const auto idx = a.size() == 1 ? letter_index(a[0]) : std::nullopt;
    if (!idx) throw Error(ErrorCode::schema_violation, "context answer is not a letter");
    return *idx;
}

} // namespace

// Builds one cross-patch question whose correct option joins each patch's
// correct answer; each distractor swaps one patch's answer for a wrong option.
std::string FixtureVision::compose(std::string_view prompt) const {
    const auto at = prompt.rfind(kContextTag);
    if (at == std::string_view::npos) return R"({"qas":[]})";
    nlohmann::json ctx;
    try {
        ctx = nlohmann::json::parse(prompt.substr(at + kContextTag.size()));
    } catch (const nlohmann::json::exception&) {
        return R"({"qas":[]})";
    }
    const auto level = ctx.value("level", std::string("regional"));
    const auto& patches = ctx.at("patches");
    const std::size_t n = patches.size();
    if (n < 2) return R"({"qas":[]})";

    std::string regions, questions, correct;
    std::vector<std::vector<std::string>> wrong(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& qa = patches[i].at("qa");
        const int slot = answer_slot(qa);
        if (i > 0) {
            regions += " and ";
            questions += "; ";
            correct += " / ";
        }
        regions += patches[i].at("bbox").dump();
        questions += qa.at("question").get<std::string>();
        correct += option_text(qa, slot);
        for (int k = 0; k < 4; ++k)
            if (k != slot) wrong[i].push_back(option_text(qa, k));
    }
    std::vector<std::string> distractors;
    for (std::size_t j = 0; j < 3; ++j) {
        const std::size_t swapped = j % n;
        std::string text;
        for (std::size_t i = 0; i < n; ++i) {
            if (i > 0) text += " / ";
            if (i == swapped) {
                text += wrong[i][(j / n) % wrong[i].size()];
            } else {
                text += option_text(patches[i].at("qa"), answer_slot(patches[i].at("qa")));
            }
        }
        distractors.push_back(std::move(text));
    }
    const std::string question =
        fmt::format("{} reasoning over regions {}: which combination answers \"{}\" in order?",
                    level == "global" ? "Across distant regions" : "Across neighbouring regions", regions, questions);
    const auto gold = static_cast<int>(fnv1a64(question) % 4);
    std::array<std::string, 4> options;
    for (int k = 0, d = 0; k < 4; ++k) options[k] = (k == gold) ? correct : distractors[d++];
    nlohmann::json qa = {{"question", question}, {"options", options}, {"answer", std::string(1, letter_at(gold))}};
    return nlohmann::json{{"qas", nlohmann::json::array({qa})}}.dump();
}

std::string FixtureVision::answer(const PixelWindow& image, std::string_view prompt) {
    if (prompt.rfind(kRegionalInstruction, 0) == 0 || prompt.rfind(kGlobalInstruction, 0) == 0) {
        return compose(prompt);
    }
    const auto plants = visible_plants(image);
    if (prompt.rfind(kMicroQaInstruction, 0) == 0) {
        auto qas = nlohmann::json::array();
        for (const Plant* p : plants) {
            for (const auto& qa : p->qas) {
                qas.push_back({{"question", qa.question}, {"options", qa.options}, {"answer", std::string(1, qa.answer)}});
            }
        }
        return nlohmann::json{{"qas", qas}}.dump();
    }
    if (auto mc = parse_multiple_choice(prompt)) {
        const auto known = answer_question(plants, mc->question);
        if (!known.empty()) {
            const auto target = normalize_text(known);
            for (int i = 0; i < 4; ++i)
                if (normalize_text(mc->options[i]) == target) return fmt::format("FINAL ANSWER: {}", letter_at(i));
        }
        return std::string(kCannotTell);
    }
    if (auto known = answer_question(plants, prompt); !known.empty()) return known;
    if (plants.empty()) return std::string(kCannotTell);
    return caption(image);
}

std::vector<GroundingBox> FixtureVision::ground(const PixelWindow& image, std::string_view keyword) {
    const auto key = normalize_text(keyword);
    if (key.empty()) throw Error(ErrorCode::invalid_argument, "empty grounding keyword");
    std::vector<std::string> key_words;
    for (std::size_t pos = 0; pos < key.size();) {
        auto end = key.find(' ', pos);
        if (end == std::string::npos) end = key.size();
        key_words.push_back(key.substr(pos, end - pos));
        pos = end + 1;
    }
    std::vector<GroundingBox> boxes;
    std::vector<std::uint32_t> ids;
    for (const auto& m : detect_markers(image)) {
        const Plant* p = manifest_->find(m.id);
        if (!p) continue;
        const auto label = " " + normalize_text(p->label) + " ";
        const bool match = std::all_of(key_words.begin(), key_words.end(), [&](const std::string& w) {
            return label.find(" " + w + " ") != std::string::npos;
        });
        if (!match) continue;
        boxes.push_back({m.bbox, p->score, p->label});
        ids.push_back(m.id);
    }
    std::vector<std::size_t> order(boxes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (boxes[a].score != boxes[b].score) return boxes[a].score > boxes[b].score;
        return ids[a] < ids[b];
    });
    std::vector<GroundingBox> sorted;
    for (auto i : order) sorted.push_back(boxes[i]);
    return sorted;
}

VlmCaptioner::VlmCaptioner(std::shared_ptr<VlmBackend> vlm, std::string prompt)
    : vlm_(std::move(vlm)), prompt_(std::move(prompt)) {
    if (!vlm_) throw Error(ErrorCode::invalid_argument, "null vlm backend");
}

std::string VlmCaptioner::caption(const PixelWindow& image) { return vlm_->answer(image, prompt_); }

std::string to_string(Role role) {
    switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "user";
}

Role parse_role(std::string_view name) {
    if (name == "system") return Role::system;
    if (name == "user") return Role::user;
    if (name == "assistant") return Role::assistant;
    throw Error(ErrorCode::schema_violation, fmt::format("unknown role '{}'", name));
}

} // namespace urba
