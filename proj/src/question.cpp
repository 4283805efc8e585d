// SPDX-License-Identifier: Apache-2.0
#include "urba/question.hpp"

#include "urba/error.hpp"

#include <fmt/format.h>

#include <set>

namespace urba {

std::string to_string(Level level) {
    switch (level) {
    case Level::micro: return "micro";
    case Level::regional: return "regional";
    case Level::global: return "global";
    }
    return "unknown";
}

std::string to_string(Subset subset) {
    switch (subset) {
    case Subset::portrait_scroll: return "portrait_scroll";
    case Subset::narrative_scroll: return "narrative_scroll";
    case Subset::satellite: return "satellite";
    case Subset::street_view: return "street_view";
    }
    return "unknown";
}

Level parse_level(std::string_view name) {
    for (auto l : kAllLevels)
        if (to_string(l) == name) return l;
    throw Error(ErrorCode::schema_violation, fmt::format("unknown level '{}'", name));
}

Subset parse_subset(std::string_view name) {
    for (auto s : kAllSubsets)
        if (to_string(s) == name) return s;
    throw Error(ErrorCode::schema_violation, fmt::format("unknown subset '{}'", name));
}

std::string category_of(Subset subset) {
    return (subset == Subset::portrait_scroll || subset == Subset::narrative_scroll) ? "humanistic" : "natural";
}

std::optional<int> letter_index(char letter) noexcept {
    if (letter >= 'A' && letter <= 'D') return letter - 'A';
    return std::nullopt;
}

char letter_at(int index) noexcept { return static_cast<char>('A' + index); }

void validate_choices(const std::array<std::string, 4>& options, char answer) {
    std::set<std::string> seen;
    for (const auto& o : options) {
        if (o.empty()) throw Error(ErrorCode::schema_violation, "empty option");
        if (!seen.insert(o).second) throw Error(ErrorCode::schema_violation, fmt::format("duplicate option '{}'", o));
    }
    if (!letter_index(answer)) {
        throw Error(ErrorCode::schema_violation, fmt::format("answer '{}' is not one of A-D", answer));
    }
}

void QuestionRecord::validate() const {
    if (id.empty()) throw Error(ErrorCode::schema_violation, "empty id");
    if (question.empty()) throw Error(ErrorCode::schema_violation, "empty question");
    validate_choices(options, answer);
}

nlohmann::ordered_json to_json(const QuestionRecord& q) {
    nlohmann::ordered_json j;
    j["id"] = q.id;
    j["image"] = q.image.string();
    j["subset"] = to_string(q.subset);
    j["level"] = to_string(q.level);
    j["question"] = q.question;
    j["options"] = q.options;
    j["answer"] = std::string(1, q.answer);
    j["language"] = q.language;
    return j;
}

QuestionRecord question_from_json(const nlohmann::json& j) {
    auto field = [&](const char* key) -> const nlohmann::json& {
        if (!j.is_object() || !j.contains(key)) {
            throw Error(ErrorCode::schema_violation, fmt::format("missing field '{}'", key));
        }
        return j.at(key);
    };
    auto text = [&](const char* key) {
        const auto& v = field(key);
        if (!v.is_string()) throw Error(ErrorCode::schema_violation, fmt::format("field '{}' must be a string", key));
        return v.get<std::string>();
    };
    QuestionRecord q;
    q.id = text("id");
    q.image = text("image");
    q.subset = parse_subset(text("subset"));
    q.level = parse_level(text("level"));
    q.question = text("question");
    const auto& opts = field("options");
    if (!opts.is_array() || opts.size() != 4) {
        throw Error(ErrorCode::schema_violation, "field 'options' must hold exactly 4 strings");
    }
    for (std::size_t i = 0; i < 4; ++i) {
        if (!opts[i].is_string()) throw Error(ErrorCode::schema_violation, "options must be strings");
        q.options[i] = opts[i].get<std::string>();
    }
    const auto answer = text("answer");
    if (answer.size() != 1) throw Error(ErrorCode::schema_violation, fmt::format("answer '{}' is not one of A-D", answer));
    q.answer = answer[0];
    q.language = j.contains("language") ? text("language") : "en";
    q.validate();
    return q;
}

} // namespace urba
