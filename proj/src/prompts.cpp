// SPDX-License-Identifier: Apache-2.0
#include "urba/prompts.hpp"

#include <fmt/format.h>

#include <cctype>
#include <sstream>

namespace urba {

std::string multiple_choice_prompt(std::string_view question, const std::array<std::string, 4>& options) {
    std::string out = fmt::format("Question: {}\nOptions:\n", question);
    for (int i = 0; i < 4; ++i) out += fmt::format("{}. {}\n", static_cast<char>('A' + i), options[i]);
    out += kAnswerInstruction;
    return out;
}

std::optional<MultipleChoice> parse_multiple_choice(std::string_view prompt) {
    std::istringstream in{std::string(prompt)};
    std::string line;
    if (!std::getline(in, line) || line.rfind("Question: ", 0) != 0) return std::nullopt;
    MultipleChoice mc;
    mc.question = line.substr(10);
    if (!std::getline(in, line) || line != "Options:") return std::nullopt;
    for (int i = 0; i < 4; ++i) {
        const std::string prefix = fmt::format("{}. ", static_cast<char>('A' + i));
        if (!std::getline(in, line) || line.rfind(prefix, 0) != 0) return std::nullopt;
        mc.options[i] = line.substr(prefix.size());
    }
    return mc;
}

std::string normalize_text(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c >= 0x80) {
            if (pending_space && !out.empty()) out += ' ';
            pending_space = false;
            out += static_cast<char>(std::tolower(c));
        } else {
            pending_space = true;
        }
    }
    return out;
}

} // namespace urba
