// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace urba {

// Instructions sent with image windows. The mock generator recognises them
// by prefix, so they are part of the protocol between the data engine and
// whatever answers it.

inline constexpr std::string_view kMicroQaInstruction =
    "Write zero to two four-option single-choice questions about details visible in this image tile. "
    "Reply with strict JSON only: {\"qas\":[{\"question\":str,\"options\":[str,str,str,str],\"answer\":\"A\"|\"B\"|\"C\"|\"D\"}]}.";

inline constexpr std::string_view kRegionalInstruction =
    "The image shows adjacent patches of one large image. Using the patches, their bounding boxes and their "
    "question-answer pairs listed after CONTEXT:, write one four-option single-choice question that needs "
    "reasoning across the patches. Reply with strict JSON only, in the same shape as the micro questions.";

inline constexpr std::string_view kGlobalInstruction =
    "The image shows distant, non-adjacent patches of one large image. Using the patches, their bounding boxes "
    "and their question-answer pairs listed after CONTEXT:, write one four-option single-choice question that "
    "integrates information from the distant regions. Reply with strict JSON only, in the same shape as the "
    "micro questions.";

inline constexpr std::string_view kContextTag = "CONTEXT:";

inline constexpr std::string_view kAnswerInstruction =
    "Answer with the letter of the correct option in the form \"FINAL ANSWER: <letter>\".";

struct MultipleChoice {
    std::string question;
    std::array<std::string, 4> options;
};

/// "Question: ...\nOptions:\nA. ...\n...\n" followed by kAnswerInstruction.
std::string multiple_choice_prompt(std::string_view question, const std::array<std::string, 4>& options);

/// Inverse of multiple_choice_prompt; nullopt for anything else.
std::optional<MultipleChoice> parse_multiple_choice(std::string_view prompt);

/// Lowercase ASCII letters and digits, everything else collapsed to single spaces.
std::string normalize_text(std::string_view text);

} // namespace urba
