// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "urba/backends.hpp"
#include "urba/question.hpp"
#include "urba/tools.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace urba {

struct EpisodeConfig {
    int max_tool_calls = 12;
    int max_parse_retries = 2;
    int max_model_turns = 20;
    int default_chunk_num = 10;
    int retrieval_topk = 5;

    void validate() const;
};

enum class EpisodeStatus { answered, invalid, budget_exhausted, backend_failure };

std::string to_string(EpisodeStatus status);
EpisodeStatus parse_episode_status(std::string_view name);

struct TranscriptStep {
    int turn = 0;
    std::string role;  // "model" or "tool"
    std::string text;
    std::optional<ToolCall> call;
    std::optional<ToolError> error;
};

struct EpisodeResult {
    std::string question_id;
    std::optional<char> final_answer;
    EpisodeStatus status = EpisodeStatus::invalid;
    std::vector<TranscriptStep> transcript;
    ToolCounts tool_counts = empty_tool_counts();
    int model_calls = 0;
    double wall_time_s = 0.0;
};

inline constexpr std::string_view kAnswerReprompt = "Respond with FINAL ANSWER: <letter>.";
inline constexpr std::string_view kToolBudgetNotice =
    "Tool budget exhausted: no more tool calls will run. Respond with FINAL ANSWER: <letter>.";

std::string build_system_prompt(const std::vector<ToolSpec>& registry, const QuestionRecord& question,
                                std::int64_t width, std::int64_t height);

/// Last "FINAL ANSWER: X" (any case, optional punctuation around X), or a
/// reply that is nothing but one letter A-D.
std::optional<char> extract_answer(std::string_view text);

/// Runs one question to completion. Never throws for model or tool failures;
/// those end up in the status and transcript.
EpisodeResult run_episode(const QuestionRecord& question, const ImageRef& image, ChatBackend& decision,
                          const Backends& backends, const EpisodeConfig& config = {},
                          const ToolConfig& tools = {});

/// One JSON object per step: {turn, role, text, call?, error?}.
std::string transcript_jsonl(const EpisodeResult& result);

} // namespace urba
