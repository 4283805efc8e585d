// SPDX-License-Identifier: Apache-2.0
#include "urba/agent.hpp"

#include "urba/error.hpp"

#include <fmt/format.h>

#include <chrono>
#include <regex>

namespace urba {

void EpisodeConfig::validate() const {
    if (max_tool_calls < 1 || max_model_turns < 1 || default_chunk_num < 1 || retrieval_topk < 1 ||
        max_parse_retries < 0) {
        throw Error(ErrorCode::invalid_argument, "episode budgets must be >= 1 (retries >= 0)");
    }
}

std::string to_string(EpisodeStatus status) {
    switch (status) {
    case EpisodeStatus::answered: return "answered";
    case EpisodeStatus::invalid: return "invalid";
    case EpisodeStatus::budget_exhausted: return "budget_exhausted";
    case EpisodeStatus::backend_failure: return "backend_failure";
    }
    return "invalid";
}

EpisodeStatus parse_episode_status(std::string_view name) {
    for (auto s : {EpisodeStatus::answered, EpisodeStatus::invalid, EpisodeStatus::budget_exhausted,
                   EpisodeStatus::backend_failure}) {
        if (to_string(s) == name) return s;
    }
    throw Error(ErrorCode::schema_violation, fmt::format("unknown episode status '{}'", name));
}

std::string build_system_prompt(const std::vector<ToolSpec>& registry, const QuestionRecord& question,
                                std::int64_t width, std::int64_t height) {
    std::string p;
    p += "You answer a multiple-choice question about a very large image. You cannot see the image; "
         "you work with it only through the tools below.\n\n";
    p += fmt::format("The image is available as handle img_0 ({}×{} pixels).\n\n", width, height);
    p += fmt::format("Question: {}\n", question.question);
    for (int i = 0; i < 4; ++i) p += fmt::format("{}. {}\n", letter_at(i), question.options[i]);
    p += "\nTools:\n";
    for (const auto& t : registry) {
        p += fmt::format("\n### {}\n{}\nArguments:\n", t.name, t.purpose);
        for (const auto& a : t.args) {
            p += fmt::format("- {} ({}, {}", a.name, to_string(a.type), a.required ? "required" : "optional");
            if (!a.required) p += fmt::format(", default {}", a.default_value.dump());
            p += fmt::format("): {}\n", a.description);
        }
        p += fmt::format("Returns: {}\n", to_string(t.result));
    }
    p += "\nTo call a tool, reply with exactly one fenced block tagged tool whose body is a JSON object, e.g.\n"
         "```tool\n{\"tool\": \"crop\", \"args\": {\"image\": \"img_0\", \"bbox\": [0, 0, 512, 512]}}\n```\n"
         "Bounding boxes are [x0, y0, x1, y1] in pixels of the named image. Each tool result arrives as the "
         "next message.\n";
    p += "When you are ready, reply with FINAL ANSWER: <letter>, where <letter> is one of A, B, C or D.\n";
    return p;
}

std::optional<char> extract_answer(std::string_view text) {
    static const std::regex pattern(R"(final\s+answer\s*[:]?\s*[\(\[\*"']*\s*([abcd])(?![a-z0-9]))",
                                    std::regex::icase | std::regex::ECMAScript);
    std::optional<char> found;
    const std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), pattern); it != std::sregex_iterator(); ++it) {
        found = static_cast<char>(std::toupper(static_cast<unsigned char>((*it)[1].str()[0])));
    }
    if (found) return found;
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    if (e - b == 1) {
        const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(s[b])));
        if (c >= 'A' && c <= 'D') return c;
    }
    return std::nullopt;
}

EpisodeResult run_episode(const QuestionRecord& question, const ImageRef& image, ChatBackend& decision,
                          const Backends& backends, const EpisodeConfig& config, const ToolConfig& tools) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    EpisodeResult result;
    result.question_id = question.id;
    ToolConfig tool_config = tools;
    tool_config.default_chunk_number = config.default_chunk_num;
    tool_config.default_topk = config.retrieval_topk;
    ToolContext context(image, backends, tool_config);
    const auto registry = make_tool_registry(config.default_chunk_num, config.retrieval_topk);
    auto finish = [&](EpisodeStatus status) {
        result.status = status;
        result.tool_counts = context.counts();
        result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        return result;
    };

    std::vector<Message> messages;
    messages.push_back({Role::system, build_system_prompt(registry, question, image.width, image.height)});
    messages.push_back({Role::user, "Begin. Plan your first step, then call a tool or answer."});

    int turn = 0;
    int failures = 0;
    auto tool_step = [&](std::string text, std::optional<ToolError> error = std::nullopt) {
        result.transcript.push_back({turn, "tool", text, std::nullopt, std::move(error)});
        messages.push_back({Role::user, std::move(text)});
    };

    while (turn < config.max_model_turns) {
        ++turn;
        std::string reply;
        try {
            reply = decision.chat(messages);
            ++result.model_calls;
        } catch (const std::exception& e) {
            const ErrorCode code = [&] {
                if (const auto* err = dynamic_cast<const Error*>(&e)) return err->code();
                return ErrorCode::backend_unavailable;
            }();
            result.transcript.push_back(
                {turn, "tool", fmt::format("decision backend failed: {}", e.what()), std::nullopt, ToolError{code, e.what()}});
            return finish(EpisodeStatus::backend_failure);
        }

        const auto parsed = scan_tool_calls(reply);
        result.transcript.push_back({turn, "model", reply, parsed.call, std::nullopt});
        messages.push_back({Role::assistant, reply});

        if (parsed.call) {
            if (context.dispatched() >= config.max_tool_calls) {
                if (++failures > config.max_parse_retries) {
                    tool_step(std::string(kToolBudgetNotice));
                    return finish(EpisodeStatus::invalid);
                }
                tool_step(std::string(kToolBudgetNotice));
                continue;
            }
            failures = 0;
            const ToolResult r = context.dispatch(*parsed.call);
            std::string text = render_result(r, tool_config.result_cap_tokens);
            if (parsed.ignored_blocks > 0) {
                text += fmt::format("\n(note: {} later tool block(s) ignored; one call per turn)", parsed.ignored_blocks);
            }
            if (context.dispatched() >= config.max_tool_calls) text += fmt::format("\n{}", kToolBudgetNotice);
            tool_step(std::move(text), r.error);
            continue;
        }
        if (parsed.error) {
            const auto& err = *parsed.error;
            tool_step(fmt::format("ERROR[{}]: {}", to_string(err.code), err.message), err);
            if (++failures > config.max_parse_retries) return finish(EpisodeStatus::invalid);
            continue;
        }
        if (const auto letter = extract_answer(reply)) {
            result.final_answer = letter;
            return finish(EpisodeStatus::answered);
        }
        tool_step(std::string(kAnswerReprompt));
        if (++failures > config.max_parse_retries) break;
    }
    return finish(turn >= config.max_model_turns && failures <= config.max_parse_retries
                      ? EpisodeStatus::budget_exhausted
                      : EpisodeStatus::invalid);
}

std::string transcript_jsonl(const EpisodeResult& result) {
    std::string out;
    for (const auto& step : result.transcript) {
        nlohmann::ordered_json j;
        j["turn"] = step.turn;
        j["role"] = step.role;
        j["text"] = step.text;
        if (step.call) j["call"] = {{"tool", step.call->tool}, {"args", step.call->args}};
        if (step.error) j["error"] = {{"code", std::string(to_string(step.error->code))}, {"msg", step.error->message}};
        out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        out += '\n';
    }
    return out;
}

} // namespace urba
