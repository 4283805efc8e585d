// SPDX-License-Identifier: Apache-2.0
#include "urba/harness.hpp"

#include "urba/error.hpp"
#include "urba/parallel.hpp"
#include "urba/prompts.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

namespace urba {

using OJson = nlohmann::ordered_json;

std::vector<QuestionRecord> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, fmt::format("cannot open manifest {}", path.string()));
    const auto base = path.parent_path();
    std::vector<QuestionRecord> out;
    std::set<std::string> ids;
    std::vector<std::string> missing;
    std::string line;
    for (int line_no = 1; std::getline(in, line); ++line_no) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        QuestionRecord q;
        try {
            q = question_from_json(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::schema_violation, fmt::format("{}:{}: not JSON: {}", path.string(), line_no, e.what()));
        } catch (const Error& e) {
            throw Error(ErrorCode::schema_violation, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
        }
        if (!ids.insert(q.id).second) {
            throw Error(ErrorCode::schema_violation, fmt::format("{}:{}: duplicate id '{}'", path.string(), line_no, q.id));
        }
        if (q.image.is_relative()) q.image = base / q.image;
        if (!std::filesystem::exists(q.image)) missing.push_back(fmt::format("{} (line {})", q.image.string(), line_no));
        out.push_back(std::move(q));
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        throw Error(ErrorCode::io, fmt::format("missing image files: {}", list));
    }
    return out;
}

std::string to_string(EvalMode mode) { return mode == EvalMode::agent ? "agent" : "e2e"; }

EvalMode parse_eval_mode(std::string_view name) {
    if (name == "agent") return EvalMode::agent;
    if (name == "e2e" || name == "end_to_end") return EvalMode::end_to_end;
    throw Error(ErrorCode::invalid_argument, fmt::format("unknown mode '{}' (agent or e2e)", name));
}

OJson to_json(const EpisodeRecord& r) {
    OJson j;
    j["id"] = r.id;
    j["subset"] = to_string(r.subset);
    j["level"] = to_string(r.level);
    j["gold"] = std::string(1, r.gold);
    j["predicted"] = r.predicted ? OJson(std::string(1, *r.predicted)) : OJson(nullptr);
    j["status"] = to_string(r.status);
    j["model_calls"] = r.model_calls;
    OJson counts;
    for (auto name : kToolNames) counts[std::string(name)] = r.tool_counts.at(std::string(name));
    j["tool_counts"] = std::move(counts);
    return j;
}

EpisodeRecord episode_record_from_json(const nlohmann::json& j) {
    try {
        EpisodeRecord r;
        r.id = j.at("id").get<std::string>();
        r.subset = parse_subset(j.at("subset").get<std::string>());
        r.level = parse_level(j.at("level").get<std::string>());
        r.gold = j.at("gold").get<std::string>().at(0);
        if (!j.at("predicted").is_null()) r.predicted = j.at("predicted").get<std::string>().at(0);
        r.status = parse_episode_status(j.at("status").get<std::string>());
        r.model_calls = j.at("model_calls").get<int>();
        for (const auto& [k, v] : j.at("tool_counts").items()) r.tool_counts[k] = v.get<int>();
        return r;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::schema_violation, fmt::format("bad episode record: {}", e.what()));
    }
}

std::optional<double> SliceStats::accuracy() const noexcept {
    if (valid == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(valid);
}

ToolUsage tool_usage_stats(const std::vector<ToolCounts>& episodes) {
    if (episodes.empty()) throw Error(ErrorCode::invalid_argument, "tool usage needs at least one episode");
    ToolUsage usage;
    double sum_of_means = 0.0;
    for (auto name : kToolNames) {
        std::int64_t total = 0;
        for (const auto& e : episodes) {
            if (auto it = e.find(std::string(name)); it != e.end()) total += it->second;
        }
        const double mean = static_cast<double>(total) / static_cast<double>(episodes.size());
        usage.per_tool.emplace_back(std::string(name), mean);
        sum_of_means += mean;
    }
    usage.overall = sum_of_means / static_cast<double>(kToolNames.size());
    return usage;
}

namespace {

void tally(SliceStats& s, const EpisodeRecord& r) {
    ++s.total;
    switch (r.status) {
    case EpisodeStatus::answered:
        ++s.valid;
        if (r.correct()) ++s.correct;
        break;
    case EpisodeStatus::invalid:
    case EpisodeStatus::budget_exhausted: ++s.invalid; break;
    case EpisodeStatus::backend_failure: ++s.failed; break;
    }
}

OJson accuracy_json(const std::optional<double>& a) { return a ? OJson(*a) : OJson("n/a"); }

OJson slice_json(const SliceStats& s) {
    OJson j;
    j["accuracy"] = accuracy_json(s.accuracy());
    j["total"] = s.total;
    j["valid"] = s.valid;
    j["correct"] = s.correct;
    j["invalid"] = s.invalid;
    j["failed"] = s.failed;
    return j;
}

} // namespace

EvalReport compute_report(const std::vector<EpisodeRecord>& records, EvalMode mode) {
    EvalReport report;
    report.mode = mode;
    for (auto s : kAllSubsets) report.subsets.emplace_back(to_string(s), SliceStats{});
    report.categories = {{"humanistic", {}}, {"natural", {}}};
    for (auto l : kAllLevels) report.levels.emplace_back(to_string(l), SliceStats{});
    auto slot = [](auto& slices, const std::string& key) -> SliceStats& {
        for (auto& [k, s] : slices)
            if (k == key) return s;
        throw Error(ErrorCode::invalid_argument, key);
    };
    for (const auto& r : records) {
        tally(report.overall, r);
        tally(slot(report.subsets, to_string(r.subset)), r);
        tally(slot(report.categories, category_of(r.subset)), r);
        tally(slot(report.levels, to_string(r.level)), r);
    }
    double sum = 0.0;
    int used = 0;
    for (const auto& [name, s] : report.subsets) {
        if (auto a = s.accuracy()) {
            sum += *a;
            ++used;
        }
    }
    if (used > 0) report.macro_subsets = sum / used;
    if (mode == EvalMode::agent && !records.empty()) {
        std::vector<ToolCounts> counts;
        counts.reserve(records.size());
        for (const auto& r : records) counts.push_back(r.tool_counts);
        report.tool_usage = tool_usage_stats(counts);
    }
    return report;
}

OJson report_to_json(const EvalReport& report) {
    OJson j;
    j["mode"] = to_string(report.mode);
    j["aggregation"] = "overall accuracy is correct/valid over all questions (micro average); "
                       "overall_macro_subsets is the mean of the subset accuracies";
    j["overall_accuracy"] = accuracy_json(report.overall.accuracy());
    j["overall_macro_subsets"] = accuracy_json(report.macro_subsets);
    j["counts"] = {{"total", report.overall.total},
                   {"valid", report.overall.valid},
                   {"correct", report.overall.correct},
                   {"invalid", report.overall.invalid},
                   {"failed", report.overall.failed}};
    for (const auto* group : {&report.subsets, &report.categories, &report.levels}) {
        OJson slices = OJson::object();
        for (const auto& [name, s] : *group) slices[name] = slice_json(s);
        const char* key = group == &report.subsets ? "subsets" : group == &report.categories ? "categories" : "levels";
        j[key] = std::move(slices);
    }
    if (report.tool_usage) {
        OJson per_tool = OJson::object();
        for (const auto& [name, mean] : report.tool_usage->per_tool) per_tool[name] = mean;
        j["tool_usage"] = {{"per_tool_mean", per_tool}, {"overall_mean", report.tool_usage->overall}};
    } else {
        j["tool_usage"] = nullptr;
    }
    return j;
}

std::string serialize_report(const EvalReport& report) { return report_to_json(report).dump(2) + "\n"; }

namespace {

EpisodeResult run_end_to_end(const QuestionRecord& q, const ImageRef& ref, const EvalConfig& config,
                             const Backends& backends) {
    EpisodeResult result;
    result.question_id = q.id;
    try {
        if (!backends.vlm) throw Error(ErrorCode::backend_unavailable, "no vlm backend configured");
        const PixelWindow small = downsample_to_budget(ref, config.e2e_budget);
        const std::string reply = backends.vlm->answer(small, multiple_choice_prompt(q.question, q.options));
        result.transcript.push_back({1, "model", reply, std::nullopt, std::nullopt});
        result.final_answer = extract_answer(reply);
        result.status = result.final_answer ? EpisodeStatus::answered : EpisodeStatus::invalid;
    } catch (const Error& e) {
        result.transcript.push_back({1, "tool", e.what(), std::nullopt, ToolError{e.code(), e.what()}});
        result.status = EpisodeStatus::backend_failure;
    }
    return result;
}

} // namespace

EvalRun run_eval(const std::vector<QuestionRecord>& questions, const EvalConfig& config, const Backends& backends,
                 const ChatFactory& chat_factory) {
    std::vector<std::size_t> order(questions.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return questions[a].id < questions[b].id; });

    std::vector<EpisodeResult> episodes(questions.size());
    parallel_for(order.size(), config.parallelism, [&](std::size_t slot) {
        const auto& q = questions[order[slot]];
        EpisodeResult& out = episodes[slot];
        ImageRef ref;
        try {
            ref = open_image(q.image);
        } catch (const Error& e) {
            out.question_id = q.id;
            out.status = EpisodeStatus::backend_failure;
            out.transcript.push_back({0, "tool", e.what(), std::nullopt, ToolError{e.code(), e.what()}});
            return;
        }
        if (config.mode == EvalMode::end_to_end) {
            out = run_end_to_end(q, ref, config, backends);
            return;
        }
        std::unique_ptr<ChatBackend> chat;
        try {
            chat = chat_factory(q);
        } catch (const Error& e) {
            out.question_id = q.id;
            out.status = EpisodeStatus::backend_failure;
            out.transcript.push_back({0, "tool", e.what(), std::nullopt, ToolError{e.code(), e.what()}});
            return;
        }
        out = run_episode(q, ref, *chat, backends, config.episode, config.tools);
    });

    EvalRun run;
    for (std::size_t slot = 0; slot < order.size(); ++slot) {
        const auto& q = questions[order[slot]];
        const auto& e = episodes[slot];
        EpisodeRecord r;
        r.id = q.id;
        r.subset = q.subset;
        r.level = q.level;
        r.gold = q.answer;
        r.predicted = e.final_answer;
        r.status = e.status;
        r.tool_counts = e.tool_counts;
        r.model_calls = e.model_calls;
        run.records.push_back(std::move(r));
    }
    run.episodes = std::move(episodes);
    run.report = compute_report(run.records, config.mode);
    return run;
}

void write_episode_artifacts(const EvalRun& run, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "transcripts");
    std::ofstream episodes(dir / "episodes.jsonl", std::ios::binary);
    if (!episodes) throw Error(ErrorCode::io, fmt::format("cannot write {}", (dir / "episodes.jsonl").string()));
    for (const auto& r : run.records) episodes << to_json(r).dump() << '\n';
    for (const auto& e : run.episodes) {
        std::ofstream t(dir / "transcripts" / (e.question_id + ".jsonl"), std::ios::binary);
        t << transcript_jsonl(e);
    }
}

std::vector<EpisodeRecord> load_episode_records(const std::filesystem::path& episodes_jsonl) {
    std::ifstream in(episodes_jsonl);
    if (!in) throw Error(ErrorCode::io, fmt::format("cannot open {}", episodes_jsonl.string()));
    std::vector<EpisodeRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(episode_record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::schema_violation, e.what());
        }
    }
    return out;
}

} // namespace urba
