// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "urba/agent.hpp"
#include "urba/backends.hpp"
#include "urba/fixture.hpp"
#include "urba/question.hpp"
#include "urba/tools.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace urba {

/// JSONL, one QuestionRecord per line. Image paths are resolved against the
/// manifest's directory. Throws schema-violation naming the line, or io
/// listing every missing image.
std::vector<QuestionRecord> load_manifest(const std::filesystem::path& path);

enum class EvalMode { agent, end_to_end };
std::string to_string(EvalMode mode);
EvalMode parse_eval_mode(std::string_view name);

struct EvalConfig {
    EvalMode mode = EvalMode::agent;
    EpisodeConfig episode;
    ToolConfig tools;
    TokenBudget e2e_budget{4096, 28};
    int parallelism = 4;
};

/// A fresh decision backend per question (scripted backends carry state).
using ChatFactory = std::function<std::unique_ptr<ChatBackend>(const QuestionRecord&)>;

/// The per-episode row of the episodes.jsonl artifact.
struct EpisodeRecord {
    std::string id;
    Subset subset = Subset::satellite;
    Level level = Level::micro;
    char gold = 'A';
    std::optional<char> predicted;
    EpisodeStatus status = EpisodeStatus::invalid;
    ToolCounts tool_counts = empty_tool_counts();
    int model_calls = 0;

    bool valid() const noexcept { return status == EpisodeStatus::answered; }
    bool correct() const noexcept { return valid() && predicted == gold; }
};

nlohmann::ordered_json to_json(const EpisodeRecord& r);
EpisodeRecord episode_record_from_json(const nlohmann::json& j);

struct SliceStats {
    std::int64_t total = 0;
    std::int64_t valid = 0;
    std::int64_t correct = 0;
    std::int64_t invalid = 0;  // no parseable answer, including exhausted budgets
    std::int64_t failed = 0;   // backend failures

    /// correct / valid; nullopt when nothing in the slice is valid.
    std::optional<double> accuracy() const noexcept;
    friend bool operator==(const SliceStats&, const SliceStats&) = default;
};

struct ToolUsage {
    std::vector<std::pair<std::string, double>> per_tool;  // kToolNames order
    double overall = 0.0;                                  // mean of the per-tool means
};

/// Mean calls per episode for each tool. Throws invalid-argument when empty.
ToolUsage tool_usage_stats(const std::vector<ToolCounts>& episodes);

struct EvalReport {
    EvalMode mode = EvalMode::agent;
    SliceStats overall;
    std::vector<std::pair<std::string, SliceStats>> subsets;     // all four, fixed order
    std::vector<std::pair<std::string, SliceStats>> categories;  // humanistic, natural
    std::vector<std::pair<std::string, SliceStats>> levels;      // micro, regional, global
    std::optional<double> macro_subsets;                         // mean over subsets with valid > 0
    std::optional<ToolUsage> tool_usage;                         // agent mode only
};

EvalReport compute_report(const std::vector<EpisodeRecord>& records, EvalMode mode);
nlohmann::ordered_json report_to_json(const EvalReport& report);
/// Pretty JSON with a trailing newline; the bytes written as report.json.
std::string serialize_report(const EvalReport& report);

struct EvalRun {
    EvalReport report;
    std::vector<EpisodeRecord> records;   // sorted by question id
    std::vector<EpisodeResult> episodes;  // same order
};

/// Runs every question on a bounded worker pool. Per-episode failures are
/// data: they show up in statuses, never as exceptions.
EvalRun run_eval(const std::vector<QuestionRecord>& questions, const EvalConfig& config, const Backends& backends,
                 const ChatFactory& chat_factory);

/// episodes.jsonl plus transcripts/<id>.jsonl under `dir`.
void write_episode_artifacts(const EvalRun& run, const std::filesystem::path& dir);
std::vector<EpisodeRecord> load_episode_records(const std::filesystem::path& episodes_jsonl);

// ---------------------------------------------------------------------------
// Synthetic marker fixtures

struct PlantRequest {
    std::uint32_t id = 0;
    std::int64_t x = 0;  // approximate centre
    std::int64_t y = 0;
    std::int64_t size = 0;  // 0: the spec's plant_size
    std::string label;
    std::string caption;
    double score = 0.9;
    std::vector<PlantFact> facts;
    std::optional<PlantQA> qa;  // micro question; built from the first fact when absent
};

struct FixturePlantSpec {
    std::vector<PlantRequest> plants;
    std::int64_t plant_size = 256;
    std::int64_t jitter = -1;          // max centre offset; -1 means plant_size / 8
    double distractors_per_mp = 0.0;   // unlabeled filler glyphs per megapixel
    std::int64_t tile = 1024;          // tile size used for question source tiles
    Subset subset = Subset::satellite;
    int max_regional = 4;
    int max_global = 2;
};

FixturePlantSpec plant_spec_from_json(const nlohmann::json& j);

struct GeneratedFixture {
    std::filesystem::path image_path;
    std::filesystem::path plants_path;
    std::filesystem::path questions_path;
    ImageRef image;
    FixtureManifest manifest;
    std::vector<QuestionRecord> questions;
    std::vector<std::vector<BBox>> source_tiles;  // aligned with questions
};

/// Writes image.ursy, plants.json and questions.jsonl into `out_dir`.
/// Throws invalid-spec for undersized images, out-of-range ids or
/// overlapping plants.
GeneratedFixture generate_fixture(std::uint64_t seed, std::int64_t width, std::int64_t height,
                                  const FixturePlantSpec& spec, const std::filesystem::path& out_dir);

} // namespace urba
