// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "urba/backends.hpp"
#include "urba/image_store.hpp"
#include "urba/question.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace urba {

struct Provenance {
    std::string backend;
    std::string prompt_hash;  // 16 hex digits of FNV-1a 64
    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct QACandidate {
    std::string question;
    std::array<std::string, 4> options;
    char answer = 'A';
    Level level = Level::micro;
    std::vector<BBox> source_tiles;
    std::string language = "en";
    Provenance provenance;

    friend bool operator==(const QACandidate&, const QACandidate&) = default;
};

/// Option structure plus the level rule: micro has one tile, regional tiles
/// form one connected group under `adjacent`, global tiles include at least
/// one non-adjacent pair. Throws schema-violation.
void validate_candidate(const QACandidate& candidate);

/// Row-major tile x tile cells; the last column and row shrink to fit.
std::vector<BBox> tile_grid(std::int64_t width, std::int64_t height, std::int64_t tile);
std::vector<BBox> tile_image(const ImageRef& ref, std::int64_t tile);

std::string prompt_hash(std::string_view prompt);

/// Strict parse of {"qas":[{question, options[4], answer}]}; throws
/// schema-violation. Does not enforce a count.
std::vector<QACandidate> parse_qa_reply(std::string_view reply);

struct MicroOutcome {
    std::vector<QACandidate> candidates;
    std::optional<std::string> rejection;
};

/// Up to two micro questions for one tile. Unparseable or over-count
/// replies are rejected whole. Backend errors propagate.
MicroOutcome gen_micro(const PixelWindow& tile_window, const BBox& tile, VlmBackend& generator,
                       const std::string& generator_id);

struct TilePatch {
    BBox tile;
    ImageView view;  // the tile's pixels
    QACandidate qa;  // its micro question
};

struct ComposeCounts {
    int regional = 1;
    int global = 1;
    int min_group = 2;
    int max_group = 3;
    std::uint64_t seed = 0;
    int max_attempts = 64;
    TokenBudget patch_budget{256, 28};
};

struct ComposeOutcome {
    std::vector<QACandidate> candidates;
    int regional_shortfall = 0;
    int global_shortfall = 0;
    std::vector<std::string> log;
};

/// Samples tile groups (connected for regional, containing a non-adjacent
/// pair for global) and asks the generator for one question per group.
ComposeOutcome compose_levels(const std::vector<TilePatch>& patches, VlmBackend& generator,
                              const std::string& generator_id, const ComposeCounts& counts);

enum class FilterVerdict { keep, drop_too_easy, drop_malformed, unfiltered };

/// "kept", "dropped:too-easy", "dropped:malformed", "unfiltered".
std::string to_string(FilterVerdict verdict);

struct FilterConfig {
    TokenBudget budget{1024, 28};
    int trials = 3;
    int drop_threshold = 2;  // correct answers that make a question too easy
};

/// `compressed` is the whole image already downsampled to the filter budget.
FilterVerdict auto_filter(const QACandidate& candidate, const PixelWindow& compressed, VlmBackend& filter,
                          const FilterConfig& config = {});
FilterVerdict auto_filter(const QACandidate& candidate, const ImageRef& ref, VlmBackend& filter,
                          const FilterConfig& config = {});

struct ObjectCountConfig {
    std::int64_t tile = 1024;
    TokenBudget tile_budget{4096, 28};
    double merge_iou = 0.5;
};

struct DetectedObject {
    BBox bbox;  // image coordinates; the union of merged detections
    std::string label;
    double score = 0.0;
};

/// Grounds every vocabulary word in every tile and merges detections of the
/// same object: boxes overlapping with IoU >= merge_iou, and pieces cut by a
/// tile seam (both touching the seam, 1-D IoU along it >= merge_iou).
std::vector<DetectedObject> detect_objects(const ImageRef& ref, GroundBackend& grounder,
                                           const std::vector<std::string>& vocabulary,
                                           const ObjectCountConfig& config = {});
std::int64_t object_count(const ImageRef& ref, GroundBackend& grounder, const std::vector<std::string>& vocabulary,
                          const ObjectCountConfig& config = {});

struct DatagenConfig {
    std::int64_t tile = 1024;
    TokenBudget micro_input{4096, 28};
    ComposeCounts compose;
    FilterConfig filter;
    Subset subset = Subset::satellite;
    int parallelism = 4;
};

struct CandidateRecord {
    std::string id;
    std::string image;
    Subset subset = Subset::satellite;
    QACandidate candidate;
    std::string status;  // a FilterVerdict name or "pending-review"
};

struct DatagenReport {
    std::vector<CandidateRecord> records;
    std::vector<std::string> log;
    int tiles = 0;
    int micro_rejected = 0;
    int regional_shortfall = 0;
    int global_shortfall = 0;
};

/// Tiles, generates micro questions, composes regional and global ones and
/// filters them. Without a filter backend every candidate is "pending-review".
DatagenReport run_datagen(const ImageRef& ref, VlmBackend& generator, const std::string& generator_id,
                          VlmBackend* filter, const DatagenConfig& config = {});

nlohmann::ordered_json to_json(const CandidateRecord& record);

} // namespace urba
