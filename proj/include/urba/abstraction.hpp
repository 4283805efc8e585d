// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "urba/backends.hpp"
#include "urba/geometry.hpp"
#include "urba/image_store.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace urba {

inline constexpr int kIndexVersion = 1;
inline constexpr std::string_view kPlaceholderCaption = "[uncaptioned]";
inline constexpr std::string_view kTruncationMarker = "…";

using TokenCounter = std::function<std::int64_t(std::string_view)>;

/// ceil(utf8 bytes / 4).
std::int64_t count_tokens(std::string_view text);

/// Longest prefix of `text` that, with the trailing marker, fits in
/// `max_tokens`. Cuts only at UTF-8 code point boundaries. Returns `text`
/// unchanged when it already fits.
std::string truncate_to_tokens(std::string_view text, std::int64_t max_tokens,
                               const TokenCounter& counter = count_tokens,
                               std::string_view marker = kTruncationMarker);

struct Chunk {
    int id = 0;
    BBox region;
    std::string caption;
    std::int64_t caption_tokens = 0;
    bool failed = false;

    friend bool operator==(const Chunk&, const Chunk&) = default;
};

struct AbstractionIndex {
    int version = kIndexVersion;
    std::string image_id;
    std::int64_t width = 0;
    std::int64_t height = 0;
    int requested_n = 0;
    GridShape grid;
    TokenBudget budget;
    std::vector<Chunk> chunks;

    /// T_lang of the whole caption set.
    std::int64_t total_caption_tokens() const noexcept;
    friend bool operator==(const AbstractionIndex&, const AbstractionIndex&) = default;
};

struct AbstractionOptions {
    /// Each chunk is downsampled to this before captioning.
    TokenBudget caption_input{4096, 28};
    int parallelism = 4;
    TokenCounter counter = count_tokens;
};

/// Partitions `view`, captions every chunk and caps each caption at
/// `budget.max_tokens`. A chunk whose caption request fails gets the
/// placeholder and is flagged; at least one caption must succeed.
AbstractionIndex abstract_view(const ImageView& view, std::string image_id, int chunk_num,
                               CaptionBackend& captioner, const TokenBudget& budget,
                               const AbstractionOptions& options = {});

AbstractionIndex abstract_image(const ImageRef& ref, int chunk_num, CaptionBackend& captioner,
                                const TokenBudget& budget, const AbstractionOptions& options = {});

/// Structural checks; throws index-corrupt.
void validate_index(const AbstractionIndex& index);

nlohmann::ordered_json index_to_json(const AbstractionIndex& index);
AbstractionIndex index_from_json(const nlohmann::json& j);
void save_index(const AbstractionIndex& index, const std::filesystem::path& path);
AbstractionIndex load_index(const std::filesystem::path& path);

} // namespace urba
