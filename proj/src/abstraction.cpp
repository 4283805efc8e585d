// SPDX-License-Identifier: Apache-2.0
#include "urba/abstraction.hpp"

#include "urba/error.hpp"
#include "urba/parallel.hpp"

#include <fmt/format.h>

#include <fstream>
#include <optional>

namespace urba {

std::int64_t count_tokens(std::string_view text) {
    return static_cast<std::int64_t>((text.size() + 3) / 4);
}

std::string truncate_to_tokens(std::string_view text, std::int64_t max_tokens, const TokenCounter& counter,
                               std::string_view marker) {
    if (counter(text) <= max_tokens) return std::string(text);
    // Candidate cut points: every code point boundary.
    std::vector<std::size_t> cuts;
    cuts.reserve(text.size() + 1);
    for (std::size_t i = 0; i <= text.size(); ++i) {
        if (i == text.size() || (static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) cuts.push_back(i);
    }
    auto fits = [&](std::size_t len) {
        std::string candidate(text.substr(0, len));
        candidate += marker;
        return counter(candidate) <= max_tokens;
    };
    std::size_t lo = 0, hi = cuts.size();  // answer in [lo, hi)
    if (!fits(cuts[0])) return std::string(marker);
    while (hi - lo > 1) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (fits(cuts[mid])) lo = mid;
        else hi = mid;
    }
    std::string out(text.substr(0, cuts[lo]));
    out += marker;
    return out;
}

std::int64_t AbstractionIndex::total_caption_tokens() const noexcept {
    std::int64_t total = 0;
    for (const auto& c : chunks) total += c.caption_tokens;
    return total;
}

namespace {

struct CaptionOutcome {
    std::optional<std::string> text;
    std::optional<ErrorCode> error;
};

} // namespace

AbstractionIndex abstract_view(const ImageView& view, std::string image_id, int chunk_num,
                               CaptionBackend& captioner, const TokenBudget& budget,
                               const AbstractionOptions& options) {
    if (chunk_num < 1) {
        throw Error(ErrorCode::invalid_argument, fmt::format("chunk_num must be >= 1, got {}", chunk_num));
    }
    budget.validate();
    options.caption_input.validate();

    AbstractionIndex index;
    index.image_id = std::move(image_id);
    index.width = view.width();
    index.height = view.height();
    index.requested_n = chunk_num;
    index.grid = grid_shape(view.width(), view.height(), chunk_num);
    index.budget = budget;
    const auto cells = grid_cells(view.width(), view.height(), index.grid);

    std::vector<CaptionOutcome> outcomes(cells.size());
    parallel_for(cells.size(), options.parallelism, [&](std::size_t i) {
        const PixelWindow input = view.crop(cells[i]).downsample(options.caption_input);
        try {
            std::string text = captioner.caption(input);
            if (text.empty()) {
                outcomes[i].error = ErrorCode::abstraction_failed;
            } else {
                outcomes[i].text = std::move(text);
            }
        } catch (const Error& e) {
            outcomes[i].error = e.code();
        } catch (const std::exception&) {
            outcomes[i].error = ErrorCode::abstraction_failed;
        }
    });

    bool any_ok = false;
    bool unreachable = false;
    index.chunks.reserve(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
        Chunk chunk;
        chunk.id = static_cast<int>(i);
        chunk.region = cells[i];
        if (outcomes[i].text) {
            chunk.caption = truncate_to_tokens(*outcomes[i].text, budget.max_tokens, options.counter);
            any_ok = true;
        } else {
            chunk.caption = std::string(kPlaceholderCaption);
            chunk.failed = true;
            unreachable = unreachable || outcomes[i].error == ErrorCode::backend_unavailable;
        }
        chunk.caption_tokens = options.counter(chunk.caption);
        index.chunks.push_back(std::move(chunk));
    }
    if (!any_ok) {
        if (unreachable) throw Error(ErrorCode::backend_unavailable, "captioner unreachable for every chunk");
        throw Error(ErrorCode::abstraction_failed, fmt::format("all {} chunk captions failed", cells.size()));
    }
    return index;
}

AbstractionIndex abstract_image(const ImageRef& ref, int chunk_num, CaptionBackend& captioner,
                                const TokenBudget& budget, const AbstractionOptions& options) {
    return abstract_view(ImageView(ref), ref.path.filename().string(), chunk_num, captioner, budget, options);
}

void validate_index(const AbstractionIndex& index) {
    auto corrupt = [](const std::string& msg) { return Error(ErrorCode::index_corrupt, msg); };
    if (index.width < 1 || index.height < 1 || index.requested_n < 1) {
        throw corrupt("non-positive dimensions or chunk count");
    }
    const GridShape expected = grid_shape(index.width, index.height, index.requested_n);
    if (!(expected == index.grid)) {
        throw corrupt(fmt::format("grid {}x{} does not match the partition of {}x{} into {}", index.grid.rows,
                                  index.grid.cols, index.width, index.height, index.requested_n));
    }
    const auto cells = grid_cells(index.width, index.height, index.grid);
    if (index.chunks.size() != cells.size()) {
        throw corrupt(fmt::format("expected {} chunks, found {}", cells.size(), index.chunks.size()));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = index.chunks[i];
        if (c.id != static_cast<int>(i)) throw corrupt(fmt::format("chunk {} out of order", c.id));
        if (!(c.region == cells[i])) {
            throw corrupt(fmt::format("chunk {} region {} differs from grid cell {}", c.id, c.region.to_string(),
                                      cells[i].to_string()));
        }
        if (c.caption.empty()) throw corrupt(fmt::format("chunk {} has an empty caption", c.id));
        if (c.caption_tokens < 0 || c.caption_tokens > index.budget.max_tokens) {
            throw corrupt(fmt::format("chunk {} caption_tokens {} exceeds {}", c.id, c.caption_tokens,
                                      index.budget.max_tokens));
        }
    }
}

nlohmann::ordered_json index_to_json(const AbstractionIndex& index) {
    nlohmann::ordered_json j;
    j["version"] = index.version;
    j["image_id"] = index.image_id;
    j["width"] = index.width;
    j["height"] = index.height;
    j["requested_n"] = index.requested_n;
    j["grid"] = {{"rows", index.grid.rows}, {"cols", index.grid.cols}};
    j["budget"] = {{"max_tokens", index.budget.max_tokens},
                   {"pixels_per_token_side", index.budget.pixels_per_token_side}};
    auto chunks = nlohmann::ordered_json::array();
    for (const auto& c : index.chunks) {
        nlohmann::ordered_json cj;
        cj["id"] = c.id;
        cj["bbox"] = {c.region.x0, c.region.y0, c.region.x1, c.region.y1};
        cj["caption"] = c.caption;
        cj["caption_tokens"] = c.caption_tokens;
        cj["failed"] = c.failed;
        chunks.push_back(std::move(cj));
    }
    j["chunks"] = std::move(chunks);
    return j;
}

AbstractionIndex index_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::malformed_file, "index is not a JSON object");
    if (!j.contains("version") || !j["version"].is_number_integer()) {
        throw Error(ErrorCode::malformed_file, "index has no integer version");
    }
    if (j["version"].get<int>() != kIndexVersion) {
        throw Error(ErrorCode::version_mismatch,
                    fmt::format("index version {} is not supported (expected {})", j["version"].get<int>(),
                                kIndexVersion));
    }
    AbstractionIndex index;
    try {
        index.image_id = j.at("image_id").get<std::string>();
        index.width = j.at("width").get<std::int64_t>();
        index.height = j.at("height").get<std::int64_t>();
        index.requested_n = j.at("requested_n").get<int>();
        index.grid.rows = j.at("grid").at("rows").get<int>();
        index.grid.cols = j.at("grid").at("cols").get<int>();
        index.budget.max_tokens = j.at("budget").at("max_tokens").get<std::int64_t>();
        index.budget.pixels_per_token_side = j.at("budget").at("pixels_per_token_side").get<std::int64_t>();
        for (const auto& cj : j.at("chunks")) {
            Chunk c;
            c.id = cj.at("id").get<int>();
            const auto& b = cj.at("bbox");
            if (!b.is_array() || b.size() != 4) throw Error(ErrorCode::malformed_file, "chunk bbox must have 4 ints");
            c.region = BBox{b[0].get<std::int64_t>(), b[1].get<std::int64_t>(), b[2].get<std::int64_t>(),
                            b[3].get<std::int64_t>()};
            c.caption = cj.at("caption").get<std::string>();
            c.caption_tokens = cj.at("caption_tokens").get<std::int64_t>();
            c.failed = cj.at("failed").get<bool>();
            index.chunks.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::malformed_file, fmt::format("malformed index: {}", e.what()));
    }
    try {
        validate_index(index);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::index_corrupt) throw;
        throw Error(ErrorCode::index_corrupt, e.what());
    }
    return index;
}

void save_index(const AbstractionIndex& index, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, fmt::format("cannot write {}", path.string()));
    out << index_to_json(index).dump(2) << '\n';
    if (!out) throw Error(ErrorCode::io, fmt::format("write failed for {}", path.string()));
}

AbstractionIndex load_index(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, fmt::format("cannot open {}", path.string()));
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::malformed_file, fmt::format("{}: {}", path.string(), e.what()));
    }
    return index_from_json(j);
}

} // namespace urba
