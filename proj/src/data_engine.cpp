// SPDX-License-Identifier: Apache-2.0
#include "urba/data_engine.hpp"

#include "urba/agent.hpp"
#include "urba/error.hpp"
#include "urba/fixture.hpp"
#include "urba/hash.hpp"
#include "urba/parallel.hpp"
#include "urba/prompts.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cstring>
#include <numeric>
#include <random>
#include <set>

namespace urba {

using Json = nlohmann::json;

namespace {

bool connected(const std::vector<BBox>& tiles) {
    if (tiles.empty()) return false;
    std::vector<bool> seen(tiles.size(), false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    std::size_t reached = 1;
    while (!stack.empty()) {
        const auto i = stack.back();
        stack.pop_back();
        for (std::size_t j = 0; j < tiles.size(); ++j) {
            if (!seen[j] && adjacent(tiles[i], tiles[j])) {
                seen[j] = true;
                ++reached;
                stack.push_back(j);
            }
        }
    }
    return reached == tiles.size();
}

bool has_distant_pair(const std::vector<BBox>& tiles) {
    for (std::size_t i = 0; i < tiles.size(); ++i)
        for (std::size_t j = i + 1; j < tiles.size(); ++j)
            if (!adjacent(tiles[i], tiles[j])) return true;
    return false;
}

} // namespace

void validate_candidate(const QACandidate& c) {
    if (c.question.empty()) throw Error(ErrorCode::schema_violation, "empty question");
    validate_choices(c.options, c.answer);
    const auto& t = c.source_tiles;
    for (std::size_t i = 0; i < t.size(); ++i) {
        for (std::size_t j = i + 1; j < t.size(); ++j) {
            if (t[i] == t[j]) throw Error(ErrorCode::schema_violation, "duplicate source tile");
        }
    }
    switch (c.level) {
    case Level::micro:
        if (t.size() != 1) {
            throw Error(ErrorCode::schema_violation, fmt::format("micro question with {} source tiles", t.size()));
        }
        break;
    case Level::regional:
        if (t.size() < 2 || !connected(t)) {
            throw Error(ErrorCode::schema_violation, "regional question needs >= 2 connected adjacent tiles");
        }
        break;
    case Level::global:
        if (t.size() < 2 || !has_distant_pair(t)) {
            throw Error(ErrorCode::schema_violation, "global question needs a non-adjacent pair of tiles");
        }
        break;
    }
}

std::vector<BBox> tile_grid(std::int64_t width, std::int64_t height, std::int64_t tile) {
    if (tile < 64) throw Error(ErrorCode::invalid_argument, fmt::format("tile size {} is below 64", tile));
    if (width < 1 || height < 1) throw Error(ErrorCode::invalid_argument, "image must be non-empty");
    std::vector<BBox> tiles;
    for (std::int64_t y = 0; y < height; y += tile)
        for (std::int64_t x = 0; x < width; x += tile)
            tiles.push_back(BBox{x, y, std::min(x + tile, width), std::min(y + tile, height)});
    return tiles;
}

std::vector<BBox> tile_image(const ImageRef& ref, std::int64_t tile) { return tile_grid(ref.width, ref.height, tile); }

std::string prompt_hash(std::string_view prompt) { return fmt::format("{:016x}", fnv1a64(prompt)); }

std::vector<QACandidate> parse_qa_reply(std::string_view reply) {
    Json j;
    try {
        j = Json::parse(reply);
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::schema_violation, fmt::format("reply is not JSON: {}", e.what()));
    }
    if (!j.is_object() || !j.contains("qas") || !j["qas"].is_array()) {
        throw Error(ErrorCode::schema_violation, R"(reply must be {"qas": [...]})");
    }
    std::vector<QACandidate> out;
    for (const auto& q : j["qas"]) {
        if (!q.is_object() || !q.contains("question") || !q["question"].is_string() || !q.contains("options") ||
            !q["options"].is_array() || q["options"].size() != 4 || !q.contains("answer") || !q["answer"].is_string()) {
            throw Error(ErrorCode::schema_violation, "qa needs question, 4 options and an answer letter");
        }
        QACandidate c;
        c.question = q["question"].get<std::string>();
        for (std::size_t i = 0; i < 4; ++i) {
            if (!q["options"][i].is_string()) throw Error(ErrorCode::schema_violation, "options must be strings");
            c.options[i] = q["options"][i].get<std::string>();
        }
        const auto answer = q["answer"].get<std::string>();
        if (answer.size() != 1) throw Error(ErrorCode::schema_violation, fmt::format("bad answer '{}'", answer));
        c.answer = answer[0];
        if (c.question.empty()) throw Error(ErrorCode::schema_violation, "empty question");
        validate_choices(c.options, c.answer);
        out.push_back(std::move(c));
    }
    return out;
}

MicroOutcome gen_micro(const PixelWindow& tile_window, const BBox& tile, VlmBackend& generator,
                       const std::string& generator_id) {
    const std::string prompt(kMicroQaInstruction);
    const std::string reply = generator.answer(tile_window, prompt);
    MicroOutcome out;
    std::vector<QACandidate> qas;
    try {
        qas = parse_qa_reply(reply);
    } catch (const Error& e) {
        out.rejection = fmt::format("tile {}: rejected reply ({})", tile.to_string(), e.what());
        return out;
    }
    if (qas.size() > 2) {
        out.rejection = fmt::format("tile {}: rejected reply with {} questions (limit 2)", tile.to_string(), qas.size());
        return out;
    }
    for (auto& c : qas) {
        c.level = Level::micro;
        c.source_tiles = {tile};
        c.provenance = {generator_id, prompt_hash(prompt)};
        out.candidates.push_back(std::move(c));
    }
    return out;
}

namespace {

PixelWindow montage(const std::vector<PixelWindow>& parts) {
    std::int64_t width = 0, height = 0;
    for (const auto& p : parts) {
        width += p.width();
        height = std::max(height, p.height());
    }
    PixelWindow out = PixelWindow::blank(width, height);
    std::int64_t x = 0;
    for (const auto& p : parts) {
        for (std::int64_t y = 0; y < p.height(); ++y) {
            std::memcpy(out.at(x, y), p.at(0, y), static_cast<std::size_t>(p.width() * 3));
        }
        x += p.width();
    }
    return out;
}

Json qa_json(const QACandidate& c) {
    return {{"question", c.question}, {"options", c.options}, {"answer", std::string(1, c.answer)}};
}

} // namespace

ComposeOutcome compose_levels(const std::vector<TilePatch>& patches, VlmBackend& generator,
                              const std::string& generator_id, const ComposeCounts& counts) {
    ComposeOutcome out;
    std::mt19937_64 rng(counts.seed);
    auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
    const std::size_t n = patches.size();
    const int min_group = std::max(2, counts.min_group);
    const int max_group = std::max(min_group, counts.max_group);
    std::set<std::vector<std::size_t>> used;

    auto regional_group = [&]() -> std::vector<std::size_t> {
        const int target = min_group + static_cast<int>(pick(static_cast<std::size_t>(max_group - min_group + 1)));
        std::vector<std::size_t> group{pick(n)};
        while (static_cast<int>(group.size()) < target) {
            std::vector<std::size_t> frontier;
            for (std::size_t j = 0; j < n; ++j) {
                if (std::find(group.begin(), group.end(), j) != group.end()) continue;
                for (auto g : group) {
                    if (adjacent(patches[g].tile, patches[j].tile)) {
                        frontier.push_back(j);
                        break;
                    }
                }
            }
            if (frontier.empty()) break;
            group.push_back(frontier[pick(frontier.size())]);
        }
        return group;
    };
    auto global_group = [&]() -> std::vector<std::size_t> {
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (!adjacent(patches[i].tile, patches[j].tile)) pairs.emplace_back(i, j);
        if (pairs.empty()) return {};
        const auto [a, b] = pairs[pick(pairs.size())];
        return {a, b};
    };

    auto produce = [&](Level level, int wanted) {
        int made = 0;
        const std::string_view instruction = level == Level::regional ? kRegionalInstruction : kGlobalInstruction;
        for (int attempt = 0; made < wanted && attempt < counts.max_attempts && n >= 2; ++attempt) {
            auto group = level == Level::regional ? regional_group() : global_group();
            if (group.size() < 2) {
                if (level == Level::global) break;  // no non-adjacent pair exists at all
                continue;
            }
            auto key = group;
            std::sort(key.begin(), key.end());
            if (!used.insert(key).second) continue;

            Json context = {{"level", to_string(level)}, {"patches", Json::array()}};
            std::vector<PixelWindow> parts;
            std::vector<BBox> tiles;
            for (std::size_t k = 0; k < group.size(); ++k) {
                const auto& p = patches[group[k]];
                const BBox& t = p.tile;
                context["patches"].push_back(
                    {{"index", k}, {"bbox", {t.x0, t.y0, t.x1, t.y1}}, {"qa", qa_json(p.qa)}});
                parts.push_back(p.view.downsample(counts.patch_budget));
                tiles.push_back(t);
            }
            const std::string prompt = fmt::format("{}\n{}{}", instruction, kContextTag, context.dump());
            const std::string reply = generator.answer(montage(parts), prompt);
            std::vector<QACandidate> qas;
            try {
                qas = parse_qa_reply(reply);
                if (qas.empty() || qas.size() > 2) {
                    throw Error(ErrorCode::schema_violation, fmt::format("{} questions in reply", qas.size()));
                }
                auto& c = qas.front();
                c.level = level;
                c.source_tiles = tiles;
                c.provenance = {generator_id, prompt_hash(prompt)};
                validate_candidate(c);
            } catch (const Error& e) {
                out.log.push_back(fmt::format("{} group rejected: {}", to_string(level), e.what()));
                continue;
            }
            out.candidates.push_back(std::move(qas.front()));
            ++made;
        }
        return wanted - made;
    };

    out.regional_shortfall = produce(Level::regional, counts.regional);
    out.global_shortfall = produce(Level::global, counts.global);
    if (out.regional_shortfall > 0) {
        out.log.push_back(fmt::format("regional shortfall: {} of {} not produced", out.regional_shortfall, counts.regional));
    }
    if (out.global_shortfall > 0) {
        out.log.push_back(fmt::format("global shortfall: {} of {} not produced", out.global_shortfall, counts.global));
    }
    return out;
}

std::string to_string(FilterVerdict verdict) {
    switch (verdict) {
    case FilterVerdict::keep: return "kept";
    case FilterVerdict::drop_too_easy: return "dropped:too-easy";
    case FilterVerdict::drop_malformed: return "dropped:malformed";
    case FilterVerdict::unfiltered: return "unfiltered";
    }
    return "unfiltered";
}

FilterVerdict auto_filter(const QACandidate& candidate, const PixelWindow& compressed, VlmBackend& filter,
                          const FilterConfig& config) {
    try {
        validate_choices(candidate.options, candidate.answer);
    } catch (const Error&) {
        return FilterVerdict::drop_malformed;
    }
    const auto prompt = multiple_choice_prompt(candidate.question, candidate.options);
    int correct = 0;
    try {
        for (int t = 0; t < config.trials; ++t) {
            if (extract_answer(filter.answer(compressed, prompt)) == candidate.answer) ++correct;
        }
    } catch (const Error&) {
        return FilterVerdict::unfiltered;
    }
    return correct >= config.drop_threshold ? FilterVerdict::drop_too_easy : FilterVerdict::keep;
}

FilterVerdict auto_filter(const QACandidate& candidate, const ImageRef& ref, VlmBackend& filter,
                          const FilterConfig& config) {
    try {
        validate_choices(candidate.options, candidate.answer);
    } catch (const Error&) {
        return FilterVerdict::drop_malformed;
    }
    return auto_filter(candidate, downsample_to_budget(ref, config.budget), filter, config);
}

namespace {

struct Detection {
    BBox box;
    std::size_t tile;
    std::string label;
    double score;
};

double overlap_1d(std::int64_t a0, std::int64_t a1, std::int64_t b0, std::int64_t b1) {
    const auto inter = std::min(a1, b1) - std::max(a0, b0);
    if (inter <= 0) return 0.0;
    const auto uni = std::max(a1, b1) - std::min(a0, b0);
    return static_cast<double>(inter) / static_cast<double>(uni);
}

bool seam_pieces(const Detection& a, const BBox& ta, const Detection& b, const BBox& tb, double threshold) {
    if (ta.x1 == tb.x0 && a.box.x1 == ta.x1 && b.box.x0 == tb.x0) {
        return overlap_1d(a.box.y0, a.box.y1, b.box.y0, b.box.y1) >= threshold;
    }
    if (ta.y1 == tb.y0 && a.box.y1 == ta.y1 && b.box.y0 == tb.y0) {
        return overlap_1d(a.box.x0, a.box.x1, b.box.x0, b.box.x1) >= threshold;
    }
    return false;
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
}

} // namespace

std::vector<DetectedObject> detect_objects(const ImageRef& ref, GroundBackend& grounder,
                                           const std::vector<std::string>& vocabulary,
                                           const ObjectCountConfig& config) {
    if (vocabulary.empty()) throw Error(ErrorCode::invalid_argument, "object vocabulary is empty");
    const auto tiles = tile_image(ref, config.tile);
    std::vector<Detection> found;
    for (std::size_t t = 0; t < tiles.size(); ++t) {
        const PixelWindow window = downsample_region(ref, tiles[t], config.tile_budget);
        const auto W = tiles[t].width(), H = tiles[t].height();
        const auto w = window.width(), h = window.height();
        for (const auto& word : vocabulary) {
            for (const auto& g : grounder.ground(window, word)) {
                BBox b = g.bbox;
                if (w != W || h != H) b = BBox{b.x0 * W / w, b.y0 * H / h, (b.x1 * W + w - 1) / w, (b.y1 * H + h - 1) / h};
                found.push_back({b.translated(tiles[t].x0, tiles[t].y0), t, g.label, g.score});
            }
        }
    }
    std::vector<std::size_t> parent(found.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    for (std::size_t i = 0; i < found.size(); ++i) {
        for (std::size_t j = i + 1; j < found.size(); ++j) {
            bool merge = iou(found[i].box, found[j].box) >= config.merge_iou;
            if (!merge && found[i].tile != found[j].tile) {
                const auto &ti = tiles[found[i].tile], &tj = tiles[found[j].tile];
                merge = seam_pieces(found[i], ti, found[j], tj, config.merge_iou) ||
                        seam_pieces(found[j], tj, found[i], ti, config.merge_iou);
            }
            if (merge) parent[find_root(parent, i)] = find_root(parent, j);
        }
    }
    std::vector<DetectedObject> objects;
    std::vector<std::size_t> slot(found.size(), SIZE_MAX);
    for (std::size_t i = 0; i < found.size(); ++i) {
        const auto r = find_root(parent, i);
        if (slot[r] == SIZE_MAX) {
            slot[r] = objects.size();
            objects.push_back({found[i].box, found[i].label, found[i].score});
            continue;
        }
        auto& o = objects[slot[r]];
        o.bbox = BBox{std::min(o.bbox.x0, found[i].box.x0), std::min(o.bbox.y0, found[i].box.y0),
                      std::max(o.bbox.x1, found[i].box.x1), std::max(o.bbox.y1, found[i].box.y1)};
        if (found[i].score > o.score) {
            o.score = found[i].score;
            o.label = found[i].label;
        }
    }
    return objects;
}

std::int64_t object_count(const ImageRef& ref, GroundBackend& grounder, const std::vector<std::string>& vocabulary,
                          const ObjectCountConfig& config) {
    return static_cast<std::int64_t>(detect_objects(ref, grounder, vocabulary, config).size());
}

DatagenReport run_datagen(const ImageRef& ref, VlmBackend& generator, const std::string& generator_id,
                          VlmBackend* filter, const DatagenConfig& config) {
    DatagenReport report;
    const auto tiles = tile_image(ref, config.tile);
    report.tiles = static_cast<int>(tiles.size());

    std::vector<MicroOutcome> micro(tiles.size());
    parallel_for(tiles.size(), config.parallelism, [&](std::size_t i) {
        micro[i] = gen_micro(downsample_region(ref, tiles[i], config.micro_input), tiles[i], generator, generator_id);
    });

    std::vector<QACandidate> candidates;
    std::vector<TilePatch> patches;
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        if (micro[i].rejection) {
            ++report.micro_rejected;
            report.log.push_back(*micro[i].rejection);
        }
        if (!micro[i].candidates.empty()) patches.push_back({tiles[i], ImageView(ref, tiles[i]), micro[i].candidates.front()});
        for (auto& c : micro[i].candidates) candidates.push_back(std::move(c));
    }
    auto composed = compose_levels(patches, generator, generator_id, config.compose);
    report.regional_shortfall = composed.regional_shortfall;
    report.global_shortfall = composed.global_shortfall;
    for (auto& line : composed.log) report.log.push_back(std::move(line));
    for (auto& c : composed.candidates) candidates.push_back(std::move(c));

    std::optional<PixelWindow> compressed;
    if (filter != nullptr) compressed = downsample_to_budget(ref, config.filter.budget);
    const std::string stem = ref.path.stem().string();
    std::array<int, 3> serial{};
    for (auto& c : candidates) {
        CandidateRecord r;
        r.id = fmt::format("{}-{}-{:04}", stem, to_string(c.level), serial[static_cast<int>(c.level)]++);
        r.image = ref.path.string();
        r.subset = config.subset;
        r.status = filter != nullptr ? to_string(auto_filter(c, *compressed, *filter, config.filter)) : "pending-review";
        r.candidate = std::move(c);
        report.records.push_back(std::move(r));
    }
    return report;
}

nlohmann::ordered_json to_json(const CandidateRecord& record) {
    const auto& c = record.candidate;
    nlohmann::ordered_json j;
    j["id"] = record.id;
    j["image"] = record.image;
    j["subset"] = to_string(record.subset);
    j["level"] = to_string(c.level);
    j["question"] = c.question;
    j["options"] = c.options;
    j["answer"] = std::string(1, c.answer);
    j["language"] = c.language;
    j["source_tiles"] = nlohmann::ordered_json::array();
    for (const auto& t : c.source_tiles) j["source_tiles"].push_back({t.x0, t.y0, t.x1, t.y1});
    j["provenance"] = {{"backend", c.provenance.backend}, {"prompt_hash", c.provenance.prompt_hash}};
    j["status"] = record.status;
    return j;
}

} // namespace urba
