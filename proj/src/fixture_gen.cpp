// SPDX-License-Identifier: Apache-2.0
#include "urba/error.hpp"
#include "urba/harness.hpp"
#include "urba/markers.hpp"
#include "urba/raw_synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace urba {

namespace {

constexpr std::array<std::string_view, 8> kFillerObjects = {
    "a wooden cart", "a fishing boat", "a stone lion", "a white crane",
    "a bamboo grove", "a market stall", "a red lantern", "a tiled roof"};

constexpr std::array<std::string_view, 4> kDistractorLabels = {"grey boulder", "dry shrub", "small pond", "dirt track"};

std::int64_t uniform(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
    if (hi <= lo) return lo;
    return lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng() % i)]);
}

/// Gold answer plus three distinct distractors in a seeded order.
PlantQA make_choice(const std::string& question, const std::string& gold, const std::vector<std::string>& pool,
                    std::mt19937_64& rng) {
    std::vector<std::string> options{gold};
    for (const auto& p : pool) {
        if (options.size() == 4) break;
        if (std::find(options.begin(), options.end(), p) == options.end()) options.push_back(p);
    }
    for (auto f : kFillerObjects) {
        if (options.size() == 4) break;
        if (std::find(options.begin(), options.end(), f) == options.end()) options.emplace_back(f);
    }
    shuffle(options, rng);
    PlantQA qa;
    qa.question = question;
    for (int i = 0; i < 4; ++i) {
        qa.options[i] = options[i];
        if (options[i] == gold) qa.answer = letter_at(i);
    }
    return qa;
}

std::string direction(std::int64_t dc, std::int64_t dr) {
    const std::string vertical = dr < 0 ? "above" : dr > 0 ? "below" : "";
    const std::string horizontal = dc < 0 ? "left of" : dc > 0 ? "right of" : "";
    if (vertical.empty()) return "to the " + horizontal;
    if (horizontal.empty()) return vertical;
    return fmt::format("diagonally {} and to the {}", vertical, horizontal);
}

nlohmann::json plant_request_json_field(const nlohmann::json& j, const char* key) {
    return j.contains(key) ? j.at(key) : nlohmann::json();
}

} // namespace

FixturePlantSpec plant_spec_from_json(const nlohmann::json& j) {
    try {
        FixturePlantSpec spec;
        spec.plant_size = j.value("plant_size", spec.plant_size);
        spec.jitter = j.value("jitter", spec.jitter);
        spec.distractors_per_mp = j.value("distractors_per_mp", spec.distractors_per_mp);
        spec.tile = j.value("tile", spec.tile);
        if (j.contains("subset")) spec.subset = parse_subset(j.at("subset").get<std::string>());
        spec.max_regional = j.value("max_regional", spec.max_regional);
        spec.max_global = j.value("max_global", spec.max_global);
        for (const auto& p : j.at("plants")) {
            PlantRequest r;
            r.id = p.at("id").get<std::uint32_t>();
            const auto& at = p.at("at");
            r.x = at.at(0).get<std::int64_t>();
            r.y = at.at(1).get<std::int64_t>();
            r.size = p.value("size", std::int64_t{0});
            r.label = p.at("label").get<std::string>();
            r.caption = p.value("caption", r.label);
            r.score = p.value("score", 0.9);
            for (const auto& f : p.value("facts", nlohmann::json::array())) {
                r.facts.push_back({f.at("prompt").get<std::string>(), f.at("answer").get<std::string>()});
            }
            if (const auto qa = plant_request_json_field(p, "qa"); !qa.is_null()) {
                PlantQA q;
                q.question = qa.at("question").get<std::string>();
                q.options = qa.at("options").get<std::array<std::string, 4>>();
                const auto a = qa.at("answer").get<std::string>();
                q.answer = a.empty() ? '?' : a[0];
                validate_choices(q.options, q.answer);
                r.qa = std::move(q);
            }
            spec.plants.push_back(std::move(r));
        }
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_spec, fmt::format("bad plant spec: {}", e.what()));
    } catch (const Error& e) {
        throw Error(ErrorCode::invalid_spec, fmt::format("bad plant spec: {}", e.what()));
    }
}

GeneratedFixture generate_fixture(std::uint64_t seed, std::int64_t width, std::int64_t height,
                                  const FixturePlantSpec& spec, const std::filesystem::path& out_dir) {
    if (width < 256 || height < 256) {
        throw Error(ErrorCode::invalid_spec, fmt::format("fixture must be at least 256x256, got {}x{}", width, height));
    }
    if (spec.tile < 64) throw Error(ErrorCode::invalid_spec, "tile must be >= 64");
    std::mt19937_64 rng(seed);
    const std::int64_t jitter = spec.jitter >= 0 ? spec.jitter : spec.plant_size / 8;

    FixtureManifest manifest;
    manifest.image = "image.ursy";
    manifest.width = width;
    manifest.height = height;
    manifest.seed = seed;
    for (const auto& req : spec.plants) {
        if (req.id < kMinMarkerId || req.id > kMaxMarkerId) {
            throw Error(ErrorCode::invalid_spec, fmt::format("plant id {} outside 1..65535", req.id));
        }
        if (manifest.find(req.id)) throw Error(ErrorCode::invalid_spec, fmt::format("duplicate plant id {}", req.id));
        const std::int64_t size = req.size > 0 ? req.size : spec.plant_size;
        if (size < 2 || size > width || size > height) {
            throw Error(ErrorCode::invalid_spec, fmt::format("plant {} size {} does not fit", req.id, size));
        }
        const std::int64_t cx = req.x + uniform(rng, -jitter, jitter);
        const std::int64_t cy = req.y + uniform(rng, -jitter, jitter);
        const std::int64_t x0 = std::clamp<std::int64_t>(cx - size / 2, 0, width - size);
        const std::int64_t y0 = std::clamp<std::int64_t>(cy - size / 2, 0, height - size);
        Plant p;
        p.id = req.id;
        p.bbox = BBox{x0, y0, x0 + size, y0 + size};
        p.label = req.label;
        p.caption = req.caption.empty() ? req.label : req.caption;
        p.score = req.score;
        p.facts = req.facts;
        for (const auto& other : manifest.plants) {
            if (other.bbox.intersects(p.bbox)) {
                throw Error(ErrorCode::invalid_spec, fmt::format("plants {} {} and {} {} overlap", other.id,
                                                                 other.bbox.to_string(), p.id, p.bbox.to_string()));
            }
        }
        manifest.plants.push_back(std::move(p));
    }

    // Micro questions, kept with the plants so the mock generator can emit them.
    std::vector<std::string> answer_pool;
    for (const auto& p : manifest.plants)
        for (const auto& f : p.facts) answer_pool.push_back(f.answer);
    for (std::size_t i = 0; i < spec.plants.size(); ++i) {
        auto& p = manifest.plants[i];
        if (spec.plants[i].qa) {
            p.qas.push_back(*spec.plants[i].qa);
        } else if (!p.facts.empty()) {
            p.qas.push_back(make_choice(p.facts.front().prompt, p.facts.front().answer, answer_pool, rng));
        }
    }

    // Filler glyphs nobody asks about.
    const auto filler_count = static_cast<std::int64_t>(
        std::llround(spec.distractors_per_mp * static_cast<double>(width) * static_cast<double>(height) / 1e6));
    const std::int64_t filler_size = std::max<std::int64_t>(8, spec.plant_size / 2);
    std::uint32_t next_id = 60000;
    for (std::int64_t k = 0; k < filler_count && filler_size <= std::min(width, height); ++k) {
        while (next_id <= kMaxMarkerId && manifest.find(next_id)) ++next_id;
        if (next_id > kMaxMarkerId) break;
        for (int attempt = 0; attempt < 50; ++attempt) {
            const std::int64_t x0 = uniform(rng, 0, width - filler_size);
            const std::int64_t y0 = uniform(rng, 0, height - filler_size);
            const BBox box{x0, y0, x0 + filler_size, y0 + filler_size};
            if (std::any_of(manifest.plants.begin(), manifest.plants.end(),
                            [&](const Plant& o) { return o.bbox.intersects(box); })) {
                continue;
            }
            Plant d;
            d.id = next_id++;
            d.bbox = box;
            d.label = std::string(kDistractorLabels[static_cast<std::size_t>(k) % kDistractorLabels.size()]);
            d.caption = "a " + d.label + " on open ground";
            d.score = 0.5;
            manifest.plants.push_back(std::move(d));
            break;
        }
    }

    GeneratedFixture out;
    std::filesystem::create_directories(out_dir);
    out.image_path = out_dir / "image.ursy";
    out.plants_path = out_dir / "plants.json";
    out.questions_path = out_dir / "questions.jsonl";

    SyntheticSpec synth;
    synth.formula = kFormulaGradientMarkers;
    synth.seed = seed;
    for (const auto& p : manifest.plants) synth.plants.push_back({p.id, p.bbox});
    write_raw_synthetic(out.image_path, width, height, synth);
    save_fixture_manifest(manifest, out.plants_path);

    // Questions at every level over the requested (non-filler) plants.
    const std::size_t requested = spec.plants.size();
    auto tile_of = [&](const Plant& p) {
        const std::int64_t cx = (p.bbox.x0 + p.bbox.x1) / 2, cy = (p.bbox.y0 + p.bbox.y1) / 2;
        const std::int64_t tx = cx / spec.tile * spec.tile, ty = cy / spec.tile * spec.tile;
        return BBox{tx, ty, std::min(tx + spec.tile, width), std::min(ty + spec.tile, height)};
    };
    const std::string prefix = fmt::format("fx{}", seed);
    auto add = [&](Level level, PlantQA qa, std::vector<BBox> tiles) {
        QuestionRecord q;
        q.id = fmt::format("{}-{}-{:03}", prefix, to_string(level), out.questions.size());
        q.image = "image.ursy";
        q.subset = spec.subset;
        q.level = level;
        q.question = std::move(qa.question);
        q.options = std::move(qa.options);
        q.answer = qa.answer;
        q.validate();
        out.questions.push_back(std::move(q));
        out.source_tiles.push_back(std::move(tiles));
    };
    for (std::size_t i = 0; i < requested; ++i) {
        for (const auto& qa : manifest.plants[i].qas) add(Level::micro, qa, {tile_of(manifest.plants[i])});
    }
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < requested; ++i) labels.push_back("the " + manifest.plants[i].label);

    int regional = 0;
    for (std::size_t i = 0; i < requested && regional < spec.max_regional; ++i) {
        for (std::size_t j = 0; j < requested && regional < spec.max_regional; ++j) {
            if (i == j) continue;
            const auto& a = manifest.plants[i];
            const auto& b = manifest.plants[j];
            const BBox ta = tile_of(a), tb = tile_of(b);
            if (ta == tb || !adjacent(ta, tb) || i > j) continue;
            const auto rel = direction((tb.x0 - ta.x0) / spec.tile, (tb.y0 - ta.y0) / spec.tile);
            std::vector<std::string> pool;
            for (std::size_t k = 0; k < requested; ++k)
                if (k != j) pool.push_back(labels[k]);
            add(Level::regional,
                make_choice(fmt::format("Which object lies in the neighbouring area {} {}?", rel, labels[i]), labels[j],
                            pool, rng),
                {ta, tb});
            ++regional;
        }
    }

    std::vector<std::tuple<double, std::size_t, std::size_t>> far;
    for (std::size_t i = 0; i < requested; ++i) {
        for (std::size_t j = i + 1; j < requested; ++j) {
            const auto& a = manifest.plants[i];
            const auto& b = manifest.plants[j];
            if (adjacent(tile_of(a), tile_of(b)) || tile_of(a) == tile_of(b)) continue;
            const double dx = static_cast<double>(a.bbox.x0 - b.bbox.x0);
            const double dy = static_cast<double>(a.bbox.y0 - b.bbox.y0);
            far.emplace_back(-std::hypot(dx, dy), i, j);
        }
    }
    std::sort(far.begin(), far.end());
    for (int g = 0; g < spec.max_global && g < static_cast<int>(far.size()); ++g) {
        const auto [neg, i, j] = far[static_cast<std::size_t>(g)];
        const auto& a = manifest.plants[i];
        const auto& b = manifest.plants[j];
        const std::int64_t ay = a.bbox.y0 + a.bbox.y1, by = b.bbox.y0 + b.bbox.y1;
        const std::string gold = ay < by ? labels[i] : ay > by ? labels[j] : "they are level";
        PlantQA qa = make_choice(fmt::format("Which is closer to the top edge of the image: {} or {}?", labels[i], labels[j]),
                                 gold, {labels[i], labels[j], "they are level", "neither is in the image"}, rng);
        add(Level::global, std::move(qa), {tile_of(a), tile_of(b)});
    }

    std::ofstream qs(out.questions_path, std::ios::binary);
    for (std::size_t k = 0; k < out.questions.size(); ++k) {
        auto j = to_json(out.questions[k]);
        j["source_tiles"] = nlohmann::ordered_json::array();
        for (const auto& t : out.source_tiles[k]) j["source_tiles"].push_back({t.x0, t.y0, t.x1, t.y1});
        qs << j.dump() << '\n';
    }
    if (!qs) throw Error(ErrorCode::io, fmt::format("cannot write {}", out.questions_path.string()));

    for (auto& q : out.questions) q.image = out.image_path;
    out.image = open_image(out.image_path);
    out.manifest = std::move(manifest);
    return out;
}

} // namespace urba
