// SPDX-License-Identifier: Apache-2.0
#include "urba/fixture.hpp"

#include "urba/error.hpp"
#include "urba/question.hpp"

#include <fmt/format.h>

#include <fstream>

namespace urba {

const Plant* FixtureManifest::find(std::uint32_t id) const noexcept {
    for (const auto& p : plants)
        if (p.id == id) return &p;
    return nullptr;
}

nlohmann::json to_json(const BBox& b) { return nlohmann::json::array({b.x0, b.y0, b.x1, b.y1}); }

BBox bbox_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 4) throw Error(ErrorCode::schema_violation, "bbox must be [x0,y0,x1,y1]");
    for (const auto& v : j)
        if (!v.is_number_integer()) throw Error(ErrorCode::schema_violation, "bbox coordinates must be integers");
    const auto b = BBox{j[0].get<std::int64_t>(), j[1].get<std::int64_t>(), j[2].get<std::int64_t>(),
                        j[3].get<std::int64_t>()};
    if (b.x0 < 0 || b.y0 < 0 || b.x1 <= b.x0 || b.y1 <= b.y0) {
        throw Error(ErrorCode::schema_violation, fmt::format("degenerate bbox {}", b.to_string()));
    }
    return b;
}

nlohmann::ordered_json to_json(const Plant& p) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["bbox"] = to_json(p.bbox);
    j["label"] = p.label;
    j["caption"] = p.caption;
    j["score"] = p.score;
    j["facts"] = nlohmann::ordered_json::array();
    for (const auto& f : p.facts) j["facts"].push_back({{"prompt", f.prompt}, {"answer", f.answer}});
    j["qas"] = nlohmann::ordered_json::array();
    for (const auto& q : p.qas) {
        j["qas"].push_back({{"question", q.question}, {"options", q.options}, {"answer", std::string(1, q.answer)}});
    }
    return j;
}

Plant plant_from_json(const nlohmann::json& j) {
    try {
        Plant p;
        p.id = j.at("id").get<std::uint32_t>();
        p.bbox = bbox_from_json(j.at("bbox"));
        p.label = j.value("label", "");
        p.caption = j.value("caption", "");
        p.score = j.value("score", 0.9);
        for (const auto& f : j.value("facts", nlohmann::json::array())) {
            p.facts.push_back({f.at("prompt").get<std::string>(), f.at("answer").get<std::string>()});
        }
        for (const auto& q : j.value("qas", nlohmann::json::array())) {
            PlantQA qa;
            qa.question = q.at("question").get<std::string>();
            qa.options = q.at("options").get<std::array<std::string, 4>>();
            const auto a = q.at("answer").get<std::string>();
            qa.answer = a.empty() ? '?' : a[0];
            validate_choices(qa.options, qa.answer);
            p.qas.push_back(std::move(qa));
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::schema_violation, fmt::format("bad plant record: {}", e.what()));
    }
}

nlohmann::ordered_json to_json(const FixtureManifest& m) {
    nlohmann::ordered_json j;
    j["image"] = m.image;
    j["width"] = m.width;
    j["height"] = m.height;
    j["seed"] = m.seed;
    j["plants"] = nlohmann::ordered_json::array();
    for (const auto& p : m.plants) j["plants"].push_back(to_json(p));
    return j;
}

FixtureManifest fixture_manifest_from_json(const nlohmann::json& j) {
    try {
        FixtureManifest m;
        m.image = j.value("image", "");
        m.width = j.value("width", std::int64_t{0});
        m.height = j.value("height", std::int64_t{0});
        m.seed = j.value("seed", std::uint64_t{0});
        for (const auto& p : j.at("plants")) m.plants.push_back(plant_from_json(p));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::schema_violation, fmt::format("bad fixture manifest: {}", e.what()));
    }
}

FixtureManifest load_fixture_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, fmt::format("cannot open {}", path.string()));
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::malformed_file, fmt::format("{}: {}", path.string(), e.what()));
    }
    return fixture_manifest_from_json(j);
}

void save_fixture_manifest(const FixtureManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path);
    out << to_json(manifest).dump(2) << '\n';
    if (!out) throw Error(ErrorCode::io, fmt::format("cannot write {}", path.string()));
}

} // namespace urba
