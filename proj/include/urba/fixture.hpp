// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "urba/geometry.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace urba {

/// prompt -> answer pair the fixture VLM mock knows about a plant.
struct PlantFact {
    std::string prompt;
    std::string answer;
};

/// Micro-level QA the fixture generator mock emits for a plant.
struct PlantQA {
    std::string question;
    std::array<std::string, 4> options;
    char answer = 'A';
};

/// A planted marker and what mock perception reports about it.
struct Plant {
    std::uint32_t id = 0;
    BBox bbox;
    std::string label;
    std::string caption;
    double score = 0.9;
    std::vector<PlantFact> facts;
    std::vector<PlantQA> qas;
};

struct FixtureManifest {
    std::string image;
    std::int64_t width = 0;
    std::int64_t height = 0;
    std::uint64_t seed = 0;
    std::vector<Plant> plants;

    const Plant* find(std::uint32_t id) const noexcept;
};

nlohmann::ordered_json to_json(const Plant& p);
Plant plant_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const FixtureManifest& m);
FixtureManifest fixture_manifest_from_json(const nlohmann::json& j);

FixtureManifest load_fixture_manifest(const std::filesystem::path& path);
void save_fixture_manifest(const FixtureManifest& manifest, const std::filesystem::path& path);

/// Parses "[x0,y0,x1,y1]" JSON into a validated BBox (schema-violation otherwise).
BBox bbox_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BBox& b);

} // namespace urba
