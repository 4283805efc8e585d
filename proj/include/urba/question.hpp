// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace urba {

enum class Level { micro, regional, global };
enum class Subset { portrait_scroll, narrative_scroll, satellite, street_view };

inline constexpr std::array<Level, 3> kAllLevels = {Level::micro, Level::regional, Level::global};
inline constexpr std::array<Subset, 4> kAllSubsets = {Subset::portrait_scroll, Subset::narrative_scroll,
                                                      Subset::satellite, Subset::street_view};

std::string to_string(Level level);
std::string to_string(Subset subset);
/// Throw schema-violation for unknown names.
Level parse_level(std::string_view name);
Subset parse_subset(std::string_view name);

/// Humanistic (scrolls) or natural (satellite, street view).
std::string category_of(Subset subset);

/// 'A'..'D' -> 0..3
std::optional<int> letter_index(char letter) noexcept;
char letter_at(int index) noexcept;

/// Throws schema-violation unless there are 4 distinct non-empty options and
/// the answer is one of A-D.
void validate_choices(const std::array<std::string, 4>& options, char answer);

struct QuestionRecord {
    std::string id;
    std::filesystem::path image;
    Subset subset = Subset::satellite;
    Level level = Level::micro;
    std::string question;
    std::array<std::string, 4> options;
    char answer = 'A';
    std::string language = "en";

    void validate() const;
};

nlohmann::ordered_json to_json(const QuestionRecord& q);
/// Throws schema-violation naming the offending field.
QuestionRecord question_from_json(const nlohmann::json& j);

} // namespace urba
