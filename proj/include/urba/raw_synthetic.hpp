// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "urba/geometry.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace urba {

struct PixelWindow;

// raw-synthetic file layout (little-endian):
//   0  "URSY"
//   4  u32 version (1)
//   8  u32 width
//  12  u32 height
//  16  u32 formula id
//  20  u64 seed
//  28  u32 padding
// Formula 2 appends a plant table: u32 count, then count x {u32 id, x0, y0, x1, y1}.

inline constexpr std::uint32_t kRawSyntheticVersion = 1;
inline constexpr std::uint32_t kFormulaGradient = 1;
inline constexpr std::uint32_t kFormulaGradientMarkers = 2;
inline constexpr std::size_t kRawSyntheticHeaderSize = 32;

struct MarkerPlant {
    std::uint32_t id = 0;
    BBox bbox;
    friend bool operator==(const MarkerPlant&, const MarkerPlant&) = default;
};

struct SyntheticSpec {
    std::uint32_t version = kRawSyntheticVersion;
    std::uint32_t formula = kFormulaGradient;
    std::uint64_t seed = 0;
    std::vector<MarkerPlant> plants;
};

struct RawSyntheticFile {
    std::int64_t width = 0;
    std::int64_t height = 0;
    SyntheticSpec spec;
};

/// pixel(x,y) = (7x mod 256, 13y mod 256, 3(x+y) mod 256)
inline std::array<std::uint8_t, 3> gradient_pixel(std::int64_t x, std::int64_t y) noexcept {
    return {static_cast<std::uint8_t>((x * 7) & 0xFF), static_cast<std::uint8_t>((y * 13) & 0xFF),
            static_cast<std::uint8_t>(((x + y) * 3) & 0xFF)};
}

void write_raw_synthetic(const std::filesystem::path& path, std::int64_t width, std::int64_t height,
                         const SyntheticSpec& spec);

/// Parses header and plant table; throws corrupt-header on any inconsistency.
RawSyntheticFile read_raw_synthetic(const std::filesystem::path& path);

/// Pixels of `region`, computed on demand.
PixelWindow render_synthetic(const SyntheticSpec& spec, const BBox& region);

} // namespace urba
