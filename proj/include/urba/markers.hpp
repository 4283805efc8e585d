// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "urba/geometry.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace urba {

struct PixelWindow;

// Marker glyphs are solid squares of color (id >> 8, id & 0xFF, 255). The
// gradient background never contains a uniform 2x2 block (horizontal
// neighbours differ in R, vertical ones in G), and area averaging of gradient
// pixels cannot reach B == 255, so uniform B == 255 blocks identify markers
// at native resolution and after downsampling.

inline constexpr std::uint32_t kMinMarkerId = 1;
inline constexpr std::uint32_t kMaxMarkerId = 65535;

std::array<std::uint8_t, 3> marker_color(std::uint32_t id);

/// Paints marker `id` over `local` (clipped to the window).
void paint_marker(PixelWindow& window, const BBox& local, std::uint32_t id);

struct DetectedMarker {
    std::uint32_t id = 0;
    BBox bbox;  // relative to the scanned window
    std::int64_t pixels = 0;
    friend bool operator==(const DetectedMarker&, const DetectedMarker&) = default;
};

/// Connected marker-colored regions, ordered by (id, canonical bbox order).
std::vector<DetectedMarker> detect_markers(const PixelWindow& window);

} // namespace urba
