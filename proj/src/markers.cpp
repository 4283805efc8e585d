// SPDX-License-Identifier: Apache-2.0
#include "urba/markers.hpp"

#include "urba/error.hpp"
#include "urba/image_store.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cstring>

namespace urba {

std::array<std::uint8_t, 3> marker_color(std::uint32_t id) {
    if (id < kMinMarkerId || id > kMaxMarkerId) {
        throw Error(ErrorCode::invalid_argument, fmt::format("marker id {} out of range", id));
    }
    return {static_cast<std::uint8_t>(id >> 8), static_cast<std::uint8_t>(id & 0xFF), 255};
}

void paint_marker(PixelWindow& window, const BBox& local, std::uint32_t id) {
    const auto color = marker_color(id);
    const auto clip = local.intersection(BBox{0, 0, window.width(), window.height()});
    if (!clip) return;
    for (std::int64_t y = clip->y0; y < clip->y1; ++y) {
        std::uint8_t* p = window.at(clip->x0, y);
        for (std::int64_t x = clip->x0; x < clip->x1; ++x, p += 3) std::memcpy(p, color.data(), 3);
    }
}

std::vector<DetectedMarker> detect_markers(const PixelWindow& window) {
    const std::int64_t w = window.width();
    const std::int64_t h = window.height();
    std::vector<DetectedMarker> found;
    if (w < 2 || h < 2) return found;

    std::vector<std::uint8_t> mask(static_cast<std::size_t>(w * h), 0);
    auto same = [&](std::int64_t x0, std::int64_t y0, std::int64_t x1, std::int64_t y1) {
        return std::memcmp(window.at(x0, y0), window.at(x1, y1), 3) == 0;
    };
    for (std::int64_t y = 0; y + 1 < h; ++y) {
        for (std::int64_t x = 0; x + 1 < w; ++x) {
            if (window.at(x, y)[2] != 255) continue;
            if (same(x, y, x + 1, y) && same(x, y, x, y + 1) && same(x, y, x + 1, y + 1)) {
                mask[y * w + x] = mask[y * w + x + 1] = mask[(y + 1) * w + x] = mask[(y + 1) * w + x + 1] = 1;
            }
        }
    }

    std::vector<std::int64_t> stack;
    for (std::int64_t start = 0; start < w * h; ++start) {
        if (mask[start] != 1) continue;
        const std::int64_t sx = start % w;
        const std::int64_t sy = start / w;
        const std::uint8_t* color = window.at(sx, sy);
        const std::uint32_t id = (std::uint32_t{color[0]} << 8) | color[1];
        DetectedMarker m{id, BBox{sx, sy, sx + 1, sy + 1}, 0};
        mask[start] = 2;
        stack.assign(1, start);
        while (!stack.empty()) {
            const std::int64_t cur = stack.back();
            stack.pop_back();
            const std::int64_t x = cur % w;
            const std::int64_t y = cur / w;
            ++m.pixels;
            m.bbox.x0 = std::min(m.bbox.x0, x);
            m.bbox.y0 = std::min(m.bbox.y0, y);
            m.bbox.x1 = std::max(m.bbox.x1, x + 1);
            m.bbox.y1 = std::max(m.bbox.y1, y + 1);
            const std::int64_t nbr[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
            for (const auto& n : nbr) {
                if (n[0] < 0 || n[1] < 0 || n[0] >= w || n[1] >= h) continue;
                const std::int64_t idx = n[1] * w + n[0];
                if (mask[idx] == 1 && std::memcmp(window.at(n[0], n[1]), color, 3) == 0) {
                    mask[idx] = 2;
                    stack.push_back(idx);
                }
            }
        }
        if (id >= kMinMarkerId) found.push_back(m);
    }
    std::sort(found.begin(), found.end(), [](const DetectedMarker& a, const DetectedMarker& b) {
        if (a.id != b.id) return a.id < b.id;
        return canonical_less(a.bbox, b.bbox);
    });
    return found;
}

} // namespace urba
