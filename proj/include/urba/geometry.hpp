// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace urba {

/// Pixel rectangle, half-open: [x0,x1) x [y0,y1), origin top-left.
struct BBox {
    std::int64_t x0 = 0;
    std::int64_t y0 = 0;
    std::int64_t x1 = 1;
    std::int64_t y1 = 1;

    /// Throws invalid-argument unless 0 <= x0 < x1 and 0 <= y0 < y1.
    static BBox make(std::int64_t x0, std::int64_t y0, std::int64_t x1, std::int64_t y1);

    std::int64_t width() const noexcept { return x1 - x0; }
    std::int64_t height() const noexcept { return y1 - y0; }
    std::int64_t area() const noexcept { return width() * height(); }

    bool contains(const BBox& other) const noexcept;
    bool intersects(const BBox& other) const noexcept;
    std::optional<BBox> intersection(const BBox& other) const noexcept;
    BBox translated(std::int64_t dx, std::int64_t dy) const noexcept;

    /// "[x0,y0,x1,y1]"
    std::string to_string() const;

    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Canonical order: (y0, x0, x1, y1).
bool canonical_less(const BBox& a, const BBox& b) noexcept;

struct RegionSet {
    std::vector<BBox> regions;
    std::optional<BBox> enclosing;

    bool empty() const noexcept { return regions.empty(); }
    friend bool operator==(const RegionSet&, const RegionSet&) = default;
};

struct GridShape {
    int rows = 1;
    int cols = 1;

    int count() const noexcept { return rows * cols; }
    friend bool operator==(const GridShape&, const GridShape&) = default;
};

/// Grid chosen for partitioning a width x height image into about n_target chunks.
/// cols tracks the image aspect ratio; rows*cols >= n_target whenever the image
/// has at least n_target pixels, otherwise every chunk is a single pixel.
GridShape grid_shape(std::int64_t width, std::int64_t height, int n_target);

/// Row-major chunks of the grid_shape grid. Interior cells have floor-equal
/// sizes; the last row and column absorb the remainder.
std::vector<BBox> grid_partition(std::int64_t width, std::int64_t height, int n_target);

/// Cells of an explicit rows x cols grid (same remainder rule as grid_partition).
std::vector<BBox> grid_cells(std::int64_t width, std::int64_t height, GridShape shape);

RegionSet union_regions(std::vector<BBox> regions);

/// Overlap, or a shared edge segment of positive length. Corner contact is not adjacency.
bool adjacent(const BBox& a, const BBox& b) noexcept;

/// Intersection over union of two boxes; 0 when disjoint.
double iou(const BBox& a, const BBox& b) noexcept;

} // namespace urba
