// SPDX-License-Identifier: Apache-2.0
#include "urba/geometry.hpp"

#include "urba/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <tuple>

namespace urba {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::bounds: return "bounds";
    case ErrorCode::io: return "io";
    case ErrorCode::unsupported_format: return "unsupported-format";
    case ErrorCode::corrupt_header: return "corrupt-header";
    case ErrorCode::abstraction_failed: return "abstraction-failed";
    case ErrorCode::backend_unavailable: return "backend-unavailable";
    case ErrorCode::version_mismatch: return "version-mismatch";
    case ErrorCode::malformed_file: return "malformed-file";
    case ErrorCode::index_corrupt: return "index-corrupt";
    case ErrorCode::embed_inconsistent: return "embed-inconsistent";
    case ErrorCode::dim_mismatch: return "dim-mismatch";
    case ErrorCode::zero_norm: return "zero-norm";
    case ErrorCode::malformed_call: return "malformed-call";
    case ErrorCode::unknown_tool: return "unknown-tool";
    case ErrorCode::bad_args: return "bad-args";
    case ErrorCode::no_index: return "no-index";
    case ErrorCode::script_exhausted: return "script-exhausted";
    case ErrorCode::payload_too_large: return "payload-too-large";
    case ErrorCode::undecodable_image: return "undecodable-image";
    case ErrorCode::invalid_spec: return "invalid-spec";
    case ErrorCode::schema_violation: return "schema-violation";
    }
    return "unknown";
}

std::optional<ErrorCode> parse_error_code(std::string_view name) {
    for (int c = 0; c <= static_cast<int>(ErrorCode::schema_violation); ++c) {
        if (to_string(static_cast<ErrorCode>(c)) == name) return static_cast<ErrorCode>(c);
    }
    return std::nullopt;
}

BBox BBox::make(std::int64_t x0, std::int64_t y0, std::int64_t x1, std::int64_t y1) {
    if (x0 < 0 || y0 < 0 || x1 <= x0 || y1 <= y0) {
        throw Error(ErrorCode::invalid_argument,
                    fmt::format("invalid bbox [{},{},{},{}]", x0, y0, x1, y1));
    }
    return BBox{x0, y0, x1, y1};
}

bool BBox::contains(const BBox& o) const noexcept {
    return o.x0 >= x0 && o.y0 >= y0 && o.x1 <= x1 && o.y1 <= y1;
}

bool BBox::intersects(const BBox& o) const noexcept {
    return std::max(x0, o.x0) < std::min(x1, o.x1) && std::max(y0, o.y0) < std::min(y1, o.y1);
}

std::optional<BBox> BBox::intersection(const BBox& o) const noexcept {
    if (!intersects(o)) return std::nullopt;
    return BBox{std::max(x0, o.x0), std::max(y0, o.y0), std::min(x1, o.x1), std::min(y1, o.y1)};
}

BBox BBox::translated(std::int64_t dx, std::int64_t dy) const noexcept {
    return BBox{x0 + dx, y0 + dy, x1 + dx, y1 + dy};
}

std::string BBox::to_string() const {
    return fmt::format("[{},{},{},{}]", x0, y0, x1, y1);
}

bool canonical_less(const BBox& a, const BBox& b) noexcept {
    return std::tie(a.y0, a.x0, a.x1, a.y1) < std::tie(b.y0, b.x0, b.x1, b.y1);
}

GridShape grid_shape(std::int64_t width, std::int64_t height, int n_target) {
    if (width < 1 || height < 1 || n_target < 1) {
        throw Error(ErrorCode::invalid_argument,
                    fmt::format("grid_partition needs positive arguments, got {}x{} n={}",
                                width, height, n_target));
    }
    const double aspect = static_cast<double>(width) / static_cast<double>(height);
    auto cols = static_cast<std::int64_t>(std::llround(std::sqrt(n_target * aspect)));
    cols = std::clamp<std::int64_t>(cols, 1, n_target);
    cols = std::min(cols, width);
    std::int64_t rows = (n_target + cols - 1) / cols;
    if (rows > height) {
        rows = height;
        cols = std::min<std::int64_t>(width, (n_target + rows - 1) / rows);
    }
    return GridShape{static_cast<int>(rows), static_cast<int>(cols)};
}

std::vector<BBox> grid_cells(std::int64_t width, std::int64_t height, GridShape shape) {
    if (shape.rows < 1 || shape.cols < 1 || shape.cols > width || shape.rows > height) {
        throw Error(ErrorCode::invalid_argument,
                    fmt::format("grid {}x{} does not fit a {}x{} image", shape.rows, shape.cols,
                                width, height));
    }
    const std::int64_t cw = width / shape.cols;
    const std::int64_t ch = height / shape.rows;
    std::vector<BBox> cells;
    cells.reserve(static_cast<std::size_t>(shape.count()));
    for (int r = 0; r < shape.rows; ++r) {
        const std::int64_t y0 = r * ch;
        const std::int64_t y1 = (r == shape.rows - 1) ? height : y0 + ch;
        for (int c = 0; c < shape.cols; ++c) {
            const std::int64_t x0 = c * cw;
            const std::int64_t x1 = (c == shape.cols - 1) ? width : x0 + cw;
            cells.push_back(BBox{x0, y0, x1, y1});
        }
    }
    return cells;
}

std::vector<BBox> grid_partition(std::int64_t width, std::int64_t height, int n_target) {
    return grid_cells(width, height, grid_shape(width, height, n_target));
}

RegionSet union_regions(std::vector<BBox> regions) {
    std::sort(regions.begin(), regions.end(), canonical_less);
    regions.erase(std::unique(regions.begin(), regions.end()), regions.end());
    RegionSet out;
    if (!regions.empty()) {
        BBox hull = regions.front();
        for (const auto& r : regions) {
            hull.x0 = std::min(hull.x0, r.x0);
            hull.y0 = std::min(hull.y0, r.y0);
            hull.x1 = std::max(hull.x1, r.x1);
            hull.y1 = std::max(hull.y1, r.y1);
        }
        out.enclosing = hull;
    }
    out.regions = std::move(regions);
    return out;
}

bool adjacent(const BBox& a, const BBox& b) noexcept {
    if (a.intersects(b)) return true;
    const std::int64_t y_overlap = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    const std::int64_t x_overlap = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    if ((a.x1 == b.x0 || b.x1 == a.x0) && y_overlap > 0) return true;
    if ((a.y1 == b.y0 || b.y1 == a.y0) && x_overlap > 0) return true;
    return false;
}

double iou(const BBox& a, const BBox& b) noexcept {
    const auto inter = a.intersection(b);
    if (!inter) return 0.0;
    const double i = static_cast<double>(inter->area());
    return i / (static_cast<double>(a.area()) + static_cast<double>(b.area()) - i);
}

} // namespace urba
