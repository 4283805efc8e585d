// SPDX-License-Identifier: Apache-2.0
#include "urba/error.hpp"
#include "urba/geometry.hpp"

#include <doctest.h>

#include <random>

using namespace urba;

namespace {

// Independent coverage check: every pixel belongs to exactly one cell.
bool covers_exactly(const std::vector<BBox>& cells, std::int64_t w, std::int64_t h) {
    std::int64_t area = 0;
    for (const auto& c : cells) {
        if (c.x0 < 0 || c.y0 < 0 || c.x1 > w || c.y1 > h || c.x1 <= c.x0 || c.y1 <= c.y0) return false;
        area += c.area();
    }
    if (area != w * h) return false;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        for (std::size_t j = i + 1; j < cells.size(); ++j) {
            if (cells[i].intersects(cells[j])) return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("grid_partition of 1000x500 into 10 chunks") {
    // cols = round(sqrt(10 * 2)) = 4, rows = ceil(10 / 4) = 3
    const auto cells = grid_partition(1000, 500, 10);
    REQUIRE(cells.size() == 12);
    CHECK(cells[0] == BBox{0, 0, 250, 166});
    CHECK(cells[4] == BBox{0, 166, 250, 332});
    CHECK(cells[11] == BBox{750, 332, 1000, 500});
    for (int i = 8; i < 12; ++i) CHECK(cells[i].height() == 168);
    CHECK(covers_exactly(cells, 1000, 500));
}

TEST_CASE("grid_partition with n = 1 is the whole image") {
    const auto cells = grid_partition(37, 91, 1);
    REQUIRE(cells.size() == 1);
    CHECK(cells[0] == BBox{0, 0, 37, 91});
}

TEST_CASE("grid_shape never exceeds the pixel grid") {
    const auto s = grid_shape(3, 2, 100);
    CHECK(s.rows <= 2);
    CHECK(s.cols <= 3);
    CHECK(covers_exactly(grid_cells(3, 2, s), 3, 2));
}

TEST_CASE("grid_partition rejects non-positive arguments") {
    CHECK_THROWS_AS(grid_partition(0, 10, 4), Error);
    CHECK_THROWS_AS(grid_partition(10, 10, 0), Error);
}

TEST_CASE("grid_partition covers randomized images exactly") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 300; ++t) {
        const std::int64_t w = 1 + static_cast<std::int64_t>(rng() % 3000);
        const std::int64_t h = 1 + static_cast<std::int64_t>(rng() % 3000);
        const int n = 1 + static_cast<int>(rng() % 64);
        const auto cells = grid_partition(w, h, n);
        INFO(w, "x", h, " n=", n);
        CHECK(covers_exactly(cells, w, h));
        if (w * h >= n) CHECK(static_cast<int>(cells.size()) >= n);
        // row-major order
        for (std::size_t i = 1; i < cells.size(); ++i) {
            CHECK((cells[i].y0 > cells[i - 1].y0 || (cells[i].y0 == cells[i - 1].y0 && cells[i].x0 > cells[i - 1].x0)));
        }
    }
}

TEST_CASE("BBox::make validates") {
    CHECK(BBox::make(1, 2, 3, 4) == BBox{1, 2, 3, 4});
    CHECK_THROWS_AS(BBox::make(-1, 0, 2, 2), Error);
    CHECK_THROWS_AS(BBox::make(2, 0, 2, 2), Error);
    CHECK(BBox{1, 2, 3, 4}.to_string() == "[1,2,3,4]");
}

TEST_CASE("union_regions sorts, deduplicates and encloses") {
    const auto set = union_regions({{10, 10, 20, 20}, {0, 0, 5, 5}, {10, 10, 20, 20}, {0, 30, 4, 40}});
    REQUIRE(set.regions.size() == 3);
    CHECK(set.regions[0] == BBox{0, 0, 5, 5});
    CHECK(set.regions[1] == BBox{10, 10, 20, 20});
    CHECK(set.regions[2] == BBox{0, 30, 4, 40});
    CHECK(set.enclosing == BBox{0, 0, 20, 40});
    CHECK(union_regions({}).empty());
    CHECK_FALSE(union_regions({}).enclosing.has_value());
}

TEST_CASE("adjacency needs a shared edge of positive length") {
    CHECK(adjacent({0, 0, 10, 10}, {10, 0, 20, 10}));
    CHECK(adjacent({0, 0, 10, 10}, {0, 10, 10, 20}));
    CHECK(adjacent({0, 0, 10, 10}, {5, 5, 15, 15}));
    CHECK_FALSE(adjacent({0, 0, 10, 10}, {10, 10, 20, 20}));
    CHECK_FALSE(adjacent({0, 0, 10, 10}, {11, 0, 20, 10}));
}

TEST_CASE("iou") {
    CHECK(iou({0, 0, 10, 10}, {0, 0, 10, 10}) == doctest::Approx(1.0));
    CHECK(iou({0, 0, 10, 10}, {5, 0, 15, 10}) == doctest::Approx(50.0 / 150.0));
    CHECK(iou({0, 0, 10, 10}, {20, 20, 30, 30}) == 0.0);
}

TEST_CASE("error codes round-trip through their names") {
    for (int c = 0; c <= static_cast<int>(ErrorCode::schema_violation); ++c) {
        const auto code = static_cast<ErrorCode>(c);
        CHECK(parse_error_code(to_string(code)) == code);
    }
    CHECK_FALSE(parse_error_code("nope").has_value());
}
