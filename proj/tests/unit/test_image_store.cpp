// SPDX-License-Identifier: Apache-2.0
#include "test_images.hpp"

#include "urba/codecs.hpp"
#include "urba/error.hpp"
#include "urba/image_store.hpp"
#include "urba/raw_synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

using namespace urba;
using urba::testing::noise_window;
using urba::testing::TempDir;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an urba::Error");
    return ErrorCode::invalid_argument;
}

PixelWindow full_crop_oracle(const PixelWindow& full, const BBox& r) {
    auto out = PixelWindow::blank(r.width(), r.height());
    out.origin = r;
    for (auto y = r.y0; y < r.y1; ++y)
        for (auto x = r.x0; x < r.x1; ++x)
            for (int c = 0; c < 3; ++c) out.at(x - r.x0, y - r.y0)[c] = full.at(x, y)[c];
    return out;
}

BBox random_region(std::mt19937_64& rng, std::int64_t w, std::int64_t h) {
    const auto x0 = static_cast<std::int64_t>(rng() % w);
    const auto y0 = static_cast<std::int64_t>(rng() % h);
    const auto x1 = x0 + 1 + static_cast<std::int64_t>(rng() % (w - x0));
    const auto y1 = y0 + 1 + static_cast<std::int64_t>(rng() % (h - y0));
    return {x0, y0, x1, y1};
}

// Straightforward per-stage reference for enhance, written against the
// stated formulas with doubles throughout.
PixelWindow enhance_oracle(const PixelWindow& in, const EnhanceParams& p) {
    const auto w = in.width(), h = in.height();
    auto q = [](double v) { return std::clamp(std::floor(v + 0.5), 0.0, 255.0); };
    auto lum = [](double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; };
    std::vector<double> px(in.pixels.begin(), in.pixels.end());
    for (auto& v : px) v = q(v * p.brightness);
    double mean = 0;
    for (std::size_t i = 0; i < px.size(); i += 3) mean += lum(px[i], px[i + 1], px[i + 2]);
    mean /= static_cast<double>(w * h);
    for (auto& v : px) v = q(mean + (v - mean) * p.contrast);
    for (std::size_t i = 0; i < px.size(); i += 3) {
        const double g = lum(px[i], px[i + 1], px[i + 2]);
        for (int c = 0; c < 3; ++c) px[i + c] = q(g + p.color * (px[i + c] - g));
    }
    auto out = PixelWindow::blank(w, h);
    out.origin = in.origin;
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double sum = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const auto xx = std::clamp<std::int64_t>(x + dx, 0, w - 1);
                        const auto yy = std::clamp<std::int64_t>(y + dy, 0, h - 1);
                        sum += px[static_cast<std::size_t>(3 * (yy * w + xx) + c)];
                    }
                }
                const double blur = sum / 9.0;
                const double v = px[static_cast<std::size_t>(3 * (y * w + x) + c)];
                out.at(x, y)[c] = static_cast<std::uint8_t>(q(blur + p.sharpness * (v - blur)));
            }
        }
    }
    return out;
}

} // namespace

TEST_CASE("open reads dimensions from headers") {
    TempDir dir;
    codecs::write_png(dir / "one.png", PixelWindow::blank(1, 1));
    const auto one = open_image(dir / "one.png");
    CHECK(one.width == 1);
    CHECK(one.height == 1);
    CHECK(one.format == ImageFormat::png);

    std::ofstream(dir / "notes.txt") << "just some text, not an image\n";
    CHECK(code_of([&] { open_image(dir / "notes.txt"); }) == ErrorCode::corrupt_header);
    CHECK(code_of([&] { open_image(dir / "missing.png"); }) == ErrorCode::io);
    std::ofstream(dir / "a.gif", std::ios::binary) << "GIF89a\x01\x00\x01\x00";
    CHECK(code_of([&] { open_image(dir / "a.gif"); }) == ErrorCode::unsupported_format);
}

TEST_CASE("raw-synthetic gradient pixels follow the formula") {
    TempDir dir;
    write_raw_synthetic(dir / "g.ursy", 16384, 16384, SyntheticSpec{});
    const auto ref = open_image(dir / "g.ursy");
    CHECK(ref.format == ImageFormat::raw_synthetic);
    CHECK(ref.width == 16384);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 50; ++i) {
        const auto x = static_cast<std::int64_t>(rng() % 16384);
        const auto y = static_cast<std::int64_t>(rng() % 16384);
        const auto win = read_window(ref, {x, y, x + 1, y + 1});
        CHECK(win.pixels[0] == (x * 7) % 256);
        CHECK(win.pixels[1] == (y * 13) % 256);
        CHECK(win.pixels[2] == ((x + y) * 3) % 256);
    }
}

TEST_CASE("raw-synthetic header corruption is detected") {
    TempDir dir;
    write_raw_synthetic(dir / "g.ursy", 64, 64, SyntheticSpec{});
    std::fstream f(dir / "g.ursy", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char bad_version[4] = {9, 0, 0, 0};
    f.write(bad_version, 4);
    f.close();
    CHECK(code_of([&] { open_image(dir / "g.ursy"); }) == ErrorCode::corrupt_header);

    std::ofstream(dir / "short.ursy", std::ios::binary) << "URSY\x01";
    CHECK(code_of([&] { open_image(dir / "short.ursy"); }) == ErrorCode::corrupt_header);
}

TEST_CASE("read_window rejects out-of-bounds regions") {
    TempDir dir;
    write_raw_synthetic(dir / "g.ursy", 100, 80, SyntheticSpec{});
    const auto ref = open_image(dir / "g.ursy");
    CHECK(code_of([&] { read_window(ref, {-1, 0, 10, 10}); }) == ErrorCode::bounds);
    CHECK(code_of([&] { read_window(ref, {90, 70, 101, 80}); }) == ErrorCode::bounds);
    CHECK(code_of([&] { read_window(ref, {5, 5, 5, 9}); }) == ErrorCode::bounds);
}

TEST_CASE("windowed reads equal crops of the full decode for every format") {
    TempDir dir;
    const auto full = noise_window(157, 113, 11);
    codecs::write_png(dir / "n.png", full);
    urba::testing::write_tiff(dir / "tiled.tif", full, 32);
    urba::testing::write_tiff(dir / "strip.tif", full, 0, 7);
    urba::testing::write_jpeg(dir / "n.jpg", full);

    const auto jpeg_ref = open_image(dir / "n.jpg");
    const auto jpeg_full = read_window(jpeg_ref, jpeg_ref.bounds());

    struct Case {
        std::string name;
        const PixelWindow* truth;
    };
    for (const auto& c : {Case{"n.png", &full}, Case{"tiled.tif", &full}, Case{"strip.tif", &full},
                          Case{"n.jpg", &jpeg_full}}) {
        CAPTURE(c.name);
        const auto ref = open_image(dir / c.name);
        CHECK(ref.width == 157);
        CHECK(ref.height == 113);
        CHECK(read_window(ref, ref.bounds()).pixels == c.truth->pixels);
        std::mt19937_64 rng(5);
        for (int i = 0; i < 25; ++i) {
            const auto r = random_region(rng, 157, 113);
            CAPTURE(r.to_string());
            const auto win = read_window(ref, r);
            CHECK(win.origin == r);
            CHECK(win.pixels == full_crop_oracle(*c.truth, r).pixels);
        }
    }
}

TEST_CASE("in-memory crop matches read_window") {
    TempDir dir;
    write_raw_synthetic(dir / "g.ursy", 300, 200, SyntheticSpec{});
    const auto ref = open_image(dir / "g.ursy");
    const auto whole = read_window(ref, ref.bounds());
    std::mt19937_64 rng(9);
    for (int i = 0; i < 100; ++i) {
        const auto r = random_region(rng, 300, 200);
        CHECK(crop(whole, r).pixels == read_window(ref, r).pixels);
    }
}

TEST_CASE("enhance identity and fixed cases") {
    const auto win = noise_window(23, 17, 2);
    CHECK(enhance(win, EnhanceParams{}).pixels == win.pixels);

    EnhanceParams dark;
    dark.brightness = 0.0;
    for (auto b : enhance(win, dark).pixels) CHECK(b == 0);

    auto red = PixelWindow::blank(5, 4);
    for (std::size_t i = 0; i < red.pixels.size(); i += 3) red.pixels[i] = 255;
    EnhanceParams gray;
    gray.color = 0.0;
    const auto out = enhance(red, gray);
    for (auto b : out.pixels) CHECK(b == 76);
}

TEST_CASE("enhance matches the per-stage reference") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> factor(0.0, 2.5);
    for (int t = 0; t < 40; ++t) {
        const auto win = noise_window(1 + static_cast<std::int64_t>(rng() % 19), 1 + static_cast<std::int64_t>(rng() % 19), rng());
        EnhanceParams p{factor(rng), factor(rng), factor(rng), factor(rng)};
        CHECK(enhance(win, p).pixels == enhance_oracle(win, p).pixels);
        CHECK(enhance(win, p).pixels == enhance(win, p).pixels);
    }
}

TEST_CASE("enhance rejects invalid factors") {
    const auto win = noise_window(2, 2, 1);
    EnhanceParams p;
    p.contrast = -0.5;
    CHECK(code_of([&] { enhance(win, p); }) == ErrorCode::invalid_argument);
    p.contrast = std::nan("");
    CHECK(code_of([&] { enhance(win, p); }) == ErrorCode::invalid_argument);
}

TEST_CASE("estimate_raw_tokens") {
    CHECK(estimate_raw_tokens(28, 28, TokenBudget{1, 28}) == 1);
    CHECK(estimate_raw_tokens(56, 28, TokenBudget{1, 28}) == 2);
    // ceil(48685/28) = 1739, ceil(2821/28) = 101
    const std::int64_t cols = (48685 + 27) / 28, rows = (2821 + 27) / 28;
    CHECK(cols == 1739);
    CHECK(rows == 101);
    CHECK(estimate_raw_tokens(48685, 2821, TokenBudget{1, 28}) == cols * rows);
    CHECK(cols * rows == 175639);
}

TEST_CASE("fit_to_budget") {
    CHECK(fit_to_budget(2800, 2800, TokenBudget{10000, 28}) == Size2{2800, 2800});
    const auto half = fit_to_budget(2800, 2800, TokenBudget{2500, 28});
    const double f = std::sqrt(2500.0 / (100.0 * 100.0));
    CHECK(half == Size2{static_cast<std::int64_t>(2800 * f), static_cast<std::int64_t>(2800 * f)});
    CHECK(half == Size2{1400, 1400});
    CHECK(estimate_raw_tokens(half.width, half.height, TokenBudget{2500, 28}) == 2500);
    CHECK(fit_to_budget(10, 10, TokenBudget{1, 28}) == Size2{10, 10});

    std::mt19937_64 rng(4);
    for (int t = 0; t < 2000; ++t) {
        const std::int64_t w = 1 + static_cast<std::int64_t>(rng() % 60000);
        const std::int64_t h = 1 + static_cast<std::int64_t>(rng() % 60000);
        const TokenBudget b{1 + static_cast<std::int64_t>(rng() % 5000), 28};
        const auto s = fit_to_budget(w, h, b);
        INFO(w, "x", h, " budget ", b.max_tokens);
        CHECK(estimate_raw_tokens(s.width, s.height, b) <= b.max_tokens);
        CHECK(s.width <= w);
        CHECK(s.height <= h);
    }
}

TEST_CASE("downsample is an area average") {
    TempDir dir;
    write_raw_synthetic(dir / "g.ursy", 2800, 2800, SyntheticSpec{});
    const auto ref = open_image(dir / "g.ursy");
    const auto out = downsample_to_budget(ref, TokenBudget{2500, 28});
    REQUIRE(out.width() == 1400);
    REQUIRE(out.height() == 1400);
    // each output pixel is the half-up mean of a 2x2 source block
    std::mt19937_64 rng(8);
    for (int i = 0; i < 200; ++i) {
        const auto x = static_cast<std::int64_t>(rng() % 1400), y = static_cast<std::int64_t>(rng() % 1400);
        for (int c = 0; c < 3; ++c) {
            int sum = 0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) sum += gradient_pixel(2 * x + dx, 2 * y + dy)[c];
            CHECK(out.at(x, y)[c] == (2 * sum + 4) / 8);
        }
    }
    const auto same = downsample_to_budget(ref, TokenBudget{10000, 28});
    CHECK(same.pixels == read_window(ref, ref.bounds()).pixels);
}

TEST_CASE("ImageView crops stay lazy and compose offsets") {
    TempDir dir;
    write_raw_synthetic(dir / "g.ursy", 1000, 800, SyntheticSpec{});
    const ImageView view(open_image(dir / "g.ursy"));
    const auto inner = view.crop({100, 200, 400, 500}).crop({10, 20, 50, 60});
    CHECK(inner.is_lazy());
    CHECK(inner.width() == 40);
    CHECK(inner.read_all().pixels == read_window(open_image(dir / "g.ursy"), {110, 220, 150, 260}).pixels);
    CHECK(code_of([&] { (void)view.crop({900, 0, 1001, 10}); }) == ErrorCode::bounds);

    const ImageView mem(noise_window(30, 30, 1));
    CHECK_FALSE(mem.is_lazy());
    CHECK(mem.crop({5, 5, 10, 10}).read_all().pixels == crop(noise_window(30, 30, 1), {5, 5, 10, 10}).pixels);
}
