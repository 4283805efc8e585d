// SPDX-License-Identifier: Apache-2.0
#include "urba/image_store.hpp"

#include "urba/codecs.hpp"
#include "urba/error.hpp"
#include "urba/raw_synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

namespace urba {
namespace {

std::uint8_t round_half_up(double v) noexcept {
    const double r = std::floor(v + 0.5);
    if (r <= 0.0) return 0;
    if (r >= 255.0) return 255;
    return static_cast<std::uint8_t>(r);
}

double gray(const std::uint8_t* p) noexcept { return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]; }
double gray(const double* p) noexcept { return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]; }

ImageFormat sniff_format(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, fmt::format("cannot open {}", path.string()));
    unsigned char m[8] = {};
    in.read(reinterpret_cast<char*>(m), sizeof m);
    const auto n = in.gcount();
    if (n >= 8 && std::memcmp(m, "\x89PNG\r\n\x1a\n", 8) == 0) return ImageFormat::png;
    if (n >= 3 && m[0] == 0xFF && m[1] == 0xD8 && m[2] == 0xFF) return ImageFormat::jpeg;
    if (n >= 4 && (std::memcmp(m, "II*\0", 4) == 0 || std::memcmp(m, "MM\0*", 4) == 0)) return ImageFormat::tiled_tiff;
    if (n >= 4 && std::memcmp(m, "URSY", 4) == 0) return ImageFormat::raw_synthetic;
    if (n >= 4 && (std::memcmp(m, "GIF8", 4) == 0 || std::memcmp(m, "RIFF", 4) == 0 ||
                   std::memcmp(m, "II+\0", 4) == 0 || (m[0] == 'B' && m[1] == 'M'))) {
        throw Error(ErrorCode::unsupported_format, fmt::format("{}: unsupported image format", path.string()));
    }
    throw Error(ErrorCode::corrupt_header, fmt::format("{}: unrecognised image header", path.string()));
}

void check_inside(std::int64_t width, std::int64_t height, const BBox& region, const std::string& what) {
    if (region.x0 < 0 || region.y0 < 0 || region.x1 > width || region.y1 > height || region.x1 <= region.x0 ||
        region.y1 <= region.y0) {
        throw Error(ErrorCode::bounds,
                    fmt::format("region {} out of bounds for {} ({}x{})", region.to_string(), what, width, height));
    }
}

// Rows of a source region, served in order.
class WindowRows final : public codecs::RowStream {
public:
    WindowRows(const ImageRef& ref, const BBox& region) : ref_(ref), region_(region) {}
    const BBox& region() const noexcept override { return region_; }
    void read(std::int64_t rows, std::uint8_t* out) override {
        const BBox strip{region_.x0, region_.y0 + served_, region_.x1, region_.y0 + served_ + rows};
        const auto w = read_window(ref_, strip);
        std::memcpy(out, w.pixels.data(), w.pixels.size());
        served_ += rows;
    }

private:
    const ImageRef& ref_;
    BBox region_;
    std::int64_t served_ = 0;
};

class MemoryRows final : public codecs::RowStream {
public:
    explicit MemoryRows(const PixelWindow& window)
        : window_(window), region_{0, 0, window.width(), window.height()} {}
    const BBox& region() const noexcept override { return region_; }
    void read(std::int64_t rows, std::uint8_t* out) override {
        const std::size_t n = static_cast<std::size_t>(rows * region_.width() * 3);
        std::memcpy(out, window_.at(0, served_), n);
        served_ += rows;
    }

private:
    const PixelWindow& window_;
    BBox region_;
    std::int64_t served_ = 0;
};

std::unique_ptr<codecs::RowStream> row_stream(const ImageRef& ref, const BBox& region) {
    check_inside(ref.width, ref.height, region, ref.path.filename().string());
    switch (ref.format) {
    case ImageFormat::png: return codecs::png_rows(ref.path, region);
    case ImageFormat::jpeg: return codecs::jpeg_rows(ref.path, region);
    default: return std::make_unique<WindowRows>(ref, region);
    }
}

// Integer-footprint area average: output cell i covers source columns
// [floor(i*W/w), floor((i+1)*W/w)), likewise for rows. Pulls one strip of
// source rows per output row.
PixelWindow area_resample(codecs::RowStream& rows, std::int64_t out_w, std::int64_t out_h) {
    const std::int64_t in_w = rows.region().width();
    const std::int64_t in_h = rows.region().height();
    auto out = PixelWindow::blank(out_w, out_h);
    std::vector<std::int64_t> col_start(static_cast<std::size_t>(out_w + 1));
    for (std::int64_t i = 0; i <= out_w; ++i) col_start[i] = i * in_w / out_w;
    std::vector<std::uint64_t> sums(static_cast<std::size_t>(out_w * 3));
    std::vector<std::uint8_t> strip;
    for (std::int64_t j = 0; j < out_h; ++j) {
        const std::int64_t y0 = j * in_h / out_h;
        const std::int64_t y1 = (j + 1) * in_h / out_h;
        strip.resize(static_cast<std::size_t>((y1 - y0) * in_w * 3));
        rows.read(y1 - y0, strip.data());
        std::fill(sums.begin(), sums.end(), 0);
        for (std::int64_t y = 0; y < y1 - y0; ++y) {
            const std::uint8_t* src = strip.data() + y * in_w * 3;
            for (std::int64_t i = 0; i < out_w; ++i) {
                std::uint64_t s0 = 0, s1 = 0, s2 = 0;
                for (std::int64_t x = col_start[i]; x < col_start[i + 1]; ++x) {
                    s0 += src[3 * x];
                    s1 += src[3 * x + 1];
                    s2 += src[3 * x + 2];
                }
                sums[3 * i] += s0;
                sums[3 * i + 1] += s1;
                sums[3 * i + 2] += s2;
            }
        }
        for (std::int64_t i = 0; i < out_w; ++i) {
            const std::uint64_t count = static_cast<std::uint64_t>((y1 - y0) * (col_start[i + 1] - col_start[i]));
            std::uint8_t* dst = out.at(i, j);
            for (int c = 0; c < 3; ++c) dst[c] = static_cast<std::uint8_t>((2 * sums[3 * i + c] + count) / (2 * count));
        }
    }
    return out;
}

} // namespace

std::string to_string(ImageFormat format) {
    switch (format) {
    case ImageFormat::tiled_tiff: return "tiled-tiff";
    case ImageFormat::png: return "png";
    case ImageFormat::jpeg: return "jpeg";
    case ImageFormat::raw_synthetic: return "raw-synthetic";
    }
    return "unknown";
}

PixelWindow PixelWindow::blank(std::int64_t width, std::int64_t height) {
    PixelWindow w;
    w.origin = BBox::make(0, 0, width, height);
    w.pixels.assign(static_cast<std::size_t>(width * height * 3), 0);
    return w;
}

void EnhanceParams::validate() const {
    for (double v : {brightness, contrast, sharpness, color}) {
        if (!std::isfinite(v) || v < 0.0) {
            throw Error(ErrorCode::invalid_argument, "enhance factors must be finite and non-negative");
        }
    }
}

void TokenBudget::validate() const {
    if (max_tokens < 1 || pixels_per_token_side < 1) {
        throw Error(ErrorCode::invalid_argument,
                    fmt::format("token budget needs positive values, got {} / {}", max_tokens, pixels_per_token_side));
    }
}

ImageRef open_image(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) {
        throw Error(ErrorCode::io, fmt::format("no such image file: {}", path.string()));
    }
    ImageRef ref;
    ref.path = path;
    ref.format = sniff_format(path);
    codecs::Dimensions dims;
    switch (ref.format) {
    case ImageFormat::png: dims = codecs::probe_png(path); break;
    case ImageFormat::jpeg: dims = codecs::probe_jpeg(path); break;
    case ImageFormat::tiled_tiff: dims = codecs::probe_tiff(path); break;
    case ImageFormat::raw_synthetic: {
        auto file = read_raw_synthetic(path);
        dims = {file.width, file.height};
        ref.synthetic = std::make_shared<const SyntheticSpec>(std::move(file.spec));
        break;
    }
    }
    ref.width = dims.width;
    ref.height = dims.height;
    return ref;
}

PixelWindow read_window(const ImageRef& ref, const BBox& region) {
    check_inside(ref.width, ref.height, region, ref.path.filename().string());
    switch (ref.format) {
    case ImageFormat::png: return codecs::read_png_window(ref.path, region);
    case ImageFormat::jpeg: return codecs::read_jpeg_window(ref.path, region);
    case ImageFormat::tiled_tiff: return codecs::read_tiff_window(ref.path, region);
    case ImageFormat::raw_synthetic:
        if (!ref.synthetic) throw Error(ErrorCode::invalid_argument, "raw-synthetic ref without spec");
        return render_synthetic(*ref.synthetic, region);
    }
    throw Error(ErrorCode::unsupported_format, "unknown image format");
}

PixelWindow crop(const PixelWindow& window, const BBox& local) {
    check_inside(window.width(), window.height(), local, "window");
    auto out = PixelWindow::blank(local.width(), local.height());
    out.origin = local.translated(window.origin.x0, window.origin.y0);
    const std::size_t stride = static_cast<std::size_t>(local.width()) * 3;
    for (std::int64_t y = local.y0; y < local.y1; ++y) {
        std::memcpy(out.at(0, y - local.y0), window.at(local.x0, y), stride);
    }
    return out;
}

PixelWindow enhance(const PixelWindow& window, const EnhanceParams& params) {
    params.validate();
    const std::int64_t w = window.width();
    const std::int64_t h = window.height();
    const std::size_t n = static_cast<std::size_t>(w * h);
    std::vector<std::uint8_t> cur = window.pixels;

    // brightness
    for (auto& v : cur) v = round_half_up(v * params.brightness);

    // contrast around the mean gray level of the brightened window
    long double gray_sum = 0.0L;
    for (std::size_t i = 0; i < n; ++i) gray_sum += gray(&cur[3 * i]);
    const double mu = static_cast<double>(gray_sum / static_cast<long double>(n));
    for (auto& v : cur) v = round_half_up(mu + (v - mu) * params.contrast);

    // color: blend each pixel with its own gray level
    for (std::size_t i = 0; i < n; ++i) {
        std::uint8_t* p = &cur[3 * i];
        const double g = gray(p);
        for (int c = 0; c < 3; ++c) p[c] = round_half_up(g + params.color * (p[c] - g));
    }

    // sharpness against a 3x3 edge-replicated box blur
    std::vector<std::uint8_t> sharp(cur.size());
    auto px = [&](std::int64_t x, std::int64_t y, int c) {
        x = std::clamp<std::int64_t>(x, 0, w - 1);
        y = std::clamp<std::int64_t>(y, 0, h - 1);
        return cur[static_cast<std::size_t>(3 * (y * w + x) + c)];
    };
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                int s = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) s += px(x + dx, y + dy, c);
                const double blur = s / 9.0;
                const double p = px(x, y, c);
                sharp[static_cast<std::size_t>(3 * (y * w + x) + c)] = round_half_up(blur + params.sharpness * (p - blur));
            }
        }
    }

    PixelWindow out;
    out.origin = window.origin;
    out.pixels = std::move(sharp);
    return out;
}

std::int64_t estimate_raw_tokens(std::int64_t width, std::int64_t height, const TokenBudget& budget) {
    budget.validate();
    const std::int64_t pps = budget.pixels_per_token_side;
    return ((width + pps - 1) / pps) * ((height + pps - 1) / pps);
}

std::int64_t estimate_raw_tokens(const ImageRef& ref, const TokenBudget& budget) {
    return estimate_raw_tokens(ref.width, ref.height, budget);
}

Size2 fit_to_budget(std::int64_t width, std::int64_t height, const TokenBudget& budget) {
    const std::int64_t raw = estimate_raw_tokens(width, height, budget);
    if (raw <= budget.max_tokens) return {width, height};
    double f = std::sqrt(static_cast<double>(budget.max_tokens) / static_cast<double>(raw));
    auto scaled = [&](double factor) {
        return Size2{std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(width * factor))),
                     std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(height * factor)))};
    };
    Size2 s = scaled(f);
    // Per-axis ceilings can push the estimate past the budget; shrink until it fits.
    while (estimate_raw_tokens(s.width, s.height, budget) > budget.max_tokens) {
        f *= 0.995;
        s = scaled(f);
    }
    return s;
}

PixelWindow downsample_region(const ImageRef& ref, const BBox& region, const TokenBudget& budget) {
    const auto size = fit_to_budget(region.width(), region.height(), budget);
    auto rows = row_stream(ref, region);
    if (size.width == region.width() && size.height == region.height()) {
        auto out = PixelWindow::blank(size.width, size.height);
        out.origin = region;
        rows->read(size.height, out.pixels.data());
        return out;
    }
    return area_resample(*rows, size.width, size.height);
}

PixelWindow downsample_to_budget(const ImageRef& ref, const TokenBudget& budget) {
    return downsample_region(ref, ref.bounds(), budget);
}

PixelWindow resize_area(const PixelWindow& window, std::int64_t width, std::int64_t height) {
    if (width < 1 || height < 1 || width > window.width() || height > window.height()) {
        throw Error(ErrorCode::invalid_argument,
                    fmt::format("cannot area-resize {}x{} to {}x{}", window.width(), window.height(), width, height));
    }
    if (width == window.width() && height == window.height()) return window;
    MemoryRows rows(window);
    return area_resample(rows, width, height);
}

PixelWindow downsample_window(const PixelWindow& window, const TokenBudget& budget) {
    const auto size = fit_to_budget(window.width(), window.height(), budget);
    return resize_area(window, size.width, size.height);
}

ImageView::ImageView(ImageRef ref) : impl_(Source{ref, ref.bounds()}) {}

ImageView::ImageView(ImageRef ref, const BBox& region) {
    check_inside(ref.width, ref.height, region, ref.path.filename().string());
    impl_ = Source{std::move(ref), region};
}

ImageView::ImageView(PixelWindow window)
    : impl_(std::make_shared<const PixelWindow>(std::move(window))) {}

std::int64_t ImageView::width() const noexcept {
    if (const auto* s = std::get_if<Source>(&impl_)) return s->region.width();
    return std::get<1>(impl_)->width();
}

std::int64_t ImageView::height() const noexcept {
    if (const auto* s = std::get_if<Source>(&impl_)) return s->region.height();
    return std::get<1>(impl_)->height();
}

bool ImageView::is_lazy() const noexcept { return std::holds_alternative<Source>(impl_); }

PixelWindow ImageView::read(const BBox& local) const {
    check_inside(width(), height(), local, "image view");
    if (const auto* s = std::get_if<Source>(&impl_)) {
        return read_window(s->ref, local.translated(s->region.x0, s->region.y0));
    }
    return urba::crop(*std::get<1>(impl_), local);
}

PixelWindow ImageView::read_all() const { return read(BBox{0, 0, width(), height()}); }

PixelWindow ImageView::downsample(const TokenBudget& budget) const {
    if (const auto* s = std::get_if<Source>(&impl_)) return downsample_region(s->ref, s->region, budget);
    return downsample_window(*std::get<1>(impl_), budget);
}

ImageView ImageView::crop(const BBox& local) const {
    check_inside(width(), height(), local, "image view");
    if (const auto* s = std::get_if<Source>(&impl_)) {
        return ImageView(s->ref, local.translated(s->region.x0, s->region.y0));
    }
    return ImageView(urba::crop(*std::get<1>(impl_), local));
}

} // namespace urba
