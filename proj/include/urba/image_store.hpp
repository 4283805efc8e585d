// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "urba/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace urba {

enum class ImageFormat { tiled_tiff, png, jpeg, raw_synthetic };

std::string to_string(ImageFormat format);

struct SyntheticSpec;

/// A source image known by its header. Opening never decodes pixels.
struct ImageRef {
    std::filesystem::path path;
    std::int64_t width = 0;
    std::int64_t height = 0;
    ImageFormat format = ImageFormat::png;
    /// Set for raw-synthetic sources only.
    std::shared_ptr<const SyntheticSpec> synthetic;

    BBox bounds() const { return BBox{0, 0, width, height}; }
};

/// Row-major 8-bit RGB pixels. `origin` is the window's rectangle in the
/// frame it was read from; resampled windows use their own frame (0,0,w,h).
struct PixelWindow {
    BBox origin;
    std::vector<std::uint8_t> pixels;

    static PixelWindow blank(std::int64_t width, std::int64_t height);

    std::int64_t width() const noexcept { return origin.width(); }
    std::int64_t height() const noexcept { return origin.height(); }
    std::uint8_t* at(std::int64_t x, std::int64_t y) noexcept {
        return pixels.data() + 3 * (y * width() + x);
    }
    const std::uint8_t* at(std::int64_t x, std::int64_t y) const noexcept {
        return pixels.data() + 3 * (y * width() + x);
    }
};

struct EnhanceParams {
    double brightness = 1.0;
    double contrast = 1.0;
    double sharpness = 1.0;
    double color = 1.0;

    /// Throws invalid-argument for negative or non-finite factors.
    void validate() const;
};

struct TokenBudget {
    std::int64_t max_tokens = 1024;
    std::int64_t pixels_per_token_side = 28;

    void validate() const;
    friend bool operator==(const TokenBudget&, const TokenBudget&) = default;
};

ImageRef open_image(const std::filesystem::path& path);

/// Exactly the pixels of `region`; throws bounds when the region leaves the image.
PixelWindow read_window(const ImageRef& ref, const BBox& region);

/// In-memory crop; `local` is relative to the window.
PixelWindow crop(const PixelWindow& window, const BBox& local);

/// Brightness, contrast, color, sharpness, in that order, each stage rounded
/// half-up to 8 bits.
PixelWindow enhance(const PixelWindow& window, const EnhanceParams& params);

std::int64_t estimate_raw_tokens(std::int64_t width, std::int64_t height, const TokenBudget& budget);
std::int64_t estimate_raw_tokens(const ImageRef& ref, const TokenBudget& budget);

struct Size2 {
    std::int64_t width = 0;
    std::int64_t height = 0;
    friend bool operator==(const Size2&, const Size2&) = default;
};

/// Output size for downsampling to `budget`: unchanged when it already fits,
/// otherwise scaled by sqrt(max/raw) (floored, at least 1 px) and shrunk further
/// until the estimate fits.
Size2 fit_to_budget(std::int64_t width, std::int64_t height, const TokenBudget& budget);

/// Area-average resample, streaming the source in strips.
PixelWindow downsample_to_budget(const ImageRef& ref, const TokenBudget& budget);
PixelWindow downsample_region(const ImageRef& ref, const BBox& region, const TokenBudget& budget);
PixelWindow downsample_window(const PixelWindow& window, const TokenBudget& budget);

/// Area-average resample of an in-memory window to an exact size (<= source size).
PixelWindow resize_area(const PixelWindow& window, std::int64_t width, std::int64_t height);

/// A rectangle of a source image, or a materialized in-memory image. Crops of
/// source views stay lazy; nothing is decoded until pixels are requested.
class ImageView {
public:
    explicit ImageView(ImageRef ref);
    ImageView(ImageRef ref, const BBox& region);
    explicit ImageView(PixelWindow window);

    std::int64_t width() const noexcept;
    std::int64_t height() const noexcept;
    bool is_lazy() const noexcept;

    /// `local` is relative to this view.
    PixelWindow read(const BBox& local) const;
    PixelWindow read_all() const;
    PixelWindow downsample(const TokenBudget& budget) const;
    ImageView crop(const BBox& local) const;

private:
    struct Source {
        ImageRef ref;
        BBox region;
    };
    std::variant<Source, std::shared_ptr<const PixelWindow>> impl_;
};

} // namespace urba
