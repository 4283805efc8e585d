// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "urba/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace urba {

struct PixelWindow;

namespace codecs {

struct Dimensions {
    std::int64_t width = 0;
    std::int64_t height = 0;
};

// Header probes. None of these decode pixel data.
Dimensions probe_png(const std::filesystem::path& path);
Dimensions probe_jpeg(const std::filesystem::path& path);
Dimensions probe_tiff(const std::filesystem::path& path);

/// Sequential reader over the rows of a region.
class RowStream {
public:
    virtual ~RowStream() = default;
    virtual const BBox& region() const noexcept = 0;
    /// Writes the next `rows` rows of the region, packed RGB, to `out`.
    virtual void read(std::int64_t rows, std::uint8_t* out) = 0;
};

std::unique_ptr<RowStream> png_rows(const std::filesystem::path& path, const BBox& region);
std::unique_ptr<RowStream> jpeg_rows(const std::filesystem::path& path, const BBox& region);

// Windowed decoders. Memory is bounded by one row (png, jpeg) or one
// tile/strip (tiff); interlaced PNGs fall back to a full decode.
PixelWindow read_png_window(const std::filesystem::path& path, const BBox& region);
PixelWindow read_jpeg_window(const std::filesystem::path& path, const BBox& region);
PixelWindow read_tiff_window(const std::filesystem::path& path, const BBox& region);

std::vector<std::uint8_t> encode_png(const PixelWindow& window);
PixelWindow decode_png(std::span<const std::uint8_t> bytes);
void write_png(const std::filesystem::path& path, const PixelWindow& window);

} // namespace codecs
} // namespace urba
