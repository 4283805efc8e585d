// SPDX-License-Identifier: Apache-2.0
#include "urba/codecs.hpp"

#include "urba/error.hpp"
#include "urba/image_store.hpp"

#include <fmt/format.h>
#include <jpeglib.h>
#include <png.h>
#include <tiffio.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace urba::codecs {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw Error(ErrorCode::io, fmt::format("cannot open {}", path.string()));
    return f;
}

std::uint32_t be32(const unsigned char* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
           std::uint32_t{p[3]};
}

void check_region(const Dimensions& dims, const BBox& region, const std::filesystem::path& path) {
    if (region.x0 < 0 || region.y0 < 0 || region.x1 > dims.width || region.y1 > dims.height ||
        region.x1 <= region.x0 || region.y1 <= region.y0) {
        throw Error(ErrorCode::bounds, fmt::format("region {} outside {} ({}x{})", region.to_string(),
                                                   path.filename().string(), dims.width, dims.height));
    }
}

// ---- PNG ----------------------------------------------------------------

struct PngReadState {
    png_structp png = nullptr;
    png_infop info = nullptr;
    char message[256] = {};

    ~PngReadState() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

void png_error_fn(png_structp png, png_const_charp msg) {
    auto* state = static_cast<PngReadState*>(png_get_error_ptr(png));
    std::snprintf(state->message, sizeof state->message, "%s", msg);
    png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct MemoryReader {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

void png_memory_read(png_structp png, png_bytep out, png_size_t len) {
    auto* reader = static_cast<MemoryReader*>(png_get_io_ptr(png));
    if (reader->offset + len > reader->bytes.size()) png_error(png, "truncated png data");
    std::memcpy(out, reader->bytes.data() + reader->offset, len);
    reader->offset += len;
}

void configure_rgb8(png_structp png, png_infop info) {
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
}

// Sequential png row reader over `region`. Every libpng call sits behind a
// fresh setjmp in the calling frame; nothing with a destructor is created
// between setjmp and the libpng calls.
class PngRows final : public RowStream {
public:
    PngRows(std::unique_ptr<PngReadState> state, FilePtr file, std::unique_ptr<MemoryReader> reader,
            const BBox* wanted, std::string what)
        : state_(std::move(state)), file_(std::move(file)), reader_(std::move(reader)), what_(std::move(what)) {
        if (setjmp(png_jmpbuf(state_->png))) fail();
        png_read_info(state_->png, state_->info);
        dims_ = Dimensions{png_get_image_width(state_->png, state_->info),
                           png_get_image_height(state_->png, state_->info)};
        region_ = wanted ? *wanted : BBox{0, 0, dims_.width, dims_.height};
        if (wanted) check_region(dims_, region_, what_);
        configure_rgb8(state_->png, state_->info);
        passes_ = png_set_interlace_handling(state_->png);
        png_read_update_info(state_->png, state_->info);
        rowbytes_ = png_get_rowbytes(state_->png, state_->info);
        if (rowbytes_ != static_cast<std::size_t>(dims_.width) * 3) {
            throw Error(ErrorCode::unsupported_format, fmt::format("{}: unexpected png layout", what_));
        }
        if (passes_ > 1) {
            full_.resize(rowbytes_ * static_cast<std::size_t>(dims_.height));
            full_rows_.resize(static_cast<std::size_t>(dims_.height));
            for (std::int64_t y = 0; y < dims_.height; ++y) full_rows_[y] = full_.data() + rowbytes_ * y;
            if (setjmp(png_jmpbuf(state_->png))) fail();
            png_read_image(state_->png, full_rows_.data());
        } else {
            row_.resize(rowbytes_);
        }
        next_ = 0;
    }

    const BBox& region() const noexcept override { return region_; }
    Dimensions source() const noexcept { return dims_; }

    void read(std::int64_t rows, std::uint8_t* out) override {
        const std::size_t stride = static_cast<std::size_t>(region_.width()) * 3;
        if (passes_ > 1) {
            for (std::int64_t i = 0; i < rows; ++i, out += stride) {
                const std::int64_t y = region_.y0 + served_ + i;
                std::memcpy(out, full_.data() + rowbytes_ * y + region_.x0 * 3, stride);
            }
            served_ += rows;
            return;
        }
        const std::int64_t target = region_.y0 + served_ + rows;
        if (setjmp(png_jmpbuf(state_->png))) fail();
        while (next_ < target) {
            png_read_row(state_->png, row_.data(), nullptr);
            if (next_ >= region_.y0 + served_) {
                std::memcpy(out, row_.data() + region_.x0 * 3, stride);
                out += stride;
            }
            ++next_;
        }
        served_ += rows;
    }

private:
    [[noreturn]] void fail() {
        throw Error(ErrorCode::undecodable_image, fmt::format("{}: {}", what_, state_->message));
    }

    std::unique_ptr<PngReadState> state_;
    FilePtr file_;
    std::unique_ptr<MemoryReader> reader_;
    std::string what_;
    Dimensions dims_;
    BBox region_;
    int passes_ = 1;
    std::size_t rowbytes_ = 0;
    std::vector<png_byte> row_;
    std::vector<png_byte> full_;
    std::vector<png_bytep> full_rows_;
    std::int64_t next_ = 0;
    std::int64_t served_ = 0;
};

std::unique_ptr<PngReadState> make_png_state() {
    auto state = std::make_unique<PngReadState>();
    state->png = png_create_read_struct(PNG_LIBPNG_VER_STRING, state.get(), png_error_fn, png_warning_fn);
    if (!state->png) throw Error(ErrorCode::io, "png_create_read_struct failed");
    state->info = png_create_info_struct(state->png);
    return state;
}

PixelWindow drain(RowStream& rows) {
    auto out = PixelWindow::blank(rows.region().width(), rows.region().height());
    out.origin = rows.region();
    rows.read(out.height(), out.pixels.data());
    return out;
}

// ---- JPEG ---------------------------------------------------------------

struct JpegErr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX] = {};
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr, int) {}

// ---- TIFF ---------------------------------------------------------------

struct TiffCloser {
    void operator()(TIFF* t) const noexcept { TIFFClose(t); }
};
using TiffPtr = std::unique_ptr<TIFF, TiffCloser>;

TiffPtr open_tiff(const std::filesystem::path& path) {
    static const bool quiet = [] {
        TIFFSetErrorHandler(nullptr);
        TIFFSetWarningHandler(nullptr);
        return true;
    }();
    (void)quiet;
    if (!std::filesystem::exists(path)) {
        throw Error(ErrorCode::io, fmt::format("cannot open {}", path.string()));
    }
    TiffPtr tif(TIFFOpen(path.c_str(), "r"));
    if (!tif) throw Error(ErrorCode::corrupt_header, fmt::format("{}: not a readable tiff", path.string()));
    return tif;
}

struct TiffLayout {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint16_t samples = 0;
    std::uint16_t photometric = 0;
};

TiffLayout tiff_layout(TIFF* tif, const std::filesystem::path& path) {
    TiffLayout l;
    std::uint16_t bits = 0;
    std::uint16_t planar = PLANARCONFIG_CONTIG;
    if (!TIFFGetField(tif, TIFFTAG_IMAGEWIDTH, &l.width) || !TIFFGetField(tif, TIFFTAG_IMAGELENGTH, &l.height)) {
        throw Error(ErrorCode::corrupt_header, fmt::format("{}: missing tiff dimensions", path.string()));
    }
    TIFFGetFieldDefaulted(tif, TIFFTAG_BITSPERSAMPLE, &bits);
    TIFFGetFieldDefaulted(tif, TIFFTAG_SAMPLESPERPIXEL, &l.samples);
    TIFFGetFieldDefaulted(tif, TIFFTAG_PLANARCONFIG, &planar);
    if (!TIFFGetField(tif, TIFFTAG_PHOTOMETRIC, &l.photometric)) l.photometric = PHOTOMETRIC_MINISBLACK;
    const bool gray = (l.photometric == PHOTOMETRIC_MINISBLACK || l.photometric == PHOTOMETRIC_MINISWHITE) &&
                      (l.samples == 1 || l.samples == 2);
    const bool rgb = l.photometric == PHOTOMETRIC_RGB && (l.samples == 3 || l.samples == 4);
    if (bits != 8 || planar != PLANARCONFIG_CONTIG || !(gray || rgb) || l.width == 0 || l.height == 0) {
        throw Error(ErrorCode::unsupported_format,
                    fmt::format("{}: only 8-bit contiguous gray/RGB tiff is supported", path.string()));
    }
    return l;
}

void copy_tiff_pixels(const TiffLayout& l, const std::uint8_t* src, std::uint8_t* dst, std::int64_t count) {
    for (std::int64_t i = 0; i < count; ++i, src += l.samples, dst += 3) {
        if (l.samples >= 3) {
            dst[0] = src[0];
            dst[1] = src[1];
            dst[2] = src[2];
        } else {
            const std::uint8_t v = l.photometric == PHOTOMETRIC_MINISWHITE ? 255 - src[0] : src[0];
            dst[0] = dst[1] = dst[2] = v;
        }
    }
}

} // namespace

Dimensions probe_png(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, fmt::format("cannot open {}", path.string()));
    unsigned char head[33] = {};
    in.read(reinterpret_cast<char*>(head), sizeof head);
    static constexpr unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (in.gcount() != 33 || std::memcmp(head, sig, 8) != 0 || be32(head + 8) != 13 ||
        std::memcmp(head + 12, "IHDR", 4) != 0) {
        throw Error(ErrorCode::corrupt_header, fmt::format("{}: bad png header", path.string()));
    }
    const Dimensions d{be32(head + 16), be32(head + 20)};
    if (d.width == 0 || d.height == 0) {
        throw Error(ErrorCode::corrupt_header, fmt::format("{}: zero png dimension", path.string()));
    }
    return d;
}

Dimensions probe_jpeg(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, fmt::format("cannot open {}", path.string()));
    auto corrupt = [&](const char* why) {
        return Error(ErrorCode::corrupt_header, fmt::format("{}: {}", path.string(), why));
    };
    auto get = [&]() -> int {
        const int c = in.get();
        if (c == EOF) throw corrupt("truncated jpeg header");
        return c;
    };
    if (get() != 0xFF || get() != 0xD8) throw corrupt("missing jpeg SOI");
    for (;;) {
        int c = get();
        if (c != 0xFF) throw corrupt("bad jpeg marker");
        while (c == 0xFF) c = get();
        const int marker = c;
        if (marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7)) continue;
        if (marker == 0xD9 || marker == 0xDA) throw corrupt("no jpeg frame header");
        const int len = (get() << 8) | get();
        if (len < 2) throw corrupt("bad jpeg segment length");
        const bool sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 && marker != 0xCC;
        if (sof) {
            get(); // precision
            const int h = (get() << 8) | get();
            const int w = (get() << 8) | get();
            if (w == 0 || h == 0) throw corrupt("zero jpeg dimension");
            return Dimensions{w, h};
        }
        in.seekg(len - 2, std::ios::cur);
        if (!in) throw corrupt("truncated jpeg segment");
    }
}

Dimensions probe_tiff(const std::filesystem::path& path) {
    auto tif = open_tiff(path);
    const auto l = tiff_layout(tif.get(), path);
    return Dimensions{l.width, l.height};
}

std::unique_ptr<RowStream> png_rows(const std::filesystem::path& path, const BBox& region) {
    auto file = open_file(path);
    auto state = make_png_state();
    png_init_io(state->png, file.get());
    return std::make_unique<PngRows>(std::move(state), std::move(file), nullptr, &region, path.string());
}

PixelWindow read_png_window(const std::filesystem::path& path, const BBox& region) {
    return drain(*png_rows(path, region));
}

PixelWindow decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw Error(ErrorCode::undecodable_image, "payload is not a png image");
    }
    auto state = make_png_state();
    auto reader = std::make_unique<MemoryReader>(MemoryReader{bytes, 0});
    png_set_read_fn(state->png, reader.get(), png_memory_read);
    PngRows rows(std::move(state), nullptr, std::move(reader), nullptr, "png payload");
    return drain(rows);
}

namespace {

struct PngWriteState {
    png_structp png = nullptr;
    png_infop info = nullptr;
    char message[256] = {};
    ~PngWriteState() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

void png_write_error(png_structp png, png_const_charp msg) {
    auto* state = static_cast<PngWriteState*>(png_get_error_ptr(png));
    std::snprintf(state->message, sizeof state->message, "%s", msg);
    png_longjmp(png, 1);
}

void png_vector_write(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + len);
}

void png_vector_flush(png_structp) {}

} // namespace

std::vector<std::uint8_t> encode_png(const PixelWindow& window) {
    auto out = std::make_unique<std::vector<std::uint8_t>>();
    PngWriteState state;
    state.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &state, png_write_error, png_warning_fn);
    if (!state.png) throw Error(ErrorCode::io, "png_create_write_struct failed");
    state.info = png_create_info_struct(state.png);
    if (setjmp(png_jmpbuf(state.png))) {
        throw Error(ErrorCode::io, fmt::format("png encode: {}", state.message));
    }
    png_set_write_fn(state.png, out.get(), png_vector_write, png_vector_flush);
    png_set_IHDR(state.png, state.info, static_cast<png_uint_32>(window.width()),
                 static_cast<png_uint_32>(window.height()), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(state.png, 3);
    png_write_info(state.png, state.info);
    for (std::int64_t y = 0; y < window.height(); ++y) {
        png_write_row(state.png, const_cast<png_bytep>(window.at(0, y)));
    }
    png_write_end(state.png, nullptr);
    return std::move(*out);
}

void write_png(const std::filesystem::path& path, const PixelWindow& window) {
    const auto bytes = encode_png(window);
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::io, fmt::format("cannot write {}", path.string()));
}

namespace {

class JpegRows final : public RowStream {
public:
    JpegRows(FilePtr file, const BBox& region, std::string what)
        : file_(std::move(file)), region_(region), what_(std::move(what)) {
        auto& cinfo_ = session_.cinfo;
        auto& err_ = session_.err;
        cinfo_.err = jpeg_std_error(&err_.pub);
        err_.pub.error_exit = jpeg_error_exit;
        err_.pub.emit_message = jpeg_silent;
        jpeg_create_decompress(&cinfo_);
        session_.created = true;
        if (setjmp(err_.jump)) fail();
        jpeg_stdio_src(&cinfo_, file_.get());
        jpeg_read_header(&cinfo_, TRUE);
        if (cinfo_.jpeg_color_space == JCS_CMYK || cinfo_.jpeg_color_space == JCS_YCCK) {
            throw Error(ErrorCode::unsupported_format, fmt::format("{}: CMYK jpeg", what_));
        }
        cinfo_.out_color_space = JCS_RGB;
        jpeg_start_decompress(&cinfo_);
        check_region(Dimensions{cinfo_.output_width, cinfo_.output_height}, region_, what_);
        row_.resize(static_cast<std::size_t>(cinfo_.output_width) * 3);
    }

    const BBox& region() const noexcept override { return region_; }

    void read(std::int64_t rows, std::uint8_t* out) override {
        const std::size_t stride = static_cast<std::size_t>(region_.width()) * 3;
        const std::int64_t target = region_.y0 + served_ + rows;
        JSAMPROW ptr[1] = {row_.data()};
        if (setjmp(session_.err.jump)) fail();
        while (next_ < target) {
            jpeg_read_scanlines(&session_.cinfo, ptr, 1);
            if (next_ >= region_.y0 + served_) {
                std::memcpy(out, row_.data() + region_.x0 * 3, stride);
                out += stride;
            }
            ++next_;
        }
        served_ += rows;
    }

private:
    [[noreturn]] void fail() {
        throw Error(ErrorCode::undecodable_image, fmt::format("{}: {}", what_, session_.err.message));
    }

    struct Session {
        JpegErr err{};
        jpeg_decompress_struct cinfo{};
        bool created = false;
        Session() = default;
        Session(const Session&) = delete;
        Session& operator=(const Session&) = delete;
        ~Session() {
            if (created) jpeg_destroy_decompress(&cinfo);
        }
    };

    FilePtr file_;
    BBox region_;
    std::string what_;
    Session session_;
    std::vector<JSAMPLE> row_;
    std::int64_t next_ = 0;
    std::int64_t served_ = 0;
};

} // namespace

std::unique_ptr<RowStream> jpeg_rows(const std::filesystem::path& path, const BBox& region) {
    return std::make_unique<JpegRows>(open_file(path), region, path.string());
}

PixelWindow read_jpeg_window(const std::filesystem::path& path, const BBox& region) {
    return drain(*jpeg_rows(path, region));
}

PixelWindow read_tiff_window(const std::filesystem::path& path, const BBox& region) {
    auto tif = open_tiff(path);
    const auto l = tiff_layout(tif.get(), path);
    check_region(Dimensions{l.width, l.height}, region, path);
    auto out = PixelWindow::blank(region.width(), region.height());
    out.origin = region;
    auto fail = [&] { return Error(ErrorCode::undecodable_image, fmt::format("{}: tiff decode failed", path.string())); };

    if (TIFFIsTiled(tif.get())) {
        std::uint32_t tw = 0, th = 0;
        TIFFGetField(tif.get(), TIFFTAG_TILEWIDTH, &tw);
        TIFFGetField(tif.get(), TIFFTAG_TILELENGTH, &th);
        std::vector<std::uint8_t> buf(static_cast<std::size_t>(TIFFTileSize(tif.get())));
        for (std::int64_t ty = region.y0 / th * th; ty < region.y1; ty += th) {
            for (std::int64_t tx = region.x0 / tw * tw; tx < region.x1; tx += tw) {
                const auto tile = TIFFComputeTile(tif.get(), static_cast<std::uint32_t>(tx),
                                                  static_cast<std::uint32_t>(ty), 0, 0);
                if (TIFFReadEncodedTile(tif.get(), tile, buf.data(), static_cast<tmsize_t>(buf.size())) < 0) {
                    throw fail();
                }
                const BBox tile_box{tx, ty, tx + tw, ty + th};
                const auto part = *tile_box.intersection(region);
                for (std::int64_t y = part.y0; y < part.y1; ++y) {
                    const auto* src = buf.data() + ((y - ty) * tw + (part.x0 - tx)) * l.samples;
                    copy_tiff_pixels(l, src, out.at(part.x0 - region.x0, y - region.y0), part.width());
                }
            }
        }
    } else {
        std::uint32_t rows_per_strip = l.height;
        TIFFGetFieldDefaulted(tif.get(), TIFFTAG_ROWSPERSTRIP, &rows_per_strip);
        rows_per_strip = std::min(rows_per_strip, l.height);
        std::vector<std::uint8_t> buf(static_cast<std::size_t>(TIFFStripSize(tif.get())));
        for (std::int64_t sy = region.y0 / rows_per_strip * rows_per_strip; sy < region.y1; sy += rows_per_strip) {
            const auto strip = TIFFComputeStrip(tif.get(), static_cast<std::uint32_t>(sy), 0);
            if (TIFFReadEncodedStrip(tif.get(), strip, buf.data(), static_cast<tmsize_t>(buf.size())) < 0) {
                throw fail();
            }
            const std::int64_t y_end = std::min<std::int64_t>(sy + rows_per_strip, region.y1);
            for (std::int64_t y = std::max(sy, region.y0); y < y_end; ++y) {
                const auto* src = buf.data() + ((y - sy) * std::int64_t{l.width} + region.x0) * l.samples;
                copy_tiff_pixels(l, src, out.at(0, y - region.y0), region.width());
            }
        }
    }
    return out;
}

} // namespace urba::codecs
