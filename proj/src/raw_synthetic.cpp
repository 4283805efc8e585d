// SPDX-License-Identifier: Apache-2.0
#include "urba/raw_synthetic.hpp"

#include "urba/error.hpp"
#include "urba/image_store.hpp"
#include "urba/markers.hpp"

#include <fmt/format.h>

#include <cstring>
#include <fstream>

namespace urba {
namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
    return v;
}

constexpr std::int64_t kMaxDim = 0xFFFFFFFFLL;
constexpr std::uint32_t kMaxPlants = 1u << 20;

} // namespace

void write_raw_synthetic(const std::filesystem::path& path, std::int64_t width, std::int64_t height,
                         const SyntheticSpec& spec) {
    if (width < 1 || height < 1 || width > kMaxDim || height > kMaxDim) {
        throw Error(ErrorCode::invalid_argument, fmt::format("bad synthetic size {}x{}", width, height));
    }
    if (spec.formula != kFormulaGradient && spec.formula != kFormulaGradientMarkers) {
        throw Error(ErrorCode::invalid_argument, fmt::format("unknown formula id {}", spec.formula));
    }
    std::vector<std::uint8_t> bytes{'U', 'R', 'S', 'Y'};
    put_le<std::uint32_t>(bytes, spec.version);
    put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(width));
    put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(height));
    put_le<std::uint32_t>(bytes, spec.formula);
    put_le<std::uint64_t>(bytes, spec.seed);
    put_le<std::uint32_t>(bytes, 0);
    if (spec.formula == kFormulaGradientMarkers) {
        put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(spec.plants.size()));
        for (const auto& p : spec.plants) {
            marker_color(p.id);
            if (!BBox{0, 0, width, height}.contains(p.bbox)) {
                throw Error(ErrorCode::invalid_argument,
                            fmt::format("plant {} bbox {} outside image", p.id, p.bbox.to_string()));
            }
            put_le<std::uint32_t>(bytes, p.id);
            for (auto v : {p.bbox.x0, p.bbox.y0, p.bbox.x1, p.bbox.y1}) {
                put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(v));
            }
        }
    }
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::io, fmt::format("cannot write {}", path.string()));
}

RawSyntheticFile read_raw_synthetic(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, fmt::format("cannot open {}", path.string()));
    auto corrupt = [&](const std::string& why) {
        return Error(ErrorCode::corrupt_header, fmt::format("{}: {}", path.string(), why));
    };
    std::uint8_t head[kRawSyntheticHeaderSize];
    in.read(reinterpret_cast<char*>(head), sizeof head);
    if (in.gcount() != static_cast<std::streamsize>(sizeof head) || std::memcmp(head, "URSY", 4) != 0) {
        throw corrupt("bad raw-synthetic magic");
    }
    RawSyntheticFile f;
    f.spec.version = get_le<std::uint32_t>(head + 4);
    f.width = get_le<std::uint32_t>(head + 8);
    f.height = get_le<std::uint32_t>(head + 12);
    f.spec.formula = get_le<std::uint32_t>(head + 16);
    f.spec.seed = get_le<std::uint64_t>(head + 20);
    if (f.spec.version != kRawSyntheticVersion) throw corrupt(fmt::format("unsupported version {}", f.spec.version));
    if (f.width == 0 || f.height == 0) throw corrupt("zero dimension");
    if (f.spec.formula == kFormulaGradientMarkers) {
        std::uint8_t buf[20];
        in.read(reinterpret_cast<char*>(buf), 4);
        if (in.gcount() != 4) throw corrupt("missing plant table");
        const auto count = get_le<std::uint32_t>(buf);
        if (count > kMaxPlants) throw corrupt("plant table too large");
        const BBox bounds{0, 0, f.width, f.height};
        f.spec.plants.reserve(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            in.read(reinterpret_cast<char*>(buf), 20);
            if (in.gcount() != 20) throw corrupt("truncated plant table");
            MarkerPlant p;
            p.id = get_le<std::uint32_t>(buf);
            p.bbox = BBox{get_le<std::uint32_t>(buf + 4), get_le<std::uint32_t>(buf + 8),
                          get_le<std::uint32_t>(buf + 12), get_le<std::uint32_t>(buf + 16)};
            if (p.id < kMinMarkerId || p.id > kMaxMarkerId || p.bbox.x1 <= p.bbox.x0 ||
                p.bbox.y1 <= p.bbox.y0 || !bounds.contains(p.bbox)) {
                throw corrupt(fmt::format("invalid plant record {}", i));
            }
            f.spec.plants.push_back(p);
        }
    } else if (f.spec.formula != kFormulaGradient) {
        throw corrupt(fmt::format("unknown formula id {}", f.spec.formula));
    }
    return f;
}

PixelWindow render_synthetic(const SyntheticSpec& spec, const BBox& region) {
    auto out = PixelWindow::blank(region.width(), region.height());
    out.origin = region;
    for (std::int64_t y = region.y0; y < region.y1; ++y) {
        std::uint8_t* p = out.at(0, y - region.y0);
        const auto g = static_cast<std::uint8_t>((y * 13) & 0xFF);
        for (std::int64_t x = region.x0; x < region.x1; ++x, p += 3) {
            p[0] = static_cast<std::uint8_t>((x * 7) & 0xFF);
            p[1] = g;
            p[2] = static_cast<std::uint8_t>(((x + y) * 3) & 0xFF);
        }
    }
    for (const auto& plant : spec.plants) {
        if (plant.bbox.intersects(region)) {
            paint_marker(out, plant.bbox.translated(-region.x0, -region.y0), plant.id);
        }
    }
    return out;
}

} // namespace urba
