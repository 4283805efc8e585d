// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "urba/image_store.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace urba::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "urba");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Deterministic noisy RGB content so window reads exercise every byte.
PixelWindow noise_window(std::int64_t width, std::int64_t height, std::uint64_t seed);

/// Baseline JPEG at the given quality.
void write_jpeg(const std::filesystem::path& path, const PixelWindow& window, int quality = 95);

/// RGB TIFF. tile > 0 writes tiles of that edge, otherwise strips of `rows_per_strip`.
void write_tiff(const std::filesystem::path& path, const PixelWindow& window, int tile = 0,
                int rows_per_strip = 16);

/// A loopback TCP port that was free a moment ago.
int free_port();

} // namespace urba::testing
