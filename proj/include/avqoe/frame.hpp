#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace avqoe {

/// 8-bit image, 1 (gray) or 3 (RGB) interleaved channels, row-major.
struct Frame {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;

    Frame() = default;
    Frame(int w, int h, int c, std::uint8_t fill = 0);
    Frame(int w, int h, int c, std::vector<std::uint8_t> data);

    std::uint8_t at(int x, int y, int c = 0) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t& at(int x, int y, int c = 0) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

    bool same_shape(const Frame& o) const { return width == o.width && height == o.height && channels == o.channels; }

    /// BT.601 luma as doubles; the plain intensity for gray frames.
    std::vector<double> luma() const;

    bool operator==(const Frame&) const = default;
};

Frame read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Frame& frame);

/// Planar raw dump: all of channel 0, then channel 1, ...
Frame read_raw_planar(const std::filesystem::path& path, int width, int height, int channels);

/// Sorted *.png files of a directory.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

}  // namespace avqoe
