#include "avqoe/frame.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>

#include "avqoe/error.hpp"

namespace avqoe {

namespace fs = std::filesystem;

Frame::Frame(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {
    if (w <= 0 || h <= 0 || (c != 1 && c != 3)) {
        throw Error(ErrorCode::DimensionMismatch, "frame must have positive size and 1 or 3 channels");
    }
}

Frame::Frame(int w, int h, int c, std::vector<std::uint8_t> data) : width(w), height(h), channels(c), pixels(std::move(data)) {
    if (w <= 0 || h <= 0 || (c != 1 && c != 3)) {
        throw Error(ErrorCode::DimensionMismatch, "frame must have positive size and 1 or 3 channels");
    }
    if (pixels.size() != static_cast<std::size_t>(w) * h * c) {
        throw Error(ErrorCode::DimensionMismatch, "pixel buffer length does not match frame dimensions");
    }
}

std::vector<double> Frame::luma() const {
    const std::size_t n = static_cast<std::size_t>(width) * height;
    std::vector<double> out(n);
    if (channels == 1) {
        std::copy(pixels.begin(), pixels.end(), out.begin());
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = 0.299 * pixels[3 * i] + 0.587 * pixels[3 * i + 1] + 0.114 * pixels[3 * i + 2];
    }
    return out;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    return f;
}

}  // namespace

Frame read_png(const fs::path& path) {
    auto file = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (info == nullptr) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error(ErrorCode::Io, "libpng initialisation failed");
    }
    std::vector<png_bytep> row_ptrs;
    Frame frame;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::Io, "corrupt PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);

    const auto color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) {
        png_set_strip_16(png);
    }
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if ((color & PNG_COLOR_MASK_ALPHA) != 0 || png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int c = png_get_channels(png, info);
    frame = Frame(w, h, c);
    row_ptrs.resize(h);
    for (int y = 0; y < h; ++y) {
        row_ptrs[y] = frame.pixels.data() + static_cast<std::size_t>(y) * w * c;
    }
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return frame;
}

void write_png(const fs::path& path, const Frame& frame) {
    auto file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (info == nullptr) {
        png_destroy_write_struct(&png, nullptr);
        throw Error(ErrorCode::Io, "libpng initialisation failed");
    }
    std::vector<png_const_bytep> rows(frame.height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::Io, "failed writing " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, frame.width, frame.height, 8, frame.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < frame.height; ++y) {
        rows[y] = frame.pixels.data() + static_cast<std::size_t>(y) * frame.width * frame.channels;
    }
    png_write_rows(png, const_cast<png_bytepp>(rows.data()), frame.height);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Frame read_raw_planar(const fs::path& path, int width, int height, int channels) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    const std::size_t plane = static_cast<std::size_t>(width) * height;
    std::vector<std::uint8_t> planar(plane * channels);
    in.read(reinterpret_cast<char*>(planar.data()), static_cast<std::streamsize>(planar.size()));
    if (static_cast<std::size_t>(in.gcount()) != planar.size()) {
        throw Error(ErrorCode::DimensionMismatch, path.string() + " is shorter than " + std::to_string(width) + "x" +
                                                      std::to_string(height) + "x" + std::to_string(channels));
    }
    Frame f(width, height, channels);
    for (std::size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < channels; ++c) {
            f.pixels[i * channels + c] = planar[c * plane + i];
        }
    }
    return f;
}

std::vector<fs::path> list_frames(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw Error(ErrorCode::Io, dir.string() + " is not a directory");
    }
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace avqoe
