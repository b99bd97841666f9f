#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ctk/error.hpp"

namespace ctk {

/// 8-bit grayscale raster, row-major, 0 = black, 255 = white.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    GrayImage() = default;
    GrayImage(int w, int h, std::uint8_t fill = 0) : width(w), height(h) {
        if (w < 1 || h < 1) throw ParamError("image dimensions must be >= 1");
        data.assign(static_cast<std::size_t>(w) * h, fill);
    }
    GrayImage(int w, int h, std::vector<std::uint8_t> pixels) : width(w), height(h), data(std::move(pixels)) {
        if (w < 1 || h < 1) throw ParamError("image dimensions must be >= 1");
        if (data.size() != static_cast<std::size_t>(w) * h)
            throw ShapeError("gray pixel buffer does not match width*height");
    }

    std::size_t size() const noexcept { return data.size(); }
    std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Interleaved 8-bit R,G,B raster, row-major.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    RgbImage() = default;
    RgbImage(int w, int h, std::uint8_t fill = 0) : width(w), height(h) {
        if (w < 1 || h < 1) throw ParamError("image dimensions must be >= 1");
        data.assign(static_cast<std::size_t>(w) * h * 3, fill);
    }
    RgbImage(int w, int h, std::vector<std::uint8_t> pixels) : width(w), height(h), data(std::move(pixels)) {
        if (w < 1 || h < 1) throw ParamError("image dimensions must be >= 1");
        if (data.size() != static_cast<std::size_t>(w) * h * 3)
            throw ShapeError("rgb pixel buffer does not match 3*width*height");
    }

    std::uint8_t* px(int x, int y) { return &data[(static_cast<std::size_t>(y) * width + x) * 3]; }
    const std::uint8_t* px(int x, int y) const { return &data[(static_cast<std::size_t>(y) * width + x) * 3]; }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Foreground mask. Canonical polarity: true = ink (character pixels),
/// whatever the on-disk or source intensity convention was.
struct BinaryImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> ink;  // 0 or 1

    BinaryImage() = default;
    BinaryImage(int w, int h, bool fill = false) : width(w), height(h) {
        if (w < 1 || h < 1) throw ParamError("image dimensions must be >= 1");
        ink.assign(static_cast<std::size_t>(w) * h, fill ? 1 : 0);
    }

    bool at(int x, int y) const { return ink[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { ink[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

    std::size_t count() const noexcept {
        std::size_t n = 0;
        for (auto v : ink) n += v;
        return n;
    }

    friend bool operator==(const BinaryImage&, const BinaryImage&) = default;
};

inline BinaryImage complement(const BinaryImage& img) {
    BinaryImage out = img;
    for (auto& v : out.ink) v = v ? 0 : 1;
    return out;
}

/// Renders a mask as gray with ink = 255, background = 0.
inline GrayImage to_gray(const BinaryImage& img) {
    GrayImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.ink.size(); ++i) out.data[i] = img.ink[i] ? 255 : 0;
    return out;
}

inline RgbImage to_rgb(const GrayImage& img) {
    RgbImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[3 * i] = out.data[3 * i + 1] = out.data[3 * i + 2] = img.data[i];
    return out;
}

}  // namespace ctk
