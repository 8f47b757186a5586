// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace ava::util {

// Interleaved RGB image, row-major, three channels.
template <class T>
struct Image {
    int width = 0;
    int height = 0;
    std::vector<T> rgb;  // height * width * 3

    Image() = default;
    Image(int w, int h, T fill = T(0)) : width(w), height(h), rgb(size_t(w) * h * 3, fill) {}

    T& at(int x, int y, int c) { return rgb[(size_t(y) * width + x) * 3 + c]; }
    const T& at(int x, int y, int c) const { return rgb[(size_t(y) * width + x) * 3 + c]; }
    size_t pixel_count() const { return size_t(width) * height; }
    bool same_shape(const Image& other) const {
        return width == other.width && height == other.height;
    }
};

using ImageU8 = Image<uint8_t>;
using ImageF = Image<float>;
using ImageD = Image<double>;

inline uint8_t quantize8(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<uint8_t>(std::lround(c * 255.0));
}

template <class T>
ImageU8 to_u8(const Image<T>& img) {
    ImageU8 out(img.width, img.height);
    for (size_t i = 0; i < img.rgb.size(); ++i) out.rgb[i] = quantize8(double(img.rgb[i]));
    return out;
}

template <class T>
Image<T> from_u8(const ImageU8& img) {
    Image<T> out(img.width, img.height);
    for (size_t i = 0; i < img.rgb.size(); ++i) out.rgb[i] = T(img.rgb[i] / 255.0);
    return out;
}

// PNG I/O (8-bit RGB). Throws IoError on filesystem problems, FormatError on bad data.
void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);

}  // namespace ava::util
