#pragma once

// Small image utilities: PNG/PPM decode, center-crop, bilinear resize.
// Images are [3 x H x W] tensors with values in [0, 1].

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "stillbench/tensor.hpp"

namespace sb {

inline Tensor image_from_rgb8(const std::vector<std::uint8_t>& rgb, std::size_t h, std::size_t w) {
    if (rgb.size() != h * w * 3) throw std::invalid_argument("image_from_rgb8: size mismatch");
    Tensor img({3, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                img[(c * h + y) * w + x] = rgb[(y * w + x) * 3 + c] / 255.0;
    return img;
}

inline Tensor load_png(const std::string& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw std::runtime_error("load_png: cannot decode " + path + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&image);
        throw std::runtime_error("load_png: cannot read " + path + ": " + image.message);
    }
    return image_from_rgb8(buffer, image.height, image.width);
}

inline void save_png(const std::string& path, const Tensor& img) {
    if (img.rank() != 3 || img.dim(0) != 3)
        throw std::invalid_argument("save_png: need [3 x H x W], got " + shape_str(img.shape()));
    const std::size_t h = img.dim(1), w = img.dim(2);
    std::vector<std::uint8_t> buffer(h * w * 3);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = std::clamp(img[(c * h + y) * w + x], 0.0, 1.0);
                buffer[(y * w + x) * 3 + c] = static_cast<std::uint8_t>(v * 255.0 + 0.5);
            }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr))
        throw std::runtime_error("save_png: cannot write " + path + ": " + image.message);
}

// Binary PPM (P6), 8-bit
inline Tensor load_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_ppm: cannot open " + path);
    std::string magic;
    is >> magic;
    if (magic != "P6") throw std::runtime_error("load_ppm: " + path + " is not binary PPM");
    auto next_token = [&]() {
        std::string tok;
        for (;;) {
            is >> tok;
            if (!is) throw std::runtime_error("load_ppm: truncated header in " + path);
            if (tok[0] == '#') {
                std::string rest;
                std::getline(is, rest);
                continue;
            }
            return tok;
        }
    };
    const std::size_t w = std::stoul(next_token());
    const std::size_t h = std::stoul(next_token());
    const std::size_t maxval = std::stoul(next_token());
    if (maxval != 255) throw std::runtime_error("load_ppm: only 8-bit PPM supported: " + path);
    is.get();  // single whitespace after maxval
    std::vector<std::uint8_t> rgb(w * h * 3);
    is.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!is) throw std::runtime_error("load_ppm: truncated pixel data in " + path);
    return image_from_rgb8(rgb, h, w);
}

inline void save_ppm(const std::string& path, const Tensor& img) {
    if (img.rank() != 3 || img.dim(0) != 3)
        throw std::invalid_argument("save_ppm: need [3 x H x W], got " + shape_str(img.shape()));
    const std::size_t h = img.dim(1), w = img.dim(2);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_ppm: cannot open " + path);
    os << "P6\n" << w << " " << h << "\n255\n";
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = std::clamp(img[(c * h + y) * w + x], 0.0, 1.0);
                os.put(static_cast<char>(static_cast<std::uint8_t>(v * 255.0 + 0.5)));
            }
}

inline Tensor load_image(const std::string& path) {
    const std::string ext = std::filesystem::path(path).extension().string();
    if (ext == ".png" || ext == ".PNG") return load_png(path);
    if (ext == ".ppm" || ext == ".PPM") return load_ppm(path);
    throw std::runtime_error("load_image: unsupported extension on " + path);
}

inline Tensor center_crop(const Tensor& img, std::size_t target_h, std::size_t target_w) {
    const std::size_t h = img.dim(1), w = img.dim(2);
    // largest crop with the target aspect ratio
    std::size_t ch = h, cw = w;
    if (h * target_w > w * target_h)
        ch = std::max<std::size_t>(1, w * target_h / target_w);
    else
        cw = std::max<std::size_t>(1, h * target_w / target_h);
    const std::size_t y0 = (h - ch) / 2, x0 = (w - cw) / 2;
    if (ch == h && cw == w) return img;
    Tensor out({3, ch, cw});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < ch; ++y)
            for (std::size_t x = 0; x < cw; ++x)
                out[(c * ch + y) * cw + x] = img[(c * h + y0 + y) * w + x0 + x];
    return out;
}

// Bilinear resize with pixel-area alignment (sample at cell centers), so an
// exact 2x downscale averages each 2x2 block.
inline Tensor resize_bilinear(const Tensor& img, std::size_t target_h, std::size_t target_w) {
    const std::size_t h = img.dim(1), w = img.dim(2);
    if (h == target_h && w == target_w) return img;
    Tensor out({3, target_h, target_w});
    const double sy = static_cast<double>(h) / static_cast<double>(target_h);
    const double sx = static_cast<double>(w) / static_cast<double>(target_w);
    for (std::size_t y = 0; y < target_h; ++y) {
        const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        const double cy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        const std::size_t y0 = static_cast<std::size_t>(cy);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double wy = cy - static_cast<double>(y0);
        for (std::size_t x = 0; x < target_w; ++x) {
            const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            const double cx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            const std::size_t x0 = static_cast<std::size_t>(cx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double wx = cx - static_cast<double>(x0);
            for (std::size_t c = 0; c < 3; ++c) {
                const double v00 = img[(c * h + y0) * w + x0];
                const double v01 = img[(c * h + y0) * w + x1];
                const double v10 = img[(c * h + y1) * w + x0];
                const double v11 = img[(c * h + y1) * w + x1];
                out[(c * target_h + y) * target_w + x] =
                    (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
            }
        }
    }
    return out;
}

}  // namespace sb
