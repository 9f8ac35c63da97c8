#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pfad {

/// RGB image, row-major h*w*3, values in [0,1].
struct Image {
    int h = 0, w = 0;
    std::vector<float> rgb;

    static Image filled(int h, int w, float r, float g, float b) {
        Image im;
        im.h = h;
        im.w = w;
        im.rgb.resize(static_cast<size_t>(h) * w * 3);
        for (int i = 0; i < h * w; ++i) {
            im.rgb[static_cast<size_t>(i) * 3 + 0] = r;
            im.rgb[static_cast<size_t>(i) * 3 + 1] = g;
            im.rgb[static_cast<size_t>(i) * 3 + 2] = b;
        }
        return im;
    }

    float& at(int y, int x, int c) { return rgb[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    float at(int y, int x, int c) const { return rgb[(static_cast<size_t>(y) * w + x) * 3 + c]; }

    void validate() const {
        if (h < 8 || w < 8) throw std::invalid_argument("image dims must be >= 8");
        if (rgb.size() != static_cast<size_t>(h) * w * 3)
            throw std::invalid_argument("image buffer size mismatch");
        for (float v : rgb)
            if (!(v >= 0.0f && v <= 1.0f))
                throw std::invalid_argument("image values must lie in [0,1]");
    }
};

/// Single-channel mask/map, 8-bit semantics when on disk.
struct GrayImage {
    int h = 0, w = 0;
    std::vector<std::uint8_t> pix;

    std::uint8_t& at(int y, int x) { return pix[static_cast<size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return pix[static_cast<size_t>(y) * w + x]; }
};

// 8-bit binary PPM (P6) / PGM (P5).
void save_ppm(const std::string& path, const Image& img);
Image load_ppm(const std::string& path);
void save_pgm(const std::string& path, const GrayImage& img);
GrayImage load_pgm(const std::string& path);

/// Bilinear resize, align-corners-false; value range preserved.
Image resize_image(const Image& img, int h_out, int w_out);

}  // namespace pfad
