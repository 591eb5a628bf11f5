#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ffkit/tensor.hpp"

namespace ffkit {

// 8-bit RGB image, row-major, 3 bytes per pixel.
struct Image {
    int width = 0, height = 0;
    std::vector<uint8_t> rgb;

    static Image filled(int w, int h, uint8_t r, uint8_t g, uint8_t b);
    uint8_t* px(int x, int y) { return rgb.data() + 3 * (std::size_t(y) * width + x); }
    const uint8_t* px(int x, int y) const {
        return rgb.data() + 3 * (std::size_t(y) * width + x);
    }
    bool empty() const { return width == 0 || height == 0; }
};

// binary PPM (P6, maxval 255)
Image read_ppm(const std::string& path);
void write_ppm(const Image& img, const std::string& path);

// Square crop centered at (cx, cy) with the given side, zero padded outside
// the image, bilinearly resized to out_size x out_size. Returns a 3 x S x S
// f32 tensor with values in [0, 1].
Tensor crop_resize_chw(const Image& img, double cx, double cy, double side, int out_size);

}  // namespace ffkit
