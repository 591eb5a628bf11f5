#include "ffkit/image.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

#include "ffkit/binio.hpp"
#include "ffkit/errors.hpp"

namespace ffkit {

Image Image::filled(int w, int h, uint8_t r, uint8_t g, uint8_t b) {
    Image img;
    img.width = w;
    img.height = h;
    img.rgb.resize(std::size_t(w) * h * 3);
    for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
        img.rgb[i] = r;
        img.rgb[i + 1] = g;
        img.rgb[i + 2] = b;
    }
    return img;
}

namespace {

int read_ppm_token(ByteReader& r) {
    // skips whitespace and '#' comments
    int c;
    for (;;) {
        c = r.u8();
        if (c == '#') {
            while (r.u8() != '\n') {
            }
        } else if (!std::isspace(c)) {
            break;
        }
    }
    int value = 0;
    while (std::isdigit(c)) {
        value = value * 10 + (c - '0');
        if (r.remaining() == 0) return value;
        c = r.u8();
    }
    return value;
}

}  // namespace

Image read_ppm(const std::string& path) {
    auto bytes = read_file_bytes(path);
    ByteReader r(bytes);
    char m0 = char(r.u8()), m1 = char(r.u8());
    if (m0 != 'P' || m1 != '6') throw IoError("not a P6 PPM file: " + path);
    Image img;
    img.width = read_ppm_token(r);
    img.height = read_ppm_token(r);
    const int maxval = read_ppm_token(r);
    if (img.width <= 0 || img.height <= 0 || maxval != 255)
        throw IoError("unsupported PPM header in " + path);
    img.rgb.resize(std::size_t(img.width) * img.height * 3);
    r.raw(img.rgb.data(), img.rgb.size());
    return img;
}

void write_ppm(const Image& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.rgb.data()), std::streamsize(img.rgb.size()));
    if (!f) throw IoError("short write on " + path);
}

Tensor crop_resize_chw(const Image& img, double cx, double cy, double side, int out_size) {
    Tensor out({3, out_size, out_size}, Dtype::f32);
    float* po = out.data<float>();
    const double x0 = cx - 0.5 * side;
    const double y0 = cy - 0.5 * side;
    const double step = side / out_size;
    auto sample = [&](double x, double y, int c) -> double {
        // bilinear in pixel-center coordinates, zero outside the image
        const double fx = x - 0.5, fy = y - 0.5;
        const int ix = int(std::floor(fx)), iy = int(std::floor(fy));
        const double ax = fx - ix, ay = fy - iy;
        double acc = 0.0;
        for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
                const int xx = ix + dx, yy = iy + dy;
                if (xx < 0 || xx >= img.width || yy < 0 || yy >= img.height) continue;
                const double wgt = (dx ? ax : 1.0 - ax) * (dy ? ay : 1.0 - ay);
                acc += wgt * img.px(xx, yy)[c];
            }
        }
        return acc / 255.0;
    };
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < out_size; ++i) {
            const double sy = y0 + (i + 0.5) * step;
            for (int j = 0; j < out_size; ++j) {
                const double sx = x0 + (j + 0.5) * step;
                po[(std::size_t(c) * out_size + i) * out_size + j] = float(sample(sx, sy, c));
            }
        }
    }
    return out;
}

}  // namespace ffkit
