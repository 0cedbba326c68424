#pragma once

#include <cstdint>
#include <vector>

namespace defocus {

// 16-bit grayscale raster, row-major.
struct Image16 {
    int width = 0;
    int height = 0;
    std::vector<uint16_t> data;

    Image16() = default;
    Image16(int w, int h, uint16_t fill = 0)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    uint16_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    uint16_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return data.size(); }
    bool same_dims(const Image16& o) const { return width == o.width && height == o.height; }
};

// Non-negative real-valued raster (photon rates), row-major.
struct RealImage {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    RealImage() = default;
    RealImage(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return data.size(); }
    bool same_dims(const RealImage& o) const { return width == o.width && height == o.height; }
};

RealImage to_real(const Image16& img);

// Round and clamp to [0, 65535].
Image16 to_image16(const RealImage& img);

double image_sum(const RealImage& img);
double image_mean(const Image16& img);
double image_stddev(const Image16& img);

// Copy the size x size region with top-left corner (ox, oy).
Image16 crop(const Image16& img, int ox, int oy, int size);
RealImage crop(const RealImage& img, int ox, int oy, int w, int h);

}  // namespace defocus
