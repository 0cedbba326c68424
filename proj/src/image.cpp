#include "defocus/image.hpp"

#include <cmath>
#include <stdexcept>

namespace defocus {

RealImage to_real(const Image16& img) {
    RealImage out(img.width, img.height);
    for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i];
    return out;
}

Image16 to_image16(const RealImage& img) {
    Image16 out(img.width, img.height);
    for (size_t i = 0; i < img.data.size(); ++i) {
        double v = std::round(img.data[i]);
        if (v < 0.0) v = 0.0;
        if (v > 65535.0) v = 65535.0;
        out.data[i] = static_cast<uint16_t>(v);
    }
    return out;
}

double image_sum(const RealImage& img) {
    double s = 0.0;
    for (double v : img.data) s += v;
    return s;
}

double image_mean(const Image16& img) {
    if (img.data.empty()) return 0.0;
    double s = 0.0;
    for (uint16_t v : img.data) s += v;
    return s / static_cast<double>(img.data.size());
}

double image_stddev(const Image16& img) {
    if (img.data.empty()) return 0.0;
    const double mean = image_mean(img);
    double ss = 0.0;
    for (uint16_t v : img.data) {
        const double d = v - mean;
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(img.data.size()));
}

Image16 crop(const Image16& img, int ox, int oy, int size) {
    if (ox < 0 || oy < 0 || ox + size > img.width || oy + size > img.height)
        throw std::invalid_argument("crop region outside image bounds");
    Image16 out(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) out.at(x, y) = img.at(ox + x, oy + y);
    return out;
}

RealImage crop(const RealImage& img, int ox, int oy, int w, int h) {
    if (ox < 0 || oy < 0 || ox + w > img.width || oy + h > img.height)
        throw std::invalid_argument("crop region outside image bounds");
    RealImage out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(x, y) = img.at(ox + x, oy + y);
    return out;
}

}  // namespace defocus
