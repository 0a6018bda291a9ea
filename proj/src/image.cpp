#include "isosplat/image.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace isosplat {

ImageGrid::ImageGrid(int w, int h, int c, double fill)
    : width(w), height(h), channels(c) {
    if (w <= 0 || h <= 0 || (c != 1 && c != 3)) {
        throw std::domain_error("ImageGrid: width/height must be positive and channels 1 or 3");
    }
    data.assign(static_cast<std::size_t>(w) * h * c, fill);
}

void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* where) {
    if (!a.same_shape(b)) {
        throw std::domain_error(std::string(where) + ": image shapes differ (" +
                                std::to_string(a.width) + "x" + std::to_string(a.height) + "x" +
                                std::to_string(a.channels) + " vs " + std::to_string(b.width) +
                                "x" + std::to_string(b.height) + "x" + std::to_string(b.channels) +
                                ")");
    }
}

ImageGrid box_downscale(const ImageGrid& img, int factor) {
    if (factor < 1 || img.width % factor != 0 || img.height % factor != 0) {
        throw std::domain_error("box_downscale: factor must divide both dimensions");
    }
    if (factor == 1) return img;
    ImageGrid out(img.width / factor, img.height / factor, img.channels);
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int dy = 0; dy < factor; ++dy) {
                    for (int dx = 0; dx < factor; ++dx) {
                        acc += img.at(x * factor + dx, y * factor + dy, c);
                    }
                }
                out.at(x, y, c) = acc * inv;
            }
        }
    }
    return out;
}

double mse(const ImageGrid& a, const ImageGrid& b) {
    require_same_shape(a, b, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

}  // namespace isosplat
