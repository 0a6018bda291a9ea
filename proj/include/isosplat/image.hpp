#pragma once

#include <cstddef>
#include <vector>

namespace isosplat {

/// Raster of intensities, row major, interleaved channels.
/// Target images live in [0,1]; reconstructions are kept unclamped and only
/// clamped at 8-bit export time.
struct ImageGrid {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> data;

    ImageGrid() = default;
    ImageGrid(int w, int h, int c, double fill = 0.0);

    double& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    std::size_t value_count() const { return data.size(); }
    bool same_shape(const ImageGrid& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

/// Pixel (ix, iy) is sampled at its center; the image spans [0,W]x[0,H].
inline double pixel_center(int i) { return i + 0.5; }

/// Throws std::domain_error when shapes differ.
void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* where);

/// Plain block average over factor x factor blocks. Dimensions must divide.
ImageGrid box_downscale(const ImageGrid& img, int factor);

double mse(const ImageGrid& a, const ImageGrid& b);

}  // namespace isosplat
