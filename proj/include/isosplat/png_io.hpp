#pragma once

#include <string>

#include "isosplat/image.hpp"

namespace isosplat {

/// 8-bit PNG -> intensities in [0,1]. Gray maps to 1 channel, RGB/RGBA and
/// palette images to 3 (alpha is dropped); 16-bit inputs are rescaled.
ImageGrid read_png(const std::string& path);

/// Clamp to [0,1], round half up to 8 bits, write gray or RGB.
void write_png(const std::string& path, const ImageGrid& img);

/// The exact 8-bit quantization used by write_png.
inline unsigned char quantize8(double v) {
    const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    const double scaled = c * 255.0 + 0.5;
    return static_cast<unsigned char>(scaled >= 255.0 ? 255 : static_cast<int>(scaled));
}

}  // namespace isosplat
