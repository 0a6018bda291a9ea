#pragma once

#include <span>

#include "isosplat/image.hpp"
#include "isosplat/particles.hpp"

namespace isosplat {

/// Sum of A_k * g(x; particle_k) over particles whose center lies strictly
/// within support_radius of the pixel sample point. Pixels outside every
/// support are exactly 0. Accumulation order per pixel is ascending particle
/// index, so the result is bit-identical to the naive pixels x particles
/// double loop for any thread count.
ImageGrid reconstruct(std::span<const IsoParticle2D> particles, int width, int height,
                      int channels, double support_radius, int threads = 1);
ImageGrid reconstruct(std::span<const AnisoParticle2D> particles, int width, int height,
                      int channels, double support_radius, int threads = 1);

}  // namespace isosplat
