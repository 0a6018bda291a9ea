#pragma once

#include <span>
#include <vector>

#include "isosplat/image.hpp"
#include "isosplat/particles.hpp"

namespace isosplat {

/// Mean absolute difference over all pixel-channels.
double l1_term(const ImageGrid& f, const ImageGrid& fhat);

/// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), C1=(0.01)^2,
/// C2=(0.03)^2 on a unit dynamic range, valid window positions only,
/// per channel then averaged. Requires min(W,H) >= 11.
double ssim(const ImageGrid& a, const ImageGrid& b);

/// d(mean SSIM)/d(b), same shape as b.
ImageGrid ssim_gradient_wrt_second(const ImageGrid& a, const ImageGrid& b);

/// (1-lambda) * L1 + lambda * (1 - SSIM). The SSIM term is skipped entirely
/// when lambda == 0.
double loss(const ImageGrid& f, const ImageGrid& fhat, double lambda);

/// 10*log10(1/MSE) on a unit dynamic range; +inf when the images are equal.
double psnr(const ImageGrid& f, const ImageGrid& fhat);

struct IsoParticleGrad {
    Eigen::Vector2d d_mu{0.0, 0.0};
    double d_sigma = 0.0;
    std::array<double, 3> d_amplitude{0.0, 0.0, 0.0};
};

struct AnisoParticleGrad {
    Eigen::Vector2d d_mu{0.0, 0.0};
    double d_theta = 0.0;
    double d_s1 = 0.0;
    double d_s2 = 0.0;
    std::array<double, 3> d_amplitude{0.0, 0.0, 0.0};
};

/// Gradient of loss(f, reconstruct(particles), lambda) with respect to every
/// particle parameter. The L1 subgradient at zero residual is 0. The
/// variants taking fhat expect exactly reconstruct(particles, ...) and skip
/// the redundant forward pass.
std::vector<IsoParticleGrad> loss_gradients(std::span<const IsoParticle2D> particles,
                                            const ImageGrid& f, const FitConfig& config);
std::vector<AnisoParticleGrad> loss_gradients(std::span<const AnisoParticle2D> particles,
                                              const ImageGrid& f, const FitConfig& config);
std::vector<IsoParticleGrad> loss_gradients(std::span<const IsoParticle2D> particles,
                                            const ImageGrid& f, const ImageGrid& fhat,
                                            const FitConfig& config);
std::vector<AnisoParticleGrad> loss_gradients(std::span<const AnisoParticle2D> particles,
                                              const ImageGrid& f, const ImageGrid& fhat,
                                              const FitConfig& config);

}  // namespace isosplat
