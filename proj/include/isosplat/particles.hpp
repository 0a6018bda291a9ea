#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "isosplat/kernels.hpp"

namespace isosplat {

/// 2D particle with an isotropic Gaussian footprint and a per-channel
/// amplitude A_k (unbounded; clamped to [0,1] only at 8-bit export).
struct IsoParticle2D {
    Eigen::Vector2d mu{0.0, 0.0};  // pixels
    double sigma = 1.0;            // pixels, > 0
    std::array<double, 3> amplitude{0.0, 0.0, 0.0};

    static constexpr int geometric_dof = 3;  // mu:2 + sigma:1

    IsoKernelParams2 kernel() const { return {mu, sigma}; }
};

struct AnisoParticle2D {
    Eigen::Vector2d mu{0.0, 0.0};
    double theta_rot = 0.0;
    double s1 = 1.0;
    double s2 = 1.0;
    std::array<double, 3> amplitude{0.0, 0.0, 0.0};

    static constexpr int geometric_dof = 5;  // mu:2 + symmetric 2x2 covariance:3

    AnisoKernelParams2D kernel() const { return {mu, theta_rot, s1, s2}; }
};

inline void validate_particle(const IsoParticle2D& p, int channels) {
    validate(p.kernel());
    for (int c = 0; c < channels; ++c) {
        if (!std::isfinite(p.amplitude[c])) {
            throw std::domain_error("IsoParticle2D.amplitude: non-finite");
        }
    }
}

inline void validate_particle(const AnisoParticle2D& p, int channels) {
    validate(p.kernel());
    for (int c = 0; c < channels; ++c) {
        if (!std::isfinite(p.amplitude[c])) {
            throw std::domain_error("AnisoParticle2D.amplitude: non-finite");
        }
    }
}

/// Everything the fitting loop needs. Learning rates are per parameter
/// group; sigma and the aniso scales move in log space.
struct FitConfig {
    double support_radius = 30.0;  // D, pixels; may be +inf
    int particle_budget = 1000;    // K
    double lambda = 0.2;           // loss mix weight in [0,1]
    int epochs = 2000;
    double lr_mu = 1e-1;
    double lr_shape = 5e-3;
    double lr_amplitude = 1e-2;
    bool momentum = false;  // adds a 0.9 momentum term to every group
    bool adapt = false;     // adaptive particle control on/off
    int adapt_every = 100;  // epochs between control passes
    std::uint64_t rng_seed = 0;
    int threads = 1;

    void validate() const {
        if (!(support_radius > 0.0)) throw std::invalid_argument("support_radius: must be > 0");
        if (particle_budget < 1) throw std::invalid_argument("particle_budget: must be >= 1");
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda: must be in [0,1]");
        if (epochs < 0) throw std::invalid_argument("epochs: must be >= 0");
        if (!(lr_mu > 0.0)) throw std::invalid_argument("lr_mu: must be > 0");
        if (!(lr_shape > 0.0)) throw std::invalid_argument("lr_shape: must be > 0");
        if (!(lr_amplitude > 0.0)) throw std::invalid_argument("lr_amplitude: must be > 0");
        if (adapt_every < 1) throw std::invalid_argument("adapt_every: must be >= 1");
        if (threads < 1) throw std::invalid_argument("threads: must be >= 1");
    }
};

}  // namespace isosplat
