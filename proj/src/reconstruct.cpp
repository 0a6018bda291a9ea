#include "isosplat/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>
#include <vector>

namespace isosplat {
namespace {

struct RowSpan {
    int x0, x1, y0, y1;  // inclusive pixel ranges
    bool empty;
};

RowSpan support_box(const Eigen::Vector2d& mu, double radius, int width, int height) {
    RowSpan s{0, width - 1, 0, height - 1, false};
    if (std::isfinite(radius)) {
        // pixel centers at i + 0.5
        s.x0 = std::max(0, static_cast<int>(std::floor(mu[0] - radius - 0.5)));
        s.x1 = std::min(width - 1, static_cast<int>(std::ceil(mu[0] + radius - 0.5)));
        s.y0 = std::max(0, static_cast<int>(std::floor(mu[1] - radius - 0.5)));
        s.y1 = std::min(height - 1, static_cast<int>(std::ceil(mu[1] + radius - 0.5)));
    }
    s.empty = s.x0 > s.x1 || s.y0 > s.y1;
    return s;
}

// Splats every particle (in index order) onto the rows [band_y0, band_y1).
// Shared by both kernel kinds via a per-particle evaluation callback that
// must reproduce the public eval_* arithmetic exactly.
template <class Particles, class EvalFactory>
void scatter_band(const Particles& particles, const EvalFactory& make_eval, ImageGrid& out,
                  double radius, int band_y0, int band_y1) {
    const int width = out.width, channels = out.channels;
    const double r2lim = std::isfinite(radius) ? radius * radius
                                               : std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < particles.size(); ++k) {
        const auto& p = particles[k];
        RowSpan box = support_box(p.mu, radius, width, out.height);
        if (box.empty) continue;
        const int y0 = std::max(box.y0, band_y0);
        const int y1 = std::min(box.y1, band_y1 - 1);
        auto eval = make_eval(p);
        for (int y = y0; y <= y1; ++y) {
            const double dy = p.mu[1] - pixel_center(y);
            const double dy2 = dy * dy;
            double* row = &out.data[(static_cast<std::size_t>(y) * width + box.x0) * channels];
            for (int x = box.x0; x <= box.x1; ++x, row += channels) {
                const double dx = p.mu[0] - pixel_center(x);
                if (!(dx * dx + dy2 < r2lim)) continue;
                const double g = eval(dx, dy, dy2);
                for (int c = 0; c < channels; ++c) row[c] += p.amplitude[c] * g;
            }
        }
    }
}

template <class Particles, class EvalFactory>
ImageGrid run(const Particles& particles, const EvalFactory& make_eval, int width, int height,
              int channels, double radius, int threads) {
    ImageGrid out(width, height, channels, 0.0);
    threads = std::clamp(threads, 1, height);
    if (threads == 1) {
        scatter_band(particles, make_eval, out, radius, 0, height);
        return out;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const int rows_per = (height + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const int y0 = t * rows_per;
        const int y1 = std::min(height, y0 + rows_per);
        if (y0 >= y1) break;
        pool.emplace_back([&, y0, y1] { scatter_band(particles, make_eval, out, radius, y0, y1); });
    }
    for (auto& th : pool) th.join();
    return out;
}

void check_inputs(int width, int height, int channels, double radius) {
    if (width <= 0 || height <= 0 || (channels != 1 && channels != 3)) {
        throw std::domain_error("reconstruct: bad grid shape");
    }
    if (!(radius > 0.0)) throw std::domain_error("reconstruct: support_radius must be > 0");
}

}  // namespace

ImageGrid reconstruct(std::span<const IsoParticle2D> particles, int width, int height,
                      int channels, double support_radius, int threads) {
    check_inputs(width, height, channels, support_radius);
    for (const auto& p : particles) validate_particle(p, channels);
    auto make_eval = [](const IsoParticle2D& p) {
        const double s2 = p.sigma * p.sigma;
        return [s2](double dx, double dy, double dy2) {
            (void)dy;
            return std::exp(-(dx * dx + dy2) / s2);
        };
    };
    return run(particles, make_eval, width, height, channels, support_radius, threads);
}

ImageGrid reconstruct(std::span<const AnisoParticle2D> particles, int width, int height,
                      int channels, double support_radius, int threads) {
    check_inputs(width, height, channels, support_radius);
    for (const auto& p : particles) validate_particle(p, channels);
    auto make_eval = [](const AnisoParticle2D& p) {
        const Eigen::Matrix2d m = detail::inverse_spd_2d(build_cov_2d(p.kernel()));
        return [m](double dx, double dy, double dy2) {
            (void)dy2;
            return std::exp(-detail::quadform2(m, -dx, -dy));
        };
    };
    return run(particles, make_eval, width, height, channels, support_radius, threads);
}

}  // namespace isosplat
