#include "isosplat/loss.hpp"

#include "isosplat/reconstruct.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>
#include <vector>

namespace isosplat {
namespace {

constexpr int kWindow = 11;
constexpr int kHalf = kWindow / 2;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWindow>& window_taps() {
    static const std::array<double, kWindow> taps = [] {
        std::array<double, kWindow> t{};
        double sum = 0.0;
        for (int i = 0; i < kWindow; ++i) {
            const double d = i - kHalf;
            t[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
            sum += t[i];
        }
        for (double& v : t) v /= sum;
        return t;
    }();
    return taps;
}

using Plane = std::vector<double>;  // width*height doubles, row major

Plane extract_plane(const ImageGrid& img, int c) {
    Plane p(static_cast<std::size_t>(img.width) * img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) p[static_cast<std::size_t>(y) * img.width + x] = img.at(x, y, c);
    }
    return p;
}

// Separable correlation with the (symmetric) window, zero padded. Only the
// valid interior is ever consumed.
Plane filter(const Plane& in, int width, int height) {
    const auto& w = window_taps();
    Plane tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < height; ++y) {
        const double* row = &in[static_cast<std::size_t>(y) * width];
        double* trow = &tmp[static_cast<std::size_t>(y) * width];
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            const int d0 = std::max(-kHalf, -x), d1 = std::min(kHalf, width - 1 - x);
            for (int d = d0; d <= d1; ++d) acc += w[d + kHalf] * row[x + d];
            trow[x] = acc;
        }
    }
    for (int y = 0; y < height; ++y) {
        const int d0 = std::max(-kHalf, -y), d1 = std::min(kHalf, height - 1 - y);
        double* orow = &out[static_cast<std::size_t>(y) * width];
        for (int d = d0; d <= d1; ++d) {
            const double wd = w[d + kHalf];
            const double* trow = &tmp[static_cast<std::size_t>(y + d) * width];
            for (int x = 0; x < width; ++x) orow[x] += wd * trow[x];
        }
    }
    return out;
}

Plane multiply(const Plane& a, const Plane& b) {
    Plane out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

struct SsimTerms {
    // local statistics, defined on the full grid but valid only in the
    // interior [kHalf, dim-1-kHalf]
    Plane m1, m2, t2, t12, s11, s22, s12;
};

SsimTerms ssim_terms(const Plane& a, const Plane& b, int width, int height) {
    SsimTerms t;
    t.m1 = filter(a, width, height);
    t.m2 = filter(b, width, height);
    Plane t1 = filter(multiply(a, a), width, height);
    t.t2 = filter(multiply(b, b), width, height);
    t.t12 = filter(multiply(a, b), width, height);
    t.s11.resize(a.size());
    t.s22.resize(a.size());
    t.s12.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        t.s11[i] = t1[i] - t.m1[i] * t.m1[i];
        t.s22[i] = t.t2[i] - t.m2[i] * t.m2[i];
        t.s12[i] = t.t12[i] - t.m1[i] * t.m2[i];
    }
    return t;
}

void require_window_fits(const ImageGrid& a) {
    if (a.width < kWindow || a.height < kWindow) {
        throw std::domain_error("ssim: image smaller than the 11x11 window");
    }
}

}  // namespace

double l1_term(const ImageGrid& f, const ImageGrid& fhat) {
    require_same_shape(f, fhat, "l1_term");
    double acc = 0.0;
    for (std::size_t i = 0; i < f.data.size(); ++i) acc += std::abs(f.data[i] - fhat.data[i]);
    return acc / static_cast<double>(f.data.size());
}

double ssim(const ImageGrid& a, const ImageGrid& b) {
    require_same_shape(a, b, "ssim");
    require_window_fits(a);
    const int w = a.width, h = a.height;
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        const Plane pa = extract_plane(a, c), pb = extract_plane(b, c);
        const SsimTerms t = ssim_terms(pa, pb, w, h);
        double acc = 0.0;
        for (int y = kHalf; y < h - kHalf; ++y) {
            for (int x = kHalf; x < w - kHalf; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                const double nl = 2.0 * t.m1[i] * t.m2[i] + kC1;
                const double dl = t.m1[i] * t.m1[i] + t.m2[i] * t.m2[i] + kC1;
                const double nc = 2.0 * t.s12[i] + kC2;
                const double dc = t.s11[i] + t.s22[i] + kC2;
                acc += (nl * nc) / (dl * dc);
            }
        }
        total += acc / (static_cast<double>(w - 2 * kHalf) * (h - 2 * kHalf));
    }
    return total / a.channels;
}

ImageGrid ssim_gradient_wrt_second(const ImageGrid& a, const ImageGrid& b) {
    require_same_shape(a, b, "ssim_gradient");
    require_window_fits(a);
    const int w = a.width, h = a.height;
    const double norm =
        1.0 / (static_cast<double>(w - 2 * kHalf) * (h - 2 * kHalf) * a.channels);
    ImageGrid grad(w, h, a.channels, 0.0);
    for (int c = 0; c < a.channels; ++c) {
        const Plane pa = extract_plane(a, c), pb = extract_plane(b, c);
        const SsimTerms t = ssim_terms(pa, pb, w, h);
        // Per valid window: S = (nl*nc)/(dl*dc) as a function of
        // (m2, t2, t12) with s22 = t2 - m2^2 and s12 = t12 - m1*m2.
        Plane g_m2(pa.size(), 0.0), g_t2(pa.size(), 0.0), g_t12(pa.size(), 0.0);
        for (int y = kHalf; y < h - kHalf; ++y) {
            for (int x = kHalf; x < w - kHalf; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                const double m1 = t.m1[i], m2 = t.m2[i];
                const double nl = 2.0 * m1 * m2 + kC1;
                const double dl = m1 * m1 + m2 * m2 + kC1;
                const double nc = 2.0 * t.s12[i] + kC2;
                const double dc = t.s11[i] + t.s22[i] + kC2;
                const double lum = nl / dl, cs = nc / dc;
                const double d_s22 = -lum * nc / (dc * dc);        // dS/d(sigma2^2)
                const double d_s12 = lum * 2.0 / dc;               // dS/d(sigma12)
                const double d_lum_m2 = (2.0 * m1 * dl - nl * 2.0 * m2) / (dl * dl);
                g_m2[i] = cs * d_lum_m2 + d_s22 * (-2.0 * m2) + d_s12 * (-m1);
                g_t2[i] = d_s22;
                g_t12[i] = d_s12;
            }
        }
        const Plane f1 = filter(g_m2, w, h), f2 = filter(g_t2, w, h), f3 = filter(g_t12, w, h);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                grad.at(x, y, c) = norm * (f1[i] + 2.0 * pb[i] * f2[i] + pa[i] * f3[i]);
            }
        }
    }
    return grad;
}

double loss(const ImageGrid& f, const ImageGrid& fhat, double lambda) {
    require_same_shape(f, fhat, "loss");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::domain_error("loss: lambda must be in [0,1]");
    const double l1 = l1_term(f, fhat);
    if (lambda == 0.0) return l1;
    return (1.0 - lambda) * l1 + lambda * (1.0 - ssim(f, fhat));
}

double psnr(const ImageGrid& f, const ImageGrid& fhat) {
    const double m = mse(f, fhat);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

namespace {

// d(loss)/d(fhat), shared by both particle kinds.
ImageGrid loss_pixel_gradient(const ImageGrid& f, const ImageGrid& fhat, double lambda) {
    ImageGrid g(f.width, f.height, f.channels, 0.0);
    const double w1 = (1.0 - lambda) / static_cast<double>(f.data.size());
    for (std::size_t i = 0; i < f.data.size(); ++i) {
        const double r = fhat.data[i] - f.data[i];
        g.data[i] = r > 0.0 ? w1 : (r < 0.0 ? -w1 : 0.0);
    }
    if (lambda != 0.0) {
        const ImageGrid sg = ssim_gradient_wrt_second(f, fhat);
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] -= lambda * sg.data[i];
    }
    return g;
}

template <class P, class G, class Accumulate>
std::vector<G> backward(std::span<const P> particles, const ImageGrid& f, const ImageGrid& fhat,
                        const FitConfig& config, const Accumulate& accumulate) {
    require_same_shape(f, fhat, "loss_gradients");
    const ImageGrid dldf = loss_pixel_gradient(f, fhat, config.lambda);
    std::vector<G> grads(particles.size());
    const int threads = std::clamp(config.threads, 1, static_cast<int>(particles.size()) + 1);
    auto run_range = [&](std::size_t k0, std::size_t k1) {
        for (std::size_t k = k0; k < k1; ++k) accumulate(particles[k], dldf, grads[k]);
    };
    if (threads == 1 || particles.size() < 2) {
        run_range(0, particles.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t per = (particles.size() + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            const std::size_t k0 = t * per, k1 = std::min(particles.size(), k0 + per);
            if (k0 >= k1) break;
            pool.emplace_back(run_range, k0, k1);
        }
        for (auto& th : pool) th.join();
    }
    return grads;
}

struct Box {
    int x0, x1, y0, y1;
    bool empty;
};

Box clip_box(const Eigen::Vector2d& mu, double radius, int width, int height) {
    Box b{0, width - 1, 0, height - 1, false};
    if (std::isfinite(radius)) {
        b.x0 = std::max(0, static_cast<int>(std::floor(mu[0] - radius - 0.5)));
        b.x1 = std::min(width - 1, static_cast<int>(std::ceil(mu[0] + radius - 0.5)));
        b.y0 = std::max(0, static_cast<int>(std::floor(mu[1] - radius - 0.5)));
        b.y1 = std::min(height - 1, static_cast<int>(std::ceil(mu[1] + radius - 0.5)));
    }
    b.empty = b.x0 > b.x1 || b.y0 > b.y1;
    return b;
}

}  // namespace

std::vector<IsoParticleGrad> loss_gradients(std::span<const IsoParticle2D> particles,
                                            const ImageGrid& f, const ImageGrid& fhat,
                                            const FitConfig& config) {
    const double radius = config.support_radius;
    const double r2lim =
        std::isfinite(radius) ? radius * radius : std::numeric_limits<double>::infinity();
    auto accumulate = [&](const IsoParticle2D& p, const ImageGrid& dldf, IsoParticleGrad& out) {
        const Box b = clip_box(p.mu, radius, dldf.width, dldf.height);
        if (b.empty) return;
        const int channels = dldf.channels;
        const double s2 = p.sigma * p.sigma;
        const double inv_s2 = 1.0 / s2;
        const double inv_s3 = 1.0 / (s2 * p.sigma);
        double gx = 0.0, gy = 0.0, gs = 0.0;
        std::array<double, 3> ga{0.0, 0.0, 0.0};
        for (int y = b.y0; y <= b.y1; ++y) {
            const double dy = pixel_center(y) - p.mu[1];
            const double dy2 = dy * dy;
            const double* row =
                &dldf.data[(static_cast<std::size_t>(y) * dldf.width + b.x0) * channels];
            for (int x = b.x0; x <= b.x1; ++x, row += channels) {
                const double dx = pixel_center(x) - p.mu[0];
                const double r2 = dx * dx + dy2;
                if (!(r2 < r2lim)) continue;
                const double g = std::exp(-r2 * inv_s2);
                double wsum = 0.0;
                for (int c = 0; c < channels; ++c) {
                    ga[c] += row[c] * g;
                    wsum += row[c] * p.amplitude[c];
                }
                const double common = wsum * g;
                gx += common * 2.0 * dx * inv_s2;  // d g / d mu = 2 g (x - mu) / s2
                gy += common * 2.0 * dy * inv_s2;
                gs += common * 2.0 * r2 * inv_s3;
            }
        }
        out.d_mu = Eigen::Vector2d(gx, gy);
        out.d_sigma = gs;
        out.d_amplitude = ga;
    };
    return backward<IsoParticle2D, IsoParticleGrad>(particles, f, fhat, config, accumulate);
}

std::vector<AnisoParticleGrad> loss_gradients(std::span<const AnisoParticle2D> particles,
                                              const ImageGrid& f, const ImageGrid& fhat,
                                              const FitConfig& config) {
    const double radius = config.support_radius;
    const double r2lim =
        std::isfinite(radius) ? radius * radius : std::numeric_limits<double>::infinity();
    auto accumulate = [&](const AnisoParticle2D& p, const ImageGrid& dldf, AnisoParticleGrad& out) {
        const Box b = clip_box(p.mu, radius, dldf.width, dldf.height);
        if (b.empty) return;
        const int channels = dldf.channels;
        const double cth = std::cos(p.theta_rot), sth = std::sin(p.theta_rot);
        const double i1 = 1.0 / (p.s1 * p.s1), i2 = 1.0 / (p.s2 * p.s2);
        double gx = 0.0, gy = 0.0, gth = 0.0, gs1 = 0.0, gs2 = 0.0;
        std::array<double, 3> ga{0.0, 0.0, 0.0};
        for (int y = b.y0; y <= b.y1; ++y) {
            const double dy = pixel_center(y) - p.mu[1];
            const double dy2 = dy * dy;
            const double* row =
                &dldf.data[(static_cast<std::size_t>(y) * dldf.width + b.x0) * channels];
            for (int x = b.x0; x <= b.x1; ++x, row += channels) {
                const double dx = pixel_center(x) - p.mu[0];
                if (!(dx * dx + dy2 < r2lim)) continue;
                const double u1 = cth * dx + sth * dy;
                const double u2 = -sth * dx + cth * dy;
                const double q = u1 * u1 * i1 + u2 * u2 * i2;
                const double g = std::exp(-q);
                double wsum = 0.0;
                for (int c = 0; c < channels; ++c) {
                    ga[c] += row[c] * g;
                    wsum += row[c] * p.amplitude[c];
                }
                const double common = wsum * g;
                const double w1 = i1 * u1, w2 = i2 * u2;
                // d g / d mu = 2 g Sigma^-1 (x - mu)
                gx += common * 2.0 * (cth * w1 - sth * w2);
                gy += common * 2.0 * (sth * w1 + cth * w2);
                gth += common * (-2.0) * u1 * u2 * (i1 - i2);
                gs1 += common * 2.0 * u1 * u1 * i1 / p.s1;
                gs2 += common * 2.0 * u2 * u2 * i2 / p.s2;
            }
        }
        out.d_mu = Eigen::Vector2d(gx, gy);
        out.d_theta = gth;
        out.d_s1 = gs1;
        out.d_s2 = gs2;
        out.d_amplitude = ga;
    };
    return backward<AnisoParticle2D, AnisoParticleGrad>(particles, f, fhat, config, accumulate);
}

std::vector<IsoParticleGrad> loss_gradients(std::span<const IsoParticle2D> particles,
                                            const ImageGrid& f, const FitConfig& config) {
    const ImageGrid fhat =
        reconstruct(particles, f.width, f.height, f.channels, config.support_radius, config.threads);
    return loss_gradients(particles, f, fhat, config);
}

std::vector<AnisoParticleGrad> loss_gradients(std::span<const AnisoParticle2D> particles,
                                              const ImageGrid& f, const FitConfig& config) {
    const ImageGrid fhat =
        reconstruct(particles, f.width, f.height, f.channels, config.support_radius, config.threads);
    return loss_gradients(particles, f, fhat, config);
}

}  // namespace isosplat
