#include "isosplat/splat3d.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace isosplat {

void IsoSplat3D::validate() const {
    detail::require_finite<3>(mu, "IsoSplat3D.mu");
    detail::require_positive(sigma, "IsoSplat3D.sigma");
    if (!color.allFinite()) throw std::domain_error("IsoSplat3D.color: non-finite");
    if (!(opacity >= 0.0 && opacity <= 1.0)) {
        throw std::domain_error("IsoSplat3D.opacity: must be in [0,1]");
    }
}

void AnisoSplat3D::validate() const {
    isosplat::validate(kernel());
    if (!color.allFinite()) throw std::domain_error("AnisoSplat3D.color: non-finite");
    if (!(opacity >= 0.0 && opacity <= 1.0)) {
        throw std::domain_error("AnisoSplat3D.opacity: must be in [0,1]");
    }
}

void Camera::validate() const {
    if (!rotation.allFinite() || !translation.allFinite()) {
        throw std::domain_error("Camera: non-finite transform");
    }
    if ((rotation * rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() >
        1e-9) {
        throw std::domain_error("Camera.rotation: not orthonormal within 1e-9");
    }
    if (!(focal > 0.0)) throw std::domain_error("Camera.focal: must be > 0");
    if (width <= 0 || height <= 0) throw std::domain_error("Camera: bad image size");
}

std::optional<Eigen::Matrix<double, 2, 3>> projection_jacobian(const Eigen::Vector3d& mu_cam,
                                                               double focal) {
    const double z = mu_cam[2];
    if (!(z > kNearPlane)) return std::nullopt;
    Eigen::Matrix<double, 2, 3> j;
    j << focal / z, 0.0, -focal * mu_cam[0] / (z * z),
         0.0, focal / z, -focal * mu_cam[1] / (z * z);
    return j;
}

Eigen::Matrix2d project_cov(const Eigen::Matrix3d& sigma, const Eigen::Matrix3d& view_rotation,
                            const Eigen::Matrix<double, 2, 3>& jacobian) {
    Eigen::Matrix2d out =
        jacobian * view_rotation * sigma * view_rotation.transpose() * jacobian.transpose();
    const double off = 0.5 * (out(0, 1) + out(1, 0));
    out(0, 1) = off;
    out(1, 0) = off;
    return out;
}

std::optional<ProjectedIso> project_iso(const IsoSplat3D& splat, const Camera& camera) {
    splat.validate();
    const Eigen::Vector3d cam = camera.to_camera(splat.mu);
    if (!(cam[2] > kNearPlane)) return std::nullopt;
    return ProjectedIso{camera.project_point(cam), splat.sigma * camera.focal / cam[2], cam[2]};
}

std::optional<ProjectedAniso> project_aniso(const AnisoSplat3D& splat, const Camera& camera) {
    splat.validate();
    const Eigen::Vector3d cam = camera.to_camera(splat.mu);
    const auto jac = projection_jacobian(cam, camera.focal);
    if (!jac) return std::nullopt;
    return ProjectedAniso{camera.project_point(cam),
                          project_cov(build_cov_3d(splat.kernel()), camera.rotation, *jac),
                          cam[2]};
}

Eigen::Vector3d composite(std::span<const std::pair<Eigen::Vector3d, double>> front_to_back) {
    Eigen::Vector3d color{0.0, 0.0, 0.0};
    double transmittance = 1.0;
    for (const auto& [c, alpha] : front_to_back) {
        if (!(alpha >= 0.0 && alpha <= 1.0)) {
            throw std::domain_error("composite: alpha outside [0,1]");
        }
        color += transmittance * alpha * c;
        transmittance *= 1.0 - alpha;
    }
    return color;
}

namespace {

// Everything render needs per surviving splat, in depth order.
struct ScreenIso {
    Eigen::Vector2d mu2d;
    double sigma2d_sq;
    double radius_sq;  // (3 sigma_2d)^2
    Eigen::Vector3d color;
    double opacity;
};

struct ScreenAniso {
    Eigen::Vector2d mu2d;
    Eigen::Matrix2d inv_cov;
    double bound_x, bound_y;  // 3-sigma ellipse half extents
    Eigen::Vector3d color;
    double opacity;
};

inline bool covers(const ScreenIso& s, double px, double py, double& g) {
    const double dx = px - s.mu2d[0], dy = py - s.mu2d[1];
    const double r2 = dx * dx + dy * dy;
    if (r2 > s.radius_sq) return false;
    g = std::exp(-r2 / s.sigma2d_sq);
    return true;
}

inline bool covers(const ScreenAniso& s, double px, double py, double& g) {
    const double dx = px - s.mu2d[0], dy = py - s.mu2d[1];
    if (std::abs(dx) > s.bound_x || std::abs(dy) > s.bound_y) return false;
    const double q = detail::quadform2(s.inv_cov, dx, dy);
    if (q > 9.0) return false;
    g = std::exp(-q);
    return true;
}

template <class Screen>
ImageGrid composite_pixels(const std::vector<Screen>& splats, const Camera& camera,
                           const RenderOptions& options) {
    ImageGrid out(camera.width, camera.height, 3, 0.0);
    auto render_rows = [&](int y0, int y1) {
        for (int y = y0; y < y1; ++y) {
            const double py = pixel_center(y);
            for (int x = 0; x < camera.width; ++x) {
                const double px = pixel_center(x);
                Eigen::Vector3d color{0.0, 0.0, 0.0};
                double transmittance = 1.0;
                for (const auto& s : splats) {
                    double g;
                    if (!covers(s, px, py, g)) continue;
                    const double alpha = s.opacity * g;
                    color += transmittance * alpha * s.color;
                    transmittance *= 1.0 - alpha;
                }
                color += transmittance * options.background;
                for (int c = 0; c < 3; ++c) out.at(x, y, c) = color[c];
            }
        }
    };
    const int threads = std::clamp(options.threads, 1, camera.height);
    if (threads == 1) {
        render_rows(0, camera.height);
    } else {
        std::vector<std::thread> pool;
        const int per = (camera.height + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            const int y0 = t * per, y1 = std::min(camera.height, y0 + per);
            if (y0 >= y1) break;
            pool.emplace_back(render_rows, y0, y1);
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

// stable ascending-depth order, ties broken by input index
template <class T>
void sort_by_depth(std::vector<std::pair<double, T>>& items) {
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
}

}  // namespace

ImageGrid render(std::span<const IsoSplat3D> splats, const Camera& camera,
                 const RenderOptions& options) {
    camera.validate();
    std::vector<std::pair<double, ScreenIso>> projected;
    projected.reserve(splats.size());
    for (const auto& s : splats) {
        const auto p = project_iso(s, camera);
        if (!p) continue;  // culled
        ScreenIso sc;
        sc.mu2d = p->mu2d;
        sc.sigma2d_sq = p->sigma2d * p->sigma2d;
        sc.radius_sq = 9.0 * p->sigma2d * p->sigma2d;
        sc.color = s.color;
        sc.opacity = s.opacity;
        projected.emplace_back(p->depth, sc);
    }
    sort_by_depth(projected);
    std::vector<ScreenIso> ordered;
    ordered.reserve(projected.size());
    for (auto& [d, s] : projected) ordered.push_back(s);
    return composite_pixels(ordered, camera, options);
}

ImageGrid render(std::span<const AnisoSplat3D> splats, const Camera& camera,
                 const RenderOptions& options) {
    camera.validate();
    std::vector<std::pair<double, ScreenAniso>> projected;
    projected.reserve(splats.size());
    for (const auto& s : splats) {
        const auto p = project_aniso(s, camera);
        if (!p) continue;
        const double lo_hi[2] = {
            0.5 * (p->cov2d(0, 0) + p->cov2d(1, 1)) -
                std::sqrt(std::max(0.0, 0.25 * std::pow(p->cov2d(0, 0) - p->cov2d(1, 1), 2) +
                                            p->cov2d(0, 1) * p->cov2d(1, 0))),
            0.5 * (p->cov2d(0, 0) + p->cov2d(1, 1)) +
                std::sqrt(std::max(0.0, 0.25 * std::pow(p->cov2d(0, 0) - p->cov2d(1, 1), 2) +
                                            p->cov2d(0, 1) * p->cov2d(1, 0)))};
        if (!(lo_hi[0] > kSingularEigenRatio * lo_hi[1]) || lo_hi[1] <= 0.0) continue;  // degenerate
        ScreenAniso sc;
        sc.mu2d = p->mu2d;
        sc.inv_cov = detail::inverse_spd_2d(p->cov2d);
        sc.bound_x = 3.0 * std::sqrt(p->cov2d(0, 0));
        sc.bound_y = 3.0 * std::sqrt(p->cov2d(1, 1));
        sc.color = s.color;
        sc.opacity = s.opacity;
        projected.emplace_back(p->depth, sc);
    }
    sort_by_depth(projected);
    std::vector<ScreenAniso> ordered;
    ordered.reserve(projected.size());
    for (auto& [d, s] : projected) ordered.push_back(s);
    return composite_pixels(ordered, camera, options);
}

}  // namespace isosplat
