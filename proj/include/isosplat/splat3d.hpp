#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "isosplat/image.hpp"
#include "isosplat/kernels.hpp"

namespace isosplat {

struct IsoSplat3D {
    Eigen::Vector3d mu{0.0, 0.0, 0.0};  // world units
    double sigma = 1.0;                 // world units, > 0
    Eigen::Vector3d color{0.0, 0.0, 0.0};
    double opacity = 1.0;  // in [0,1]

    static constexpr int geometric_dof = 4;  // mu:3 + sigma:1

    void validate() const;
};

struct AnisoSplat3D {
    Eigen::Vector3d mu{0.0, 0.0, 0.0};
    Eigen::Quaterniond rotation{1.0, 0.0, 0.0, 0.0};
    double s1 = 1.0, s2 = 1.0, s3 = 1.0;
    Eigen::Vector3d color{0.0, 0.0, 0.0};
    double opacity = 1.0;

    static constexpr int geometric_dof = 9;  // mu:3 + symmetric 3x3 covariance:6

    AnisoKernelParams3D kernel() const { return {mu, rotation, s1, s2, s3}; }
    void validate() const;
};

/// Rigid world-to-camera transform plus pinhole intrinsics.
struct Camera {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation{0.0, 0.0, 0.0};
    double focal = 1.0;  // pixels
    Eigen::Vector2d principal_point{0.0, 0.0};
    int width = 1, height = 1;

    Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
        return rotation * world + translation;
    }
    Eigen::Vector2d project_point(const Eigen::Vector3d& cam) const {
        return {focal * cam[0] / cam[2] + principal_point[0],
                focal * cam[1] / cam[2] + principal_point[1]};
    }
    void validate() const;
};

inline constexpr double kNearPlane = 1e-3;

/// Jacobian of the pinhole projection at a camera-space point:
/// [[f/z, 0, -f x/z^2], [0, f/z, -f y/z^2]]. Empty when z <= near plane.
std::optional<Eigen::Matrix<double, 2, 3>> projection_jacobian(const Eigen::Vector3d& mu_cam,
                                                               double focal);

/// Sigma_2D = J V Sigma V^T J^T
Eigen::Matrix2d project_cov(const Eigen::Matrix3d& sigma, const Eigen::Matrix3d& view_rotation,
                            const Eigen::Matrix<double, 2, 3>& jacobian);

struct ProjectedIso {
    Eigen::Vector2d mu2d;
    double sigma2d;
    double depth;
};

/// Isotropic shortcut: the screen footprint depends on distance only,
/// sigma_2d = sigma * f / z. Empty when the splat is culled.
std::optional<ProjectedIso> project_iso(const IsoSplat3D& splat, const Camera& camera);

struct ProjectedAniso {
    Eigen::Vector2d mu2d;
    Eigen::Matrix2d cov2d;
    double depth;
};

std::optional<ProjectedAniso> project_aniso(const AnisoSplat3D& splat, const Camera& camera);

/// Front-to-back alpha compositing: C = sum_k c_k a_k prod_{j<k} (1 - a_j).
Eigen::Vector3d composite(std::span<const std::pair<Eigen::Vector3d, double>> front_to_back);

struct RenderOptions {
    Eigen::Vector3d background{0.0, 0.0, 0.0};
    int threads = 1;
};

/// Per pixel: splats whose 3-sigma screen footprint covers the pixel are
/// composited front to back (stable depth order, ties by splat index) with
/// effective alpha = opacity * screen-space kernel value. Remaining
/// transmittance goes to the background.
ImageGrid render(std::span<const IsoSplat3D> splats, const Camera& camera,
                 const RenderOptions& options = {});
ImageGrid render(std::span<const AnisoSplat3D> splats, const Camera& camera,
                 const RenderOptions& options = {});

}  // namespace isosplat
