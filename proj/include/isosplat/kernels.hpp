#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

// Gaussian kernels as used throughout this library: the exponent carries no
// 1/2 factor and there is no normalization constant, so the peak value is
// exactly 1 at the center. The sigma here is sqrt(2) times a conventional
// standard deviation.

namespace isosplat {

template <int N>
struct IsoKernelParams {
    Eigen::Matrix<double, N, 1> mu;
    double sigma = 1.0;  // > 0, same units as mu
};

using IsoKernelParams2 = IsoKernelParams<2>;
using IsoKernelParams3 = IsoKernelParams<3>;

struct AnisoKernelParams2D {
    Eigen::Vector2d mu;
    double theta_rot = 0.0;  // radians
    double s1 = 1.0;         // > 0
    double s2 = 1.0;         // > 0
};

struct AnisoKernelParams3D {
    Eigen::Vector3d mu;
    Eigen::Quaterniond rotation;  // unit norm within 1e-9
    double s1 = 1.0;
    double s2 = 1.0;
    double s3 = 1.0;
};

// Relative eigenvalue cutoff below which a covariance counts as singular.
inline constexpr double kSingularEigenRatio = 1e-12;
// Squared condition-number cutoff past which aniso gradients are clamped.
inline constexpr double kGradConditionLimit = 1e12;
inline constexpr double kGradClamp = 1e12;

namespace detail {

template <int N>
inline void require_finite(const Eigen::Matrix<double, N, 1>& v, const char* what) {
    if (!v.allFinite()) throw std::domain_error(std::string(what) + ": non-finite coordinates");
}

inline void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw std::domain_error(std::string(what) + ": must be positive and finite");
    }
}

// d' * M * d evaluated in a fixed order; shared by every aniso evaluation
// path so accelerated loops match the reference one bit for bit.
inline double quadform2(const Eigen::Matrix2d& m, double dx, double dy) {
    return dx * (m(0, 0) * dx + m(0, 1) * dy) + dy * (m(1, 0) * dx + m(1, 1) * dy);
}

}  // namespace detail

template <int N>
inline void validate(const IsoKernelParams<N>& p) {
    detail::require_finite<N>(p.mu, "IsoKernelParams.mu");
    detail::require_positive(p.sigma, "IsoKernelParams.sigma");
}

inline void validate(const AnisoKernelParams2D& p) {
    detail::require_finite<2>(p.mu, "AnisoKernelParams2D.mu");
    if (!std::isfinite(p.theta_rot)) throw std::domain_error("AnisoKernelParams2D.theta_rot: non-finite");
    detail::require_positive(p.s1, "AnisoKernelParams2D.s1");
    detail::require_positive(p.s2, "AnisoKernelParams2D.s2");
}

inline void validate(const AnisoKernelParams3D& p) {
    detail::require_finite<3>(p.mu, "AnisoKernelParams3D.mu");
    detail::require_positive(p.s1, "AnisoKernelParams3D.s1");
    detail::require_positive(p.s2, "AnisoKernelParams3D.s2");
    detail::require_positive(p.s3, "AnisoKernelParams3D.s3");
    if (std::abs(p.rotation.norm() - 1.0) > 1e-9) {
        throw std::domain_error("AnisoKernelParams3D.rotation: quaternion norm must be 1 within 1e-9");
    }
}

/// exp(-|x-mu|^2 / sigma^2), in (0,1], equal to 1 iff x = mu.
template <int N>
inline double eval_iso(const Eigen::Matrix<double, N, 1>& x, const IsoKernelParams<N>& p) {
    detail::require_finite<N>(x, "eval_iso.x");
    validate(p);
    double r2 = 0.0;
    for (int i = 0; i < N; ++i) {
        const double d = x[i] - p.mu[i];
        r2 += d * d;
    }
    return std::exp(-r2 / (p.sigma * p.sigma));
}

inline double eval_iso(const Eigen::Vector2d& x, const Eigen::Vector2d& mu, double sigma) {
    return eval_iso<2>(x, IsoKernelParams2{mu, sigma});
}

/// Sigma = R(theta) diag(s1^2, s2^2) R(theta)^T
inline Eigen::Matrix2d build_cov_2d(const AnisoKernelParams2D& p) {
    validate(p);
    const double c = std::cos(p.theta_rot), s = std::sin(p.theta_rot);
    Eigen::Matrix2d r;
    r << c, -s, s, c;
    const Eigen::Vector2d d(p.s1 * p.s1, p.s2 * p.s2);
    Eigen::Matrix2d cov = r * d.asDiagonal() * r.transpose();
    // force exact symmetry
    const double off = 0.5 * (cov(0, 1) + cov(1, 0));
    cov(0, 1) = off;
    cov(1, 0) = off;
    return cov;
}

/// Sigma = R(q) diag(s1^2, s2^2, s3^2) R(q)^T
inline Eigen::Matrix3d build_cov_3d(const AnisoKernelParams3D& p) {
    validate(p);
    const Eigen::Matrix3d r = p.rotation.normalized().toRotationMatrix();
    const Eigen::Vector3d d(p.s1 * p.s1, p.s2 * p.s2, p.s3 * p.s3);
    Eigen::Matrix3d cov = r * d.asDiagonal() * r.transpose();
    for (int i = 0; i < 3; ++i) {
        for (int j = i + 1; j < 3; ++j) {
            const double off = 0.5 * (cov(i, j) + cov(j, i));
            cov(i, j) = off;
            cov(j, i) = off;
        }
    }
    return cov;
}

namespace detail {

inline void require_spd_2d(const Eigen::Matrix2d& cov) {
    if (!cov.allFinite()) throw std::domain_error("covariance: non-finite entries");
    const double half_tr = 0.5 * (cov(0, 0) + cov(1, 1));
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    const double disc = std::sqrt(std::max(0.0, half_tr * half_tr - det));
    const double lo = half_tr - disc, hi = half_tr + disc;
    if (!(lo > kSingularEigenRatio * hi) || hi <= 0.0) {
        throw std::domain_error("covariance not positive definite (smallest eigenvalue " +
                                std::to_string(lo) + ")");
    }
}

inline Eigen::Matrix2d inverse_spd_2d(const Eigen::Matrix2d& cov) {
    require_spd_2d(cov);
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    Eigen::Matrix2d m;
    m << cov(1, 1) / det, -cov(0, 1) / det, -cov(1, 0) / det, cov(0, 0) / det;
    return m;
}

}  // namespace detail

/// exp(-(x-mu)^T Sigma^-1 (x-mu)); Sigma must be symmetric positive definite.
inline double eval_aniso(const Eigen::Vector2d& x, const Eigen::Matrix2d& sigma,
                         const Eigen::Vector2d& mu) {
    detail::require_finite<2>(x, "eval_aniso.x");
    detail::require_finite<2>(mu, "eval_aniso.mu");
    const double dx = x[0] - mu[0], dy = x[1] - mu[1];
    if (sigma(0, 1) == 0.0 && sigma(1, 0) == 0.0 && sigma(0, 0) == sigma(1, 1)) {
        // isotropic covariance: identical arithmetic to eval_iso
        detail::require_positive(sigma(0, 0), "eval_aniso.sigma diagonal");
        return std::exp(-(dx * dx + dy * dy) / sigma(0, 0));
    }
    const Eigen::Matrix2d m = detail::inverse_spd_2d(sigma);
    return std::exp(-detail::quadform2(m, dx, dy));
}

inline double eval_aniso(const Eigen::Vector3d& x, const Eigen::Matrix3d& sigma,
                         const Eigen::Vector3d& mu) {
    detail::require_finite<3>(x, "eval_aniso.x");
    detail::require_finite<3>(mu, "eval_aniso.mu");
    const Eigen::Vector3d d = x - mu;
    if (sigma(0, 1) == 0.0 && sigma(0, 2) == 0.0 && sigma(1, 0) == 0.0 && sigma(1, 2) == 0.0 &&
        sigma(2, 0) == 0.0 && sigma(2, 1) == 0.0 && sigma(0, 0) == sigma(1, 1) &&
        sigma(1, 1) == sigma(2, 2)) {
        detail::require_positive(sigma(0, 0), "eval_aniso.sigma diagonal");
        return std::exp(-(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / sigma(0, 0));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(sigma, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    if (!(lo > kSingularEigenRatio * hi) || hi <= 0.0) {
        throw std::domain_error("covariance not positive definite (smallest eigenvalue " +
                                std::to_string(lo) + ")");
    }
    const Eigen::LLT<Eigen::Matrix3d> llt(sigma);
    return std::exp(-d.dot(llt.solve(d)));
}

template <int N>
struct IsoKernelGrad {
    Eigen::Matrix<double, N, 1> d_mu;
    double d_sigma = 0.0;
};

/// dg/dmu = g * 2(x-mu)/sigma^2, dg/dsigma = g * 2|x-mu|^2/sigma^3.
template <int N>
inline IsoKernelGrad<N> grad_iso(const Eigen::Matrix<double, N, 1>& x,
                                 const IsoKernelParams<N>& p) {
    detail::require_finite<N>(x, "grad_iso.x");
    validate(p);
    const Eigen::Matrix<double, N, 1> d = x - p.mu;
    const double s2 = p.sigma * p.sigma;
    const double r2 = d.squaredNorm();
    const double g = std::exp(-r2 / s2);
    IsoKernelGrad<N> out;
    out.d_mu = (2.0 * g / s2) * d;
    out.d_sigma = 2.0 * g * r2 / (s2 * p.sigma);
    return out;
}

struct AnisoKernelGrad2D {
    Eigen::Vector2d d_mu;
    double d_theta = 0.0;
    double d_s1 = 0.0;
    double d_s2 = 0.0;
    bool near_singular = false;
};

/// Analytic partials of the 2D anisotropic kernel with respect to
/// (mu, theta_rot, s1, s2). In the rotated frame u = R^T (x - mu):
///   q = (u1/s1)^2 + (u2/s2)^2,           g = exp(-q)
///   dq/dtheta = 2 u1 u2 (1/s1^2 - 1/s2^2)
///   dq/ds_i   = -2 u_i^2 / s_i^3
inline AnisoKernelGrad2D grad_aniso(const Eigen::Vector2d& x, const AnisoKernelParams2D& p) {
    detail::require_finite<2>(x, "grad_aniso.x");
    validate(p);
    const double c = std::cos(p.theta_rot), s = std::sin(p.theta_rot);
    const Eigen::Vector2d d = x - p.mu;
    const double u1 = c * d[0] + s * d[1];
    const double u2 = -s * d[0] + c * d[1];
    const double i1 = 1.0 / (p.s1 * p.s1), i2 = 1.0 / (p.s2 * p.s2);
    const double q = u1 * u1 * i1 + u2 * u2 * i2;
    const double g = std::exp(-q);

    AnisoKernelGrad2D out;
    // Sigma^-1 d = R diag(i1,i2) u
    const double w1 = i1 * u1, w2 = i2 * u2;
    out.d_mu = 2.0 * g * Eigen::Vector2d(c * w1 - s * w2, s * w1 + c * w2);
    out.d_theta = -g * 2.0 * u1 * u2 * (i1 - i2);
    out.d_s1 = g * 2.0 * u1 * u1 * i1 / p.s1;
    out.d_s2 = g * 2.0 * u2 * u2 * i2 / p.s2;

    const double ratio = std::max(p.s1, p.s2) / std::min(p.s1, p.s2);
    if (ratio * ratio > kGradConditionLimit) {
        out.near_singular = true;
        const auto clamp = [](double v) { return std::clamp(v, -kGradClamp, kGradClamp); };
        out.d_mu[0] = clamp(out.d_mu[0]);
        out.d_mu[1] = clamp(out.d_mu[1]);
        out.d_theta = clamp(out.d_theta);
        out.d_s1 = clamp(out.d_s1);
        out.d_s2 = clamp(out.d_s2);
    }
    return out;
}

}  // namespace isosplat
