#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "splat/detail/rng.hpp"
#include "splat/errors.hpp"

namespace splat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// ---------------------------------------------------------------------------
// Real spherical harmonics basis, bands 0..3, graphics-style cartesian form
// (Condon-Shortley phase included). Ordering is l ascending, m from -l to l.
// ---------------------------------------------------------------------------

inline constexpr int kMaxShDegree = 3;

inline constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

namespace detail {

inline constexpr double kSh0 = 0.28209479177387814;
inline constexpr double kSh1 = 0.4886025119029199;
inline constexpr double kSh2[5] = {1.0925484305920792, -1.0925484305920792,
                                   0.31539156525252005, -1.0925484305920792,
                                   0.5462742152960396};
inline constexpr double kSh3[7] = {-0.5900435899266435, 2.890611442640554,
                                   -0.4570457994644658, 0.3731763325901154,
                                   -0.4570457994644658, 1.445305721320277,
                                   -0.5900435899266435};

// Writes the (degree+1)^2 basis values for a unit direction.
inline void sh_basis(const Vec3& d, int degree, std::span<double> out) {
    const double x = d.x(), y = d.y(), z = d.z();
    out[0] = kSh0;
    if (degree < 1) return;
    out[1] = -kSh1 * y;
    out[2] = kSh1 * z;
    out[3] = -kSh1 * x;
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    out[4] = kSh2[0] * x * y;
    out[5] = kSh2[1] * y * z;
    out[6] = kSh2[2] * (2.0 * zz - xx - yy);
    out[7] = kSh2[3] * x * z;
    out[8] = kSh2[4] * (xx - yy);
    if (degree < 3) return;
    out[9] = kSh3[0] * y * (3.0 * xx - yy);
    out[10] = kSh3[1] * x * y * z;
    out[11] = kSh3[2] * y * (4.0 * zz - xx - yy);
    out[12] = kSh3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = kSh3[4] * x * (4.0 * zz - xx - yy);
    out[14] = kSh3[5] * z * (xx - yy);
    out[15] = kSh3[6] * x * (xx - 3.0 * yy);
}

// Gradient of each basis value w.r.t. the (pre-normalization) cartesian
// components, i.e. the polynomial gradient. Callers project through the
// normalization Jacobian themselves.
inline void sh_basis_grad(const Vec3& d, int degree, std::span<Vec3> out) {
    const double x = d.x(), y = d.y(), z = d.z();
    out[0] = Vec3::Zero();
    if (degree < 1) return;
    out[1] = Vec3(0.0, -kSh1, 0.0);
    out[2] = Vec3(0.0, 0.0, kSh1);
    out[3] = Vec3(-kSh1, 0.0, 0.0);
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    out[4] = kSh2[0] * Vec3(y, x, 0.0);
    out[5] = kSh2[1] * Vec3(0.0, z, y);
    out[6] = kSh2[2] * Vec3(-2.0 * x, -2.0 * y, 4.0 * z);
    out[7] = kSh2[3] * Vec3(z, 0.0, x);
    out[8] = kSh2[4] * Vec3(2.0 * x, -2.0 * y, 0.0);
    if (degree < 3) return;
    out[9] = kSh3[0] * Vec3(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
    out[10] = kSh3[1] * Vec3(y * z, x * z, x * y);
    out[11] = kSh3[2] * Vec3(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
    out[12] = kSh3[3] * Vec3(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = kSh3[4] * Vec3(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
    out[14] = kSh3[5] * Vec3(2.0 * x * z, -2.0 * y * z, xx - yy);
    out[15] = kSh3[6] * Vec3(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Splat parameterization
// ---------------------------------------------------------------------------

// Unconstrained per-splat parameters. Rotation is a w-first quaternion that
// is normalized on realization (not stored normalized, so optimizer steps
// stay unconstrained); scale and opacity live in log/logit space.
struct SplatParams {
    Vec3 position = Vec3::Zero();
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);  // w, x, y, z
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    // Interleaved per-coefficient RGB: [c0_r, c0_g, c0_b, c1_r, ...],
    // 3*(degree+1)^2 entries.
    std::vector<double> sh_coeffs;

    double sh(int coeff, int channel) const { return sh_coeffs[3 * coeff + channel]; }
    double& sh(int coeff, int channel) { return sh_coeffs[3 * coeff + channel]; }
};

struct GaussianCloud {
    std::vector<SplatParams> splats;
    int sh_degree = 0;

    std::size_t size() const { return splats.size(); }
    bool empty() const { return splats.empty(); }
};

// Symmetric positive definite 3x3 world-space covariance.
struct Covariance3 {
    Mat3 m = Mat3::Identity();
};

// Rotation matrix of a normalized w-first quaternion.
inline Mat3 quat_to_rotmat(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

// Sigma = R S S^T R^T with S = diag(scale).
inline Covariance3 build_covariance(const Vec4& rotation, const Vec3& scale) {
    if (!rotation.allFinite() || !scale.allFinite())
        throw InvalidArgument("build_covariance: non-finite rotation or scale");
    if (scale.minCoeff() <= 0.0)
        throw InvalidArgument("build_covariance: scale components must be > 0");
    const Mat3 m = quat_to_rotmat(rotation) * scale.asDiagonal();
    return Covariance3{m * m.transpose()};
}

// ---------------------------------------------------------------------------
// Spherical-harmonic color
// ---------------------------------------------------------------------------

inline int sh_degree_from_coeff_count(std::size_t total_coeffs) {
    for (int l = 0; l <= kMaxShDegree; ++l)
        if (total_coeffs == static_cast<std::size_t>(3 * sh_coeff_count(l))) return l;
    throw ShapeError("eval_sh: coefficient count " + std::to_string(total_coeffs) +
                     " is not 3*(L+1)^2 for any supported degree");
}

// Raw SH color sum(c_k * Y_k(dir)) per channel. No clamping; the rasterizer
// clamps to [0,1] at render time.
inline Vec3 eval_sh(std::span<const double> coeffs, const Vec3& direction) {
    const int degree = sh_degree_from_coeff_count(coeffs.size());
    std::array<double, 16> basis{};
    detail::sh_basis(direction, degree, basis);
    Vec3 color = Vec3::Zero();
    const int n = sh_coeff_count(degree);
    for (int k = 0; k < n; ++k)
        for (int ch = 0; ch < 3; ++ch) color[ch] += coeffs[3 * k + ch] * basis[k];
    return color;
}

inline Vec3 eval_sh(const SplatParams& params, const Vec3& direction) {
    return eval_sh(std::span<const double>(params.sh_coeffs), direction);
}

// ---------------------------------------------------------------------------
// Realization: unconstrained parameters -> valid world-space gaussian
// ---------------------------------------------------------------------------

struct RealizedSplat {
    Vec3 mean = Vec3::Zero();
    Covariance3 cov;
    double opacity = 0.5;
};

inline RealizedSplat realize(const SplatParams& params) {
    RealizedSplat out;
    out.mean = params.position;
    const Vec4 q = params.rotation / params.rotation.norm();
    const Vec3 scale = params.log_scale.array().exp();
    out.cov = build_covariance(q, scale);
    out.opacity = sigmoid(params.opacity_logit);
    return out;
}

// ---------------------------------------------------------------------------
// Cloud initialization
// ---------------------------------------------------------------------------

struct InitOptions {
    int sh_degree = 0;
    double opacity = 0.1;                   // realized opacity of fresh splats
    Vec3 color = Vec3(0.5, 0.5, 0.5);       // realized band-0 color
    int knn = 3;                            // neighbors for point-cloud scale
};

namespace detail {

inline std::vector<double> flat_color_coeffs(const Vec3& color, int degree) {
    std::vector<double> coeffs(3 * sh_coeff_count(degree), 0.0);
    for (int ch = 0; ch < 3; ++ch) coeffs[ch] = color[ch] / kSh0;
    return coeffs;
}

}  // namespace detail

// Splats uniform in a ball. Rotation starts at identity (w = 1), scale at
// radius/cbrt(count) so the initial cloud is translucent and fine-grained.
inline GaussianCloud init_cloud_random_sphere(std::size_t count, double radius,
                                              std::uint64_t seed, const InitOptions& opts = {}) {
    if (count == 0) throw InvalidArgument("init_cloud_random_sphere: count must be >= 1");
    if (!(radius > 0.0)) throw InvalidArgument("init_cloud_random_sphere: radius must be > 0");
    if (opts.sh_degree < 0 || opts.sh_degree > kMaxShDegree)
        throw InvalidArgument("init_cloud_random_sphere: sh_degree out of range [0,3]");

    detail::Rng rng(seed);
    GaussianCloud cloud;
    cloud.sh_degree = opts.sh_degree;
    cloud.splats.reserve(count);
    const double scale = radius / std::cbrt(static_cast<double>(count));
    const double log_s = std::log(scale);
    const double op_logit = logit(opts.opacity);
    while (cloud.splats.size() < count) {
        const Vec3 p(rng.uniform(-radius, radius), rng.uniform(-radius, radius),
                     rng.uniform(-radius, radius));
        if (p.squaredNorm() > radius * radius) continue;
        SplatParams s;
        s.position = p;
        s.rotation = Vec4(1.0, 0.0, 0.0, 0.0);
        s.log_scale = Vec3(log_s, log_s, log_s);
        s.opacity_logit = op_logit;
        s.sh_coeffs = detail::flat_color_coeffs(opts.color, opts.sh_degree);
        cloud.splats.push_back(std::move(s));
    }
    return cloud;
}

// Splats centered on the given points with band-0 SH chosen so eval_sh
// reproduces the input colors. Per-splat isotropic scale comes from
// sqrt(mean distance to the k nearest neighbors); when there are not enough
// points for that, a bounding-box heuristic takes over.
inline GaussianCloud init_cloud_from_points(const std::vector<Vec3>& points,
                                            const std::vector<Vec3>& colors,
                                            const InitOptions& opts = {}) {
    if (points.empty()) throw InvalidArgument("init_cloud_from_points: need at least one point");
    if (points.size() != colors.size())
        throw ShapeError("init_cloud_from_points: points and colors must have equal length");
    const int k = std::max(1, opts.knn);

    const std::size_t n = points.size();
    std::vector<double> log_scales(n);
    if (n >= static_cast<std::size_t>(k) + 1) {
        std::vector<double> dist2(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) dist2[j] = (points[j] - points[i]).squaredNorm();
            dist2[i] = std::numeric_limits<double>::infinity();
            std::nth_element(dist2.begin(), dist2.begin() + (k - 1), dist2.end());
            double mean_dist = 0.0;
            for (int m = 0; m < k; ++m) mean_dist += std::sqrt(dist2[m]);
            mean_dist /= k;
            log_scales[i] = std::log(std::sqrt(std::max(mean_dist, 1e-12)));
        }
    } else {
        Vec3 lo = points[0], hi = points[0];
        for (const auto& p : points) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        const double diag = (hi - lo).norm();
        const double s = std::max(diag, 0.02) / (2.0 * std::cbrt(static_cast<double>(n)));
        std::fill(log_scales.begin(), log_scales.end(), std::log(s));
    }

    GaussianCloud cloud;
    cloud.sh_degree = opts.sh_degree;
    cloud.splats.reserve(n);
    const double op_logit = logit(opts.opacity);
    for (std::size_t i = 0; i < n; ++i) {
        SplatParams s;
        s.position = points[i];
        s.rotation = Vec4(1.0, 0.0, 0.0, 0.0);
        s.log_scale = Vec3::Constant(log_scales[i]);
        s.opacity_logit = op_logit;
        s.sh_coeffs = detail::flat_color_coeffs(colors[i], opts.sh_degree);
        cloud.splats.push_back(std::move(s));
    }
    return cloud;
}

}  // namespace splat
