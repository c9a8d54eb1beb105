#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "splat/camera.hpp"
#include "splat/detail/parallel.hpp"
#include "splat/errors.hpp"
#include "splat/gaussian.hpp"
#include "splat/image.hpp"

namespace splat {

// Rendering knobs. The cutoff/threshold defaults are the usual splatting
// speedups; exact() turns them all off so the compositing formula (and its
// gradient) holds with no skip discontinuities, for finite-difference tests.
struct RenderSettings {
    double lowpass = 0.3;              // px^2 added to cov2 diagonal
    double cutoff_sigma = 3.0;         // screen-space cutoff; <= 0 disables
    double alpha_threshold = 1.0 / 255.0;
    double transmittance_floor = 1e-4;
    int tile_size = 16;
    int workers = 0;                   // 0 = all hardware threads

    static RenderSettings exact() {
        RenderSettings s;
        s.cutoff_sigma = 0.0;
        s.alpha_threshold = 0.0;
        s.transmittance_floor = 0.0;
        return s;
    }
};

// A gaussian after projection to the image plane. color is the SH color for
// the viewing direction clamped to [0,1] (rendering works in clamped color).
struct Splat2D {
    Vec2 mean_px = Vec2::Zero();
    Mat2 cov2 = Mat2::Identity();
    double depth = 0.0;
    Vec3 color = Vec3::Zero();
    double opacity = 0.0;
    bool culled = false;
};

struct RenderOutput {
    Image rgb;                  // H x W x 3, values in [0,1]
    Image alpha;                // H x W x 1, accumulated opacity
    std::vector<int> contrib;   // per-pixel contributing-splat count
};

// Gradients mirroring SplatParams, zero-initialized.
struct SplatGrads {
    Vec3 position = Vec3::Zero();
    Vec4 rotation = Vec4::Zero();
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    std::vector<double> sh_coeffs;
};

struct ParamGradients {
    std::vector<SplatGrads> splats;

    static ParamGradients zeros_like(const GaussianCloud& cloud) {
        ParamGradients g;
        g.splats.resize(cloud.size());
        for (std::size_t i = 0; i < cloud.size(); ++i)
            g.splats[i].sh_coeffs.assign(cloud.splats[i].sh_coeffs.size(), 0.0);
        return g;
    }
};

namespace detail {

struct CameraFrame {
    Mat3 W = Mat3::Identity();  // world-to-camera rotation
    Vec3 pos = Vec3::Zero();
    double fx = 0, fy = 0, cx = 0, cy = 0;
    double near = 0, far = 0;
    int width = 0, height = 0;
};

inline CameraFrame make_frame(const Camera& cam) {
    cam.validate();
    CameraFrame f;
    f.W = cam.rotation();
    f.pos = cam.position;
    f.fx = cam.fx();
    f.fy = cam.fy();
    f.cx = cam.cx();
    f.cy = cam.cy();
    f.near = cam.near;
    f.far = cam.far;
    f.width = cam.width;
    f.height = cam.height;
    return f;
}

inline Eigen::Matrix<double, 2, 3> perspective_jacobian(const CameraFrame& f, const Vec3& t) {
    const double tz = t.z(), tz2 = tz * tz;
    Eigen::Matrix<double, 2, 3> j;
    j << f.fx / tz, 0.0, -f.fx * t.x() / tz2,
         0.0, f.fy / tz, -f.fy * t.y() / tz2;
    return j;
}

inline Splat2D project_with_frame(const CameraFrame& f, const RealizedSplat& g,
                                  std::span<const double> sh_coeffs, double lowpass) {
    Splat2D out;
    const Vec3 t = f.W * (g.mean - f.pos);
    out.depth = t.z();
    if (!(t.z() >= f.near) || t.z() > f.far) {
        out.culled = true;
        return out;
    }
    const auto j = perspective_jacobian(f, t);
    out.cov2 = j * (f.W * g.cov.m * f.W.transpose()) * j.transpose() +
               lowpass * Mat2::Identity();
    out.mean_px = Vec2(f.fx * t.x() / t.z() + f.cx, f.fy * t.y() / t.z() + f.cy);
    out.opacity = g.opacity;
    const Vec3 view_dir = (g.mean - f.pos).normalized();
    out.color = eval_sh(sh_coeffs, view_dir).cwiseMax(0.0).cwiseMin(1.0);
    return out;
}

// Frame-wide projection results: visible splats depth-sorted (ties broken by
// cloud index) plus per-tile lists that inherit that order.
struct PreparedScene {
    std::vector<Splat2D> splats;
    std::vector<Mat2> inv_cov2;
    std::vector<int> cloud_index;
    std::vector<std::array<int, 4>> bbox;  // x0, x1, y0, y1 (half-open)
    std::vector<std::vector<int>> tile_lists;
    int tiles_x = 0, tiles_y = 0;
};

inline PreparedScene prepare_scene(const CameraFrame& f, const GaussianCloud& cloud,
                                   const RenderSettings& st) {
    PreparedScene scene;
    const bool cutoff = st.cutoff_sigma > 0.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const SplatParams& p = cloud.splats[i];
        Splat2D sp = project_with_frame(f, realize(p), p.sh_coeffs, st.lowpass);
        if (sp.culled) continue;
        std::array<int, 4> box{0, f.width, 0, f.height};
        if (cutoff) {
            // Bounding radius from the largest eigenvalue of cov2.
            const double a = sp.cov2(0, 0), b = sp.cov2(0, 1), c = sp.cov2(1, 1);
            const double lam_max =
                0.5 * (a + c) + std::sqrt(std::max(0.25 * (a - c) * (a - c) + b * b, 0.0));
            const double r = st.cutoff_sigma * std::sqrt(std::max(lam_max, 0.0));
            box[0] = std::max(0, static_cast<int>(std::floor(sp.mean_px.x() - r)));
            box[1] = std::min(f.width, static_cast<int>(std::ceil(sp.mean_px.x() + r)));
            box[2] = std::max(0, static_cast<int>(std::floor(sp.mean_px.y() - r)));
            box[3] = std::min(f.height, static_cast<int>(std::ceil(sp.mean_px.y() + r)));
            if (box[0] >= box[1] || box[2] >= box[3]) continue;
        }
        const double det = sp.cov2.determinant();
        if (!(det > 0.0) || !sp.cov2.allFinite()) continue;
        Mat2 inv;
        inv << sp.cov2(1, 1), -sp.cov2(0, 1), -sp.cov2(1, 0), sp.cov2(0, 0);
        inv /= det;
        scene.splats.push_back(sp);
        scene.inv_cov2.push_back(inv);
        scene.cloud_index.push_back(static_cast<int>(i));
        scene.bbox.push_back(box);
    }

    std::vector<int> order(scene.splats.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scene.splats[a].depth != scene.splats[b].depth)
            return scene.splats[a].depth < scene.splats[b].depth;
        return scene.cloud_index[a] < scene.cloud_index[b];
    });
    auto permute = [&order](auto& v) {
        auto copy = v;
        for (std::size_t i = 0; i < order.size(); ++i) v[i] = copy[order[i]];
    };
    permute(scene.splats);
    permute(scene.inv_cov2);
    permute(scene.cloud_index);
    permute(scene.bbox);

    scene.tiles_x = (f.width + st.tile_size - 1) / st.tile_size;
    scene.tiles_y = (f.height + st.tile_size - 1) / st.tile_size;
    scene.tile_lists.assign(static_cast<std::size_t>(scene.tiles_x) * scene.tiles_y, {});
    for (std::size_t s = 0; s < scene.splats.size(); ++s) {
        const auto& box = scene.bbox[s];
        const int tx0 = box[0] / st.tile_size, tx1 = (box[1] - 1) / st.tile_size;
        const int ty0 = box[2] / st.tile_size, ty1 = (box[3] - 1) / st.tile_size;
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx)
                scene.tile_lists[static_cast<std::size_t>(ty) * scene.tiles_x + tx].push_back(
                    static_cast<int>(s));
    }
    return scene;
}

}  // namespace detail

inline Splat2D project_splat(const Camera& cam, const RealizedSplat& splat,
                             std::span<const double> sh_coeffs, double lowpass = 0.3) {
    return detail::project_with_frame(detail::make_frame(cam), splat, sh_coeffs, lowpass);
}

inline Splat2D project_splat(const Camera& cam, const SplatParams& params, double lowpass = 0.3) {
    return project_splat(cam, realize(params), params.sh_coeffs, lowpass);
}

// Front-to-back alpha compositing:
//   C = sum_i c_i a'_i T_i + T_end * background,  T_i = prod_{j<i} (1 - a'_j),
//   a'_i = opacity_i * exp(-1/2 d^T cov2^{-1} d),  alpha = 1 - T_end.
// Pixels are independent, so the result is bit-identical for any worker count.
inline RenderOutput render(const Camera& camera, const GaussianCloud& cloud,
                           const Vec3& background = Vec3::Zero(),
                           const RenderSettings& settings = {}) {
    if (background.minCoeff() < 0.0 || background.maxCoeff() > 1.0)
        throw InvalidArgument("render: background color must lie in [0,1]");
    const auto frame = detail::make_frame(camera);
    const auto scene = detail::prepare_scene(frame, cloud, settings);

    RenderOutput out;
    out.rgb = Image(frame.width, frame.height, 3);
    out.alpha = Image(frame.width, frame.height, 1);
    out.contrib.assign(static_cast<std::size_t>(frame.width) * frame.height, 0);

    const bool cutoff = settings.cutoff_sigma > 0.0;
    const double power_floor = -0.5 * settings.cutoff_sigma * settings.cutoff_sigma;
    const std::size_t tile_count = scene.tile_lists.size();
    detail::parallel_for(tile_count, settings.workers, [&](std::size_t tile) {
        const int tx = static_cast<int>(tile) % scene.tiles_x;
        const int ty = static_cast<int>(tile) / scene.tiles_x;
        const int x0 = tx * settings.tile_size, x1 = std::min(x0 + settings.tile_size, frame.width);
        const int y0 = ty * settings.tile_size, y1 = std::min(y0 + settings.tile_size, frame.height);
        const auto& list = scene.tile_lists[tile];
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                const Vec2 pix(x + 0.5, y + 0.5);
                Vec3 c = Vec3::Zero();
                double t = 1.0;
                int n = 0;
                for (int idx : list) {
                    const Splat2D& sp = scene.splats[static_cast<std::size_t>(idx)];
                    const Vec2 d = pix - sp.mean_px;
                    const double power = -0.5 * d.dot(scene.inv_cov2[static_cast<std::size_t>(idx)] * d);
                    if (cutoff && power < power_floor) continue;
                    const double a = sp.opacity * std::exp(power);
                    if (a < settings.alpha_threshold) continue;
                    c += sp.color * (a * t);
                    ++n;
                    t *= 1.0 - a;
                    if (t < settings.transmittance_floor) break;
                }
                for (int ch = 0; ch < 3; ++ch)
                    out.rgb.at(x, y, ch) = c[ch] + t * background[ch];
                out.alpha.at(x, y, 0) = 1.0 - t;
                out.contrib[static_cast<std::size_t>(y) * frame.width + x] = n;
            }
        }
    });
    return out;
}

namespace detail {

// Per-splat gradient accumulators in screen space.
struct Accum2D {
    Vec2 d_mean = Vec2::Zero();
    Mat2 d_cov2 = Mat2::Zero();
    double d_opacity = 0.0;
    Vec3 d_color = Vec3::Zero();

    Accum2D& operator+=(const Accum2D& o) {
        d_mean += o.d_mean;
        d_cov2 += o.d_cov2;
        d_opacity += o.d_opacity;
        d_color += o.d_color;
        return *this;
    }
};

// Partial derivatives of quat_to_rotmat w.r.t. the normalized components.
inline std::array<Mat3, 4> rotmat_quat_partials(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    std::array<Mat3, 4> d;
    d[0] << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
    d[1] << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
    d[2] << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
    d[3] << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
    return d;
}

// Chains screen-space accumulators through projection, covariance
// factorization, activations, SH evaluation, and quaternion normalization.
inline void chain_to_params(const CameraFrame& f, const SplatParams& p, const Accum2D& acc,
                            SplatGrads& out) {
    const double qn = p.rotation.norm();
    const Vec4 qh = p.rotation / qn;
    const Vec3 s = p.log_scale.array().exp();
    const Mat3 rot = quat_to_rotmat(qh);
    const Mat3 m = rot * s.asDiagonal();
    const Mat3 sigma = m * m.transpose();
    const double o = sigmoid(p.opacity_logit);

    out.opacity_logit += acc.d_opacity * o * (1.0 - o);

    // Color: clamp mask, SH coefficients, and the direction -> position path.
    const Vec3 wvec = p.position - f.pos;
    const double r = wvec.norm();
    const Vec3 dir = wvec / r;
    const int degree = sh_degree_from_coeff_count(p.sh_coeffs.size());
    const int n_basis = sh_coeff_count(degree);
    std::array<double, 16> basis{};
    std::array<Vec3, 16> basis_grad{};
    sh_basis(dir, degree, basis);
    sh_basis_grad(dir, degree, basis_grad);
    Vec3 raw = Vec3::Zero();
    for (int k = 0; k < n_basis; ++k)
        for (int ch = 0; ch < 3; ++ch) raw[ch] += p.sh_coeffs[3 * k + ch] * basis[k];
    Vec3 dc = Vec3::Zero();
    for (int ch = 0; ch < 3; ++ch)
        dc[ch] = (raw[ch] > 0.0 && raw[ch] < 1.0) ? acc.d_color[ch] : 0.0;
    Vec3 ddir = Vec3::Zero();
    for (int k = 0; k < n_basis; ++k) {
        double coeff_dot = 0.0;
        for (int ch = 0; ch < 3; ++ch) {
            out.sh_coeffs[3 * k + ch] += dc[ch] * basis[k];
            coeff_dot += dc[ch] * p.sh_coeffs[3 * k + ch];
        }
        ddir += coeff_dot * basis_grad[k];
    }
    out.position += (Mat3::Identity() - dir * dir.transpose()) / r * ddir;

    // Geometry: mean_px and cov2 back to position, scale, rotation.
    const Vec3 t = f.W * wvec;
    const double tz = t.z(), tz2 = tz * tz, tz3 = tz2 * tz;
    const auto j = perspective_jacobian(f, t);
    const Mat3 cov_cam = f.W * sigma * f.W.transpose();

    Vec3 dt = j.transpose() * acc.d_mean;
    const Mat3 d_cov_cam = j.transpose() * acc.d_cov2 * j;
    const Eigen::Matrix<double, 2, 3> dj = 2.0 * acc.d_cov2 * j * cov_cam;
    dt.x() += dj(0, 2) * (-f.fx / tz2);
    dt.y() += dj(1, 2) * (-f.fy / tz2);
    dt.z() += dj(0, 0) * (-f.fx / tz2) + dj(1, 1) * (-f.fy / tz2) +
              dj(0, 2) * (2.0 * f.fx * t.x() / tz3) + dj(1, 2) * (2.0 * f.fy * t.y() / tz3);
    out.position += f.W.transpose() * dt;

    const Mat3 d_sigma = f.W.transpose() * d_cov_cam * f.W;
    const Mat3 dm = 2.0 * d_sigma * m;
    const Mat3 dr = dm * s.asDiagonal();
    for (int k = 0; k < 3; ++k) out.log_scale[k] += rot.col(k).dot(dm.col(k)) * s[k];

    const auto dr_dq = rotmat_quat_partials(qh);
    Vec4 dqh;
    for (int k = 0; k < 4; ++k) dqh[k] = dr_dq[static_cast<std::size_t>(k)].cwiseProduct(dr).sum();
    out.rotation += (Eigen::Matrix4d::Identity() - qh * qh.transpose()) * dqh / qn;
}

}  // namespace detail

// Exact gradient of the compositing formula w.r.t. every splat parameter.
// d_alpha (optional) is dLoss/dAlpha for the accumulated-opacity channel.
// Per-tile partial accumulators are merged in tile index order, so results
// are bit-identical for any worker count.
inline ParamGradients render_backward(const Camera& camera, const GaussianCloud& cloud,
                                      const Image& d_rgb, const Image* d_alpha = nullptr,
                                      const Vec3& background = Vec3::Zero(),
                                      const RenderSettings& settings = {}) {
    const auto frame = detail::make_frame(camera);
    if (d_rgb.width != frame.width || d_rgb.height != frame.height || d_rgb.channels != 3)
        throw ShapeError("render_backward: d_rgb must be H x W x 3 matching the camera");
    if (d_alpha && (d_alpha->width != frame.width || d_alpha->height != frame.height ||
                    d_alpha->channels != 1))
        throw ShapeError("render_backward: d_alpha must be H x W x 1 matching the camera");

    const auto scene = detail::prepare_scene(frame, cloud, settings);
    ParamGradients grads = ParamGradients::zeros_like(cloud);
    if (scene.splats.empty()) return grads;

    const bool cutoff = settings.cutoff_sigma > 0.0;
    const double power_floor = -0.5 * settings.cutoff_sigma * settings.cutoff_sigma;
    const std::size_t tile_count = scene.tile_lists.size();
    std::vector<std::vector<detail::Accum2D>> partials(tile_count);

    detail::parallel_for(tile_count, settings.workers, [&](std::size_t tile) {
        const auto& list = scene.tile_lists[tile];
        partials[tile].assign(list.size(), detail::Accum2D{});
        if (list.empty()) return;
        struct Contrib {
            int pos;        // index into the tile list
            double alpha;
            Vec2 v;         // cov2^{-1} * (pix - mean)
        };
        std::vector<Contrib> stack;
        const int tx = static_cast<int>(tile) % scene.tiles_x;
        const int ty = static_cast<int>(tile) / scene.tiles_x;
        const int x0 = tx * settings.tile_size, x1 = std::min(x0 + settings.tile_size, frame.width);
        const int y0 = ty * settings.tile_size, y1 = std::min(y0 + settings.tile_size, frame.height);
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                const Vec3 u(d_rgb.at(x, y, 0), d_rgb.at(x, y, 1), d_rgb.at(x, y, 2));
                const double ua = d_alpha ? d_alpha->at(x, y, 0) : 0.0;
                if (u.isZero(0.0) && ua == 0.0) continue;
                const Vec2 pix(x + 0.5, y + 0.5);

                // Replay the forward pass to collect contributions in order.
                stack.clear();
                double t = 1.0;
                for (std::size_t pos = 0; pos < list.size(); ++pos) {
                    const int idx = list[pos];
                    const Splat2D& sp = scene.splats[static_cast<std::size_t>(idx)];
                    const Vec2 d = pix - sp.mean_px;
                    const Vec2 v = scene.inv_cov2[static_cast<std::size_t>(idx)] * d;
                    const double power = -0.5 * d.dot(v);
                    if (cutoff && power < power_floor) continue;
                    const double a = sp.opacity * std::exp(power);
                    if (a < settings.alpha_threshold) continue;
                    stack.push_back({static_cast<int>(pos), a, v});
                    t *= 1.0 - a;
                    if (t < settings.transmittance_floor) break;
                }
                const double t_end = t;
                // dL/dC and dL/dA enter every splat through the same
                // (u . background - ua) * t_end term.
                const double tail = (u.dot(background) - ua) * t_end;

                // Back-to-front: suffix S collects contributions behind i.
                Vec3 suffix = Vec3::Zero();
                double t_next = t_end;
                for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
                    const double one_minus = 1.0 - it->alpha;
                    const double t_i = t_next / one_minus;
                    const int idx = list[static_cast<std::size_t>(it->pos)];
                    const Splat2D& sp = scene.splats[static_cast<std::size_t>(idx)];
                    const double d_alpha_i =
                        u.dot(sp.color) * t_i - (u.dot(suffix) + tail) / one_minus;
                    detail::Accum2D& a2 = partials[tile][static_cast<std::size_t>(it->pos)];
                    const double g = it->alpha / sp.opacity;  // exp(power)
                    a2.d_opacity += d_alpha_i * g;
                    const double d_power = d_alpha_i * it->alpha;
                    a2.d_mean += d_power * it->v;
                    a2.d_cov2 += (0.5 * d_power) * (it->v * it->v.transpose());
                    a2.d_color += (it->alpha * t_i) * u;
                    suffix += sp.color * (it->alpha * t_i);
                    t_next = t_i;
                }
            }
        }
    });

    // Deterministic merge: tile index order, then per-splat chain rule.
    std::vector<detail::Accum2D> total(scene.splats.size());
    for (std::size_t tile = 0; tile < tile_count; ++tile) {
        const auto& list = scene.tile_lists[tile];
        for (std::size_t pos = 0; pos < list.size(); ++pos)
            total[static_cast<std::size_t>(list[pos])] += partials[tile][pos];
    }
    detail::parallel_for(scene.splats.size(), settings.workers, [&](std::size_t i) {
        const int ci = scene.cloud_index[i];
        detail::chain_to_params(frame, cloud.splats[static_cast<std::size_t>(ci)], total[i],
                                grads.splats[static_cast<std::size_t>(ci)]);
    });
    return grads;
}

}  // namespace splat
