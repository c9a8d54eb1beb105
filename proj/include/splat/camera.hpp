#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "splat/detail/rng.hpp"
#include "splat/errors.hpp"
#include "splat/gaussian.hpp"

namespace splat {

inline constexpr double kDegToRad = std::numbers::pi / 180.0;

struct CameraIntrinsics {
    double fov_y_deg = 49.1;
    int width = 512;
    int height = 512;
    double near = 0.01;
    double far = 100.0;
};

// Orbit pose around the origin. Elevation is measured from the xy-plane with
// +z up: positive elevation places the camera above the object looking down.
struct OrbitSpec {
    double elevation_deg = 0.0;  // in [-90, 90]
    double azimuth_deg = 0.0;
    double radius = 2.0;
};

struct ProjectedPoint {
    Vec2 pixel = Vec2::Zero();
    double depth = 0.0;  // distance along the view axis
    bool clipped = false;
};

// Pinhole camera. Camera space is x-right, y-down, z-forward (right-handed);
// the world is +z-up right-handed. Square pixels, principal point centered.
struct Camera {
    Vec3 position = Vec3(2.0, 0.0, 0.0);
    Vec3 look_at = Vec3::Zero();
    Vec3 up_hint = Vec3(0.0, 0.0, 1.0);
    double fov_y_deg = 49.1;
    int width = 512;
    int height = 512;
    double near = 0.01;
    double far = 100.0;
    OrbitSpec orbit;         // populated by orbit_camera for serialization
    bool from_orbit = false;

    void validate() const {
        if (!(near > 0.0) || !(far > near))
            throw InvalidArgument("Camera: need 0 < near < far");
        if (width < 1 || height < 1) throw InvalidArgument("Camera: image must be >= 1x1");
        if ((position - look_at).squaredNorm() == 0.0)
            throw InvalidArgument("Camera: position and look_at coincide");
        if (!(fov_y_deg > 0.0) || !(fov_y_deg < 180.0))
            throw InvalidArgument("Camera: fov_y must lie in (0, 180) degrees");
    }

    double fy() const { return (height / 2.0) / std::tan(0.5 * fov_y_deg * kDegToRad); }
    double fx() const { return fy(); }
    double cx() const { return width / 2.0; }
    double cy() const { return height / 2.0; }

    Vec3 forward() const { return (look_at - position).normalized(); }

    // World-to-camera rotation; rows are the camera right/down/forward axes.
    Mat3 rotation() const {
        const Vec3 f = forward();
        Vec3 r = f.cross(up_hint);
        const double n = r.norm();
        if (n < 1e-12)
            throw InvalidArgument("Camera: up_hint is parallel to the viewing direction");
        r /= n;
        const Vec3 d = f.cross(r);
        Mat3 w;
        w.row(0) = r;
        w.row(1) = d;
        w.row(2) = f;
        return w;
    }

    Vec3 to_camera(const Vec3& p) const { return rotation() * (p - position); }

    ProjectedPoint project_point(const Vec3& p) const {
        const Vec3 t = to_camera(p);
        ProjectedPoint out;
        out.depth = t.z();
        if (t.z() < near || t.z() > far) {
            out.clipped = true;
            return out;
        }
        out.pixel = Vec2(fx() * t.x() / t.z() + cx(), fy() * t.y() / t.z() + cy());
        return out;
    }

    // Inverse of project_point at a known depth.
    Vec3 unproject(const Vec2& pixel, double depth) const {
        const Vec3 t((pixel.x() - cx()) / fx() * depth, (pixel.y() - cy()) / fy() * depth, depth);
        return rotation().transpose() * t + position;
    }

    bool same_pose(const Camera& o) const {
        return position == o.position && look_at == o.look_at && up_hint == o.up_hint &&
               fov_y_deg == o.fov_y_deg && width == o.width && height == o.height &&
               near == o.near && far == o.far;
    }
};

inline Camera orbit_camera(const OrbitSpec& spec, const CameraIntrinsics& intr = {}) {
    if (!(spec.radius > 0.0)) throw InvalidArgument("orbit_camera: radius must be > 0");
    if (spec.elevation_deg < -90.0 || spec.elevation_deg > 90.0)
        throw InvalidArgument("orbit_camera: elevation must lie in [-90, 90]");
    const double e = spec.elevation_deg * kDegToRad;
    const double a = spec.azimuth_deg * kDegToRad;
    Camera cam;
    cam.position = spec.radius * Vec3(std::cos(e) * std::cos(a), std::cos(e) * std::sin(a),
                                      std::sin(e));
    cam.look_at = Vec3::Zero();
    // At the poles the generic +z up hint degenerates; substitute the
    // horizontal continuity limit of the ring frame so the basis stays stable.
    if (spec.elevation_deg >= 90.0 - 1e-9)
        cam.up_hint = Vec3(-std::cos(a), -std::sin(a), 0.0);
    else if (spec.elevation_deg <= -90.0 + 1e-9)
        cam.up_hint = Vec3(std::cos(a), std::sin(a), 0.0);
    else
        cam.up_hint = Vec3(0.0, 0.0, 1.0);
    cam.fov_y_deg = intr.fov_y_deg;
    cam.width = intr.width;
    cam.height = intr.height;
    cam.near = intr.near;
    cam.far = intr.far;
    cam.orbit = spec;
    cam.from_orbit = true;
    cam.validate();
    return cam;
}

// The fixed texture-baking rig: 8 uniformly spaced azimuths at elevations
// {-45, 0, 45} plus the top and bottom poles — 26 views total.
inline std::vector<Camera> baking_view_set(double radius, const CameraIntrinsics& intr = {}) {
    if (!(radius > 0.0)) throw InvalidArgument("baking_view_set: radius must be > 0");
    std::vector<Camera> views;
    views.reserve(26);
    for (double elev : {-45.0, 0.0, 45.0})
        for (int i = 0; i < 8; ++i)
            views.push_back(orbit_camera({elev, i * 45.0, radius}, intr));
    views.push_back(orbit_camera({90.0, 0.0, radius}, intr));
    views.push_back(orbit_camera({-90.0, 0.0, radius}, intr));
    return views;
}

// Uniformly spaced azimuth ring at one elevation. The seed only rotates the
// ring's phase, so distinct seeds give azimuth sets that do not collide
// (training vs. held-out views).
inline std::vector<Camera> sweep_view_set(double elevation_deg, int n_views, double radius,
                                          std::uint64_t seed, const CameraIntrinsics& intr = {}) {
    if (n_views < 2) throw InvalidArgument("sweep_view_set: need at least 2 views");
    detail::Rng rng(seed);
    const double step = 360.0 / n_views;
    const double phase = rng.uniform(0.0, step);
    std::vector<Camera> views;
    views.reserve(static_cast<std::size_t>(n_views));
    for (int i = 0; i < n_views; ++i)
        views.push_back(orbit_camera({elevation_deg, phase + i * step, radius}, intr));
    return views;
}

}  // namespace splat
