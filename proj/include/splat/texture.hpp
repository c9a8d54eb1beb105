#pragma once

// Texturing of extracted meshes: per-triangle chart unwrap, multi-view color
// back-projection from splat renders (stage 1), plain textured rendering, and
// perturb-and-restore texture refinement (stage 2).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "splat/camera.hpp"
#include "splat/errors.hpp"
#include "splat/image.hpp"
#include "splat/meshing.hpp"
#include "splat/rasterizer.hpp"
#include "splat/trainer.hpp"

namespace splat {

// Square texel region (interior of a chart cell, gutters excluded).
struct ChartRect {
    int x = 0;
    int y = 0;
    int size = 0;
};

// Texture atlas in image layout: row 0 is the top of the stored picture and
// corresponds to v near 1 (vt coordinates grow upward from the bottom).
struct TextureAtlas {
    int width = 0;
    int height = 0;
    Image rgb;                        // width x height x 3 in [0,1]
    std::vector<std::uint8_t> coverage;  // per texel, 1 once any view baked it
    std::vector<ChartRect> charts;    // one per triangle, in triangle order

    bool empty() const { return width == 0 || height == 0; }
};

// ---------------------------------------------------------------------------
// UV unwrap: one right-triangle chart per mesh triangle
// ---------------------------------------------------------------------------

// Assigns every triangle its own square cell on a uniform grid, with wedge
// UVs inset so bilinear lookups from inside the triangle never leave the
// cell interior. Gutters separate the interiors of neighboring cells. No
// seam continuity is attempted: charts are independent by design.
inline std::pair<TriangleMesh, TextureAtlas> uv_unwrap(const TriangleMesh& mesh,
                                                       int atlas_size = 512,
                                                       int gutter = 2) {
    if (mesh.triangles.empty()) throw InvalidArgument("uv_unwrap: empty mesh");
    if (atlas_size < 1 || gutter < 1)
        throw InvalidArgument("uv_unwrap: atlas_size and gutter must be >= 1");
    const int tri_count = static_cast<int>(mesh.triangles.size());
    const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(tri_count))));
    const int cell = atlas_size / side;
    const int min_cell = 2 * gutter + 2;  // at least a 2x2 texel interior
    if (cell < min_cell)
        throw InvalidArgument("uv_unwrap: atlas size " + std::to_string(atlas_size) +
                              " too small for " + std::to_string(tri_count) +
                              " triangles; need at least " + std::to_string(side * min_cell));

    TriangleMesh out = mesh;
    out.uvs.clear();
    out.uvs.reserve(3 * mesh.triangles.size());
    TextureAtlas atlas;
    atlas.width = atlas_size;
    atlas.height = atlas_size;
    atlas.rgb = Image(atlas_size, atlas_size, 3, 0.5);
    atlas.coverage.assign(static_cast<std::size_t>(atlas_size) * atlas_size, 0);
    atlas.charts.reserve(mesh.triangles.size());

    const double w = atlas_size, h = atlas_size;
    for (int t = 0; t < tri_count; ++t) {
        const int cx = (t % side) * cell + gutter;
        const int cy = (t / side) * cell + gutter;
        const int inner = cell - 2 * gutter;
        atlas.charts.push_back({cx, cy, inner});
        // Texel-center pixel coordinates of the chart corners; the triangle
        // occupies the lower-left half of the interior square in UV space.
        const double x0 = cx + 0.5, x1 = cx + inner - 0.5;
        const double y0 = cy + 0.5, y1 = cy + inner - 0.5;
        out.uvs.push_back(Vec2(x0 / w, 1.0 - y1 / h));
        out.uvs.push_back(Vec2(x1 / w, 1.0 - y1 / h));
        out.uvs.push_back(Vec2(x0 / w, 1.0 - y0 / h));
    }
    return {std::move(out), std::move(atlas)};
}

// ---------------------------------------------------------------------------
// Mesh rasterization (geometry buffer)
// ---------------------------------------------------------------------------

// Per-pixel visibility of a mesh: nearest front-facing triangle and its
// perspective-correct barycentric coordinates.
struct MeshGBuffer {
    int width = 0;
    int height = 0;
    std::vector<int> tri;      // -1 where no triangle covers the pixel
    std::vector<Vec3> bary;
    std::vector<double> depth;

    int at(int x, int y) const { return tri[static_cast<std::size_t>(y) * width + x]; }
};

// Depth-buffered scanline rasterization at pixel centers (x+0.5, y+0.5).
// Back-facing triangles are skipped; triangles crossing the near plane are
// dropped rather than clipped (extraction-scale meshes sit well in front of
// orbit cameras). Sequential over triangles, so ties resolve identically on
// every run.
inline MeshGBuffer rasterize_mesh(const TriangleMesh& mesh, const Camera& camera) {
    camera.validate();
    MeshGBuffer g;
    g.width = camera.width;
    g.height = camera.height;
    const std::size_t n = static_cast<std::size_t>(camera.width) * camera.height;
    g.tri.assign(n, -1);
    g.bary.assign(n, Vec3::Zero());
    g.depth.assign(n, std::numeric_limits<double>::infinity());

    const Mat3 rot = camera.rotation();
    const double fx = camera.fx(), fy = camera.fy(), cx = camera.cx(), cy = camera.cy();
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const Vec3& a = mesh.vertices[static_cast<std::size_t>(tri[0])];
        const Vec3& b = mesh.vertices[static_cast<std::size_t>(tri[1])];
        const Vec3& c = mesh.vertices[static_cast<std::size_t>(tri[2])];
        const Vec3 face_n = (b - a).cross(c - a);
        if (face_n.dot(camera.position - a) <= 0.0) continue;  // back-facing

        const Vec3 qa = rot * (a - camera.position);
        const Vec3 qb = rot * (b - camera.position);
        const Vec3 qc = rot * (c - camera.position);
        if (qa.z() < camera.near || qb.z() < camera.near || qc.z() < camera.near) continue;

        const Vec2 pa(fx * qa.x() / qa.z() + cx, fy * qa.y() / qa.z() + cy);
        const Vec2 pb(fx * qb.x() / qb.z() + cx, fy * qb.y() / qb.z() + cy);
        const Vec2 pc(fx * qc.x() / qc.z() + cx, fy * qc.y() / qc.z() + cy);
        const double area = (pb.x() - pa.x()) * (pc.y() - pa.y()) -
                            (pb.y() - pa.y()) * (pc.x() - pa.x());
        if (std::abs(area) < 1e-12) continue;
        const double sign = area > 0.0 ? 1.0 : -1.0;
        const double inv_area = 1.0 / std::abs(area);

        const double min_x = std::min({pa.x(), pb.x(), pc.x()});
        const double max_x = std::max({pa.x(), pb.x(), pc.x()});
        const double min_y = std::min({pa.y(), pb.y(), pc.y()});
        const double max_y = std::max({pa.y(), pb.y(), pc.y()});
        const int x_lo = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
        const int x_hi = std::min(camera.width - 1, static_cast<int>(std::ceil(max_x - 0.5)));
        const int y_lo = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
        const int y_hi = std::min(camera.height - 1, static_cast<int>(std::ceil(max_y - 0.5)));

        auto edge = [](const Vec2& u, const Vec2& v, double px, double py) {
            return (v.x() - u.x()) * (py - u.y()) - (v.y() - u.y()) * (px - u.x());
        };
        for (int y = y_lo; y <= y_hi; ++y)
            for (int x = x_lo; x <= x_hi; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                const double w0 = sign * edge(pb, pc, px, py);
                const double w1 = sign * edge(pc, pa, px, py);
                const double w2 = sign * edge(pa, pb, px, py);
                if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
                // Perspective correction: interpolate 1/z linearly in screen
                // space and renormalize the barycentric weights by depth.
                const double u0 = w0 * inv_area / qa.z();
                const double u1 = w1 * inv_area / qb.z();
                const double u2 = w2 * inv_area / qc.z();
                const double inv_z = u0 + u1 + u2;
                const double z = 1.0 / inv_z;
                const std::size_t idx = static_cast<std::size_t>(y) * camera.width + x;
                if (z >= g.depth[idx]) continue;
                g.depth[idx] = z;
                g.tri[idx] = static_cast<int>(t);
                g.bary[idx] = Vec3(u0 * z, u1 * z, u2 * z);
            }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Atlas sampling
// ---------------------------------------------------------------------------

struct TexelTap {
    int x = 0;
    int y = 0;
    double weight = 0.0;
};

// The four bilinear taps for a UV lookup; texel (i,j) has its center at
// u=(i+0.5)/W, v=1-(j+0.5)/H. Taps are clamped to the atlas edges.
inline std::array<TexelTap, 4> bilinear_taps(const TextureAtlas& atlas, const Vec2& uv) {
    const double x = uv.x() * atlas.width - 0.5;
    const double y = (1.0 - uv.y()) * atlas.height - 0.5;
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    auto cl = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
    return {{{cl(x0, atlas.width), cl(y0, atlas.height), (1 - fx) * (1 - fy)},
             {cl(x0 + 1, atlas.width), cl(y0, atlas.height), fx * (1 - fy)},
             {cl(x0, atlas.width), cl(y0 + 1, atlas.height), (1 - fx) * fy},
             {cl(x0 + 1, atlas.width), cl(y0 + 1, atlas.height), fx * fy}}};
}

inline Vec3 sample_atlas(const TextureAtlas& atlas, const Vec2& uv) {
    Vec3 c = Vec3::Zero();
    for (const TexelTap& tap : bilinear_taps(atlas, uv))
        for (int ch = 0; ch < 3; ++ch) c[ch] += tap.weight * atlas.rgb.at(tap.x, tap.y, ch);
    return c;
}

namespace detail {

inline Vec2 interpolate_uv(const TriangleMesh& mesh, int tri, const Vec3& bary) {
    const std::size_t base = 3 * static_cast<std::size_t>(tri);
    return bary[0] * mesh.uvs[base] + bary[1] * mesh.uvs[base + 1] + bary[2] * mesh.uvs[base + 2];
}

inline void require_wedge_uvs(const TriangleMesh& mesh, const char* who) {
    if (mesh.uvs.size() != 3 * mesh.triangles.size())
        throw InvalidArgument(std::string(who) + ": mesh has no per-wedge UVs (run uv_unwrap)");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage-1 bake: back-project splat renders onto the atlas
// ---------------------------------------------------------------------------

// Renders the cloud from every view and, for each pixel that sees a
// front-facing unoccluded triangle, writes the pixel's object color to the
// texel under the hit point. Writes are averaged with view-to-normal cosine
// weights. The object color is recovered by un-compositing the known
// background from the rendered RGBA (pixels with alpha <= 0.5 are mostly
// background and are skipped); a solid-color cloud therefore bakes to that
// color exactly, independent of the background. Views are processed in
// order, so the result is identical on every run.
inline TextureAtlas bake_texture(const TriangleMesh& mesh, const TextureAtlas& layout,
                                 const GaussianCloud& cloud, std::span<const Camera> views,
                                 const Vec3& background = Vec3(1, 1, 1),
                                 const RenderSettings& settings = {}) {
    detail::require_wedge_uvs(mesh, "bake_texture");
    if (views.empty()) throw InvalidArgument("bake_texture: no views");
    if (layout.empty()) throw InvalidArgument("bake_texture: atlas layout is empty");

    TextureAtlas atlas = layout;
    const std::size_t texels = static_cast<std::size_t>(atlas.width) * atlas.height;
    std::vector<double> weight_sum(texels, 0.0);
    std::vector<Vec3> color_sum(texels, Vec3::Zero());

    std::vector<Vec3> face_normal(mesh.triangles.size());
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        face_normal[t] = (mesh.vertices[static_cast<std::size_t>(tri[1])] -
                          mesh.vertices[static_cast<std::size_t>(tri[0])])
                             .cross(mesh.vertices[static_cast<std::size_t>(tri[2])] -
                                    mesh.vertices[static_cast<std::size_t>(tri[0])])
                             .normalized();
    }

    for (const Camera& camera : views) {
        const RenderOutput shot = render(camera, cloud, background, settings);
        const MeshGBuffer g = rasterize_mesh(mesh, camera);
        for (int y = 0; y < g.height; ++y)
            for (int x = 0; x < g.width; ++x) {
                const std::size_t idx = static_cast<std::size_t>(y) * g.width + x;
                const int t = g.tri[idx];
                if (t < 0) continue;
                const double alpha = shot.alpha.at(x, y, 0);
                if (alpha <= 0.5) continue;
                // Hit point and cosine weight.
                const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
                const Vec3 p = g.bary[idx][0] * mesh.vertices[static_cast<std::size_t>(tri[0])] +
                               g.bary[idx][1] * mesh.vertices[static_cast<std::size_t>(tri[1])] +
                               g.bary[idx][2] * mesh.vertices[static_cast<std::size_t>(tri[2])];
                const double cosine =
                    face_normal[static_cast<std::size_t>(t)].dot((camera.position - p).normalized());
                if (cosine <= 1e-6) continue;
                Vec3 color;
                for (int ch = 0; ch < 3; ++ch)
                    color[ch] = std::clamp(
                        (shot.rgb.at(x, y, ch) - (1.0 - alpha) * background[ch]) / alpha, 0.0,
                        1.0);
                const Vec2 uv = detail::interpolate_uv(mesh, t, g.bary[idx]);
                const int tx = std::clamp(static_cast<int>(std::floor(uv.x() * atlas.width)), 0,
                                          atlas.width - 1);
                const int ty = std::clamp(
                    static_cast<int>(std::floor((1.0 - uv.y()) * atlas.height)), 0,
                    atlas.height - 1);
                const std::size_t texel = static_cast<std::size_t>(ty) * atlas.width + tx;
                weight_sum[texel] += cosine;
                color_sum[texel] += cosine * color;
            }
    }

    for (std::size_t i = 0; i < texels; ++i) {
        if (weight_sum[i] > 0.0) {
            const Vec3 c = color_sum[i] / weight_sum[i];
            for (int ch = 0; ch < 3; ++ch)
                atlas.rgb.data[3 * i + static_cast<std::size_t>(ch)] = c[ch];
            atlas.coverage[i] = 1;
        }
    }
    return atlas;
}

// ---------------------------------------------------------------------------
// Textured mesh rendering
// ---------------------------------------------------------------------------

// Plain textured-triangle render: bilinear atlas lookup at the interpolated
// UV, background elsewhere. Returns RGBA with alpha = 1 on hits.
inline Image render_mesh(const TriangleMesh& mesh, const TextureAtlas& atlas,
                         const MeshGBuffer& g, const Vec3& background = Vec3(1, 1, 1)) {
    detail::require_wedge_uvs(mesh, "render_mesh");
    if (atlas.empty()) throw InvalidArgument("render_mesh: empty atlas");
    Image out(g.width, g.height, 4);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * g.width + x;
            const int t = g.tri[idx];
            if (t < 0) {
                for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = background[ch];
                continue;
            }
            const Vec3 c = sample_atlas(atlas, detail::interpolate_uv(mesh, t, g.bary[idx]));
            for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = c[ch];
            out.at(x, y, 3) = 1.0;
        }
    return out;
}

inline Image render_mesh(const TriangleMesh& mesh, const TextureAtlas& atlas,
                         const Camera& camera, const Vec3& background = Vec3(1, 1, 1)) {
    return render_mesh(mesh, atlas, rasterize_mesh(mesh, camera), background);
}

// ---------------------------------------------------------------------------
// Stage-2 refinement
// ---------------------------------------------------------------------------

struct TextureLoss {
    double mse = 0.0;        // mean squared error over covered pixels
    int pixel_count = 0;     // pixels with a triangle hit
    Image d_atlas;           // gradient w.r.t. atlas texels (W x H x 3)
    Image precond;           // diagonal curvature, same shape (for scaling)
};

// MSE between the textured render and a target image, restricted to pixels
// that hit the mesh, with the exact gradient w.r.t. the atlas texels: each
// pixel distributes its error over its four bilinear taps.
inline TextureLoss texture_mse_gradient(const TriangleMesh& mesh, const TextureAtlas& atlas,
                                        const MeshGBuffer& g, const Image& target) {
    detail::require_wedge_uvs(mesh, "texture_mse_gradient");
    if (target.width != g.width || target.height != g.height || target.channels < 3)
        throw ShapeError("texture_mse_gradient: target image shape mismatch");
    TextureLoss loss;
    loss.d_atlas = Image(atlas.width, atlas.height, 3, 0.0);
    loss.precond = Image(atlas.width, atlas.height, 3, 0.0);

    struct PixelTerm {
        std::array<TexelTap, 4> taps;
        Vec3 residual;
    };
    std::vector<PixelTerm> terms;
    double sq_sum = 0.0;
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * g.width + x;
            const int t = g.tri[idx];
            if (t < 0) continue;
            PixelTerm term;
            term.taps = bilinear_taps(atlas, detail::interpolate_uv(mesh, t, g.bary[idx]));
            Vec3 c = Vec3::Zero();
            for (const TexelTap& tap : term.taps)
                for (int ch = 0; ch < 3; ++ch) c[ch] += tap.weight * atlas.rgb.at(tap.x, tap.y, ch);
            for (int ch = 0; ch < 3; ++ch) term.residual[ch] = c[ch] - target.at(x, y, ch);
            sq_sum += term.residual.squaredNorm();
            terms.push_back(term);
            ++loss.pixel_count;
        }
    if (loss.pixel_count == 0) return loss;

    const double inv_n = 1.0 / (3.0 * static_cast<double>(loss.pixel_count));
    loss.mse = sq_sum * inv_n;
    for (const PixelTerm& term : terms)
        for (const TexelTap& tap : term.taps)
            for (int ch = 0; ch < 3; ++ch) {
                loss.d_atlas.at(tap.x, tap.y, ch) +=
                    2.0 * inv_n * tap.weight * term.residual[ch];
                loss.precond.at(tap.x, tap.y, ch) += 2.0 * inv_n * tap.weight * tap.weight;
            }
    return loss;
}

inline TextureLoss texture_mse_gradient(const TriangleMesh& mesh, const TextureAtlas& atlas,
                                        const Camera& camera, const Image& target) {
    return texture_mse_gradient(mesh, atlas, rasterize_mesh(mesh, camera), target);
}

struct RefineConfig {
    int steps = 50;
    double noise_level = 0.2;    // initial perturbation sigma, decayed linearly
    double learning_rate = 0.5;  // step scale on the preconditioned gradient
    std::uint64_t seed = 0;
    Vec3 background = Vec3(1, 1, 1);
};

// Perturb-and-restore refinement. Each step renders the textured mesh from a
// random pose, perturbs the render with decaying Gaussian pixel noise, asks
// the guidance source to restore a clean target, and takes a preconditioned
// MSE step on the texels under the rendered footprint. Texels no render
// touches are never modified; all texels stay in [0,1].
inline TextureAtlas refine_texture(const TriangleMesh& mesh, const TextureAtlas& stage1,
                                   GuidanceSource& guidance, std::span<const Camera> poses,
                                   const RefineConfig& config = {}) {
    detail::require_wedge_uvs(mesh, "refine_texture");
    if (poses.empty()) throw InvalidArgument("refine_texture: at least one pose required");
    if (config.steps < 0 || config.noise_level < 0 || config.learning_rate <= 0)
        throw InvalidArgument("refine_texture: invalid config");

    TextureAtlas atlas = stage1;
    detail::Rng rng(config.seed);
    for (int step = 0; step < config.steps; ++step) {
        const Camera& camera =
            poses[static_cast<std::size_t>(rng.uniform_index(poses.size()))];
        const MeshGBuffer g = rasterize_mesh(mesh, camera);
        const Image rendered4 = render_mesh(mesh, atlas, g, config.background);
        const double level =
            config.noise_level * (1.0 - static_cast<double>(step) / config.steps);

        Image noisy(rendered4.width, rendered4.height, 3);
        for (int y = 0; y < noisy.height; ++y)
            for (int x = 0; x < noisy.width; ++x)
                for (int ch = 0; ch < 3; ++ch)
                    noisy.at(x, y, ch) = std::clamp(
                        rendered4.at(x, y, ch) + level * rng.normal(), 0.0, 1.0);

        const Image target = guidance.restore(noisy, camera, level);
        const TextureLoss loss = texture_mse_gradient(mesh, atlas, g, target);
        if (loss.pixel_count == 0) continue;
        for (std::size_t i = 0; i < atlas.rgb.data.size(); ++i) {
            const double h = loss.precond.data[i];
            if (h <= 0.0) continue;  // texel outside every footprint this step
            atlas.rgb.data[i] = std::clamp(
                atlas.rgb.data[i] - config.learning_rate * loss.d_atlas.data[i] / h, 0.0, 1.0);
        }
    }
    return atlas;
}

}  // namespace splat
