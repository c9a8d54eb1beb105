#pragma once

// Mesh extraction from a gaussian cloud: a composited density field sampled
// over a blocked grid, a marching-cubes isosurface, mesh hygiene, and a
// chamfer-distance metric between triangle meshes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

#include "splat/detail/geometry.hpp"
#include "splat/detail/mc_tables.hpp"
#include "splat/detail/parallel.hpp"
#include "splat/detail/rng.hpp"
#include "splat/errors.hpp"
#include "splat/gaussian.hpp"

namespace splat {

// Scalar field sampled on an inclusive lattice over an axis-aligned box:
// point (i,j,k) sits at lo + (i,j,k) * (hi-lo)/(resolution-1), and
// values[(k*resolution + j)*resolution + i] holds its density.
struct DensityGrid {
    int resolution = 0;
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();
    std::vector<double> values;

    double at(int x, int y, int z) const {
        return values[static_cast<std::size_t>((z * resolution + y) * resolution + x)];
    }
    double& at(int x, int y, int z) {
        return values[static_cast<std::size_t>((z * resolution + y) * resolution + x)];
    }
    Vec3 spacing() const { return (hi - lo) / static_cast<double>(resolution - 1); }
    Vec3 world_point(int x, int y, int z) const {
        const Vec3 s = spacing();
        return Vec3(lo.x() + x * s.x(), lo.y() + y * s.y(), lo.z() + z * s.z());
    }
};

// Indexed triangle mesh in world coordinates. Normals are per-vertex when
// present. UVs are per-wedge (three entries per triangle, in triangle order):
// texture charts are assigned per triangle, so a vertex shared by two charts
// carries a different UV in each, which per-vertex storage cannot express.
struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<Vec3> normals;  // empty or vertices.size()
    std::vector<Vec2> uvs;      // empty or 3 * triangles.size()

    bool empty() const { return triangles.empty(); }
};

namespace detail {

// One splat prepared for density queries: inverse covariance (symmetric
// entries), realized opacity, and a conservative 3-sigma axis-aligned
// half-width used for block culling.
struct DensitySplat {
    Vec3 mean = Vec3::Zero();
    double i00 = 0, i01 = 0, i02 = 0, i11 = 0, i12 = 0, i22 = 0;
    double opacity = 0;
    Vec3 halfwidth = Vec3::Zero();  // 3 * sqrt(diag(Sigma)) per axis
};

// Inverse of a symmetric positive definite 3x3 via the adjugate. Kept as
// explicit scalar arithmetic so the evaluation order is pinned down.
inline DensitySplat make_density_splat(const SplatParams& params) {
    const RealizedSplat r = realize(params);
    const Mat3& m = r.cov.m;
    const double a = m(0, 0), b = m(0, 1), c = m(0, 2);
    const double d = m(1, 1), e = m(1, 2), f = m(2, 2);
    const double c00 = d * f - e * e;
    const double c01 = c * e - b * f;
    const double c02 = b * e - c * d;
    const double det = a * c00 + b * c01 + c * c02;
    if (!(det > 0.0) || !std::isfinite(det))
        throw InvalidArgument("density: splat covariance is not positive definite");
    const double inv_det = 1.0 / det;
    DensitySplat out;
    out.mean = r.mean;
    out.i00 = c00 * inv_det;
    out.i01 = c01 * inv_det;
    out.i02 = c02 * inv_det;
    out.i11 = (a * f - c * c) * inv_det;
    out.i12 = (b * c - a * e) * inv_det;
    out.i22 = (a * d - b * b) * inv_det;
    out.opacity = r.opacity;
    out.halfwidth = Vec3(3.0 * std::sqrt(a), 3.0 * std::sqrt(d), 3.0 * std::sqrt(f));
    return out;
}

inline std::vector<DensitySplat> make_density_splats(const GaussianCloud& cloud) {
    std::vector<DensitySplat> out;
    out.reserve(cloud.size());
    for (const SplatParams& p : cloud.splats) out.push_back(make_density_splat(p));
    return out;
}

inline double density_contribution(const DensitySplat& s, const Vec3& x) {
    const double rx = x.x() - s.mean.x();
    const double ry = x.y() - s.mean.y();
    const double rz = x.z() - s.mean.z();
    const double q = rx * (s.i00 * rx + s.i01 * ry + s.i02 * rz) +
                     ry * (s.i01 * rx + s.i11 * ry + s.i12 * rz) +
                     rz * (s.i02 * rx + s.i12 * ry + s.i22 * rz);
    return s.opacity * std::exp(-0.5 * q);
}

}  // namespace detail

// Composited density at a world point: sum over all splats, in cloud order,
// of opacity_i * exp(-1/2 (x-mu_i)^T Sigma_i^{-1} (x-mu_i)).
inline double density(const Vec3& x, const GaussianCloud& cloud) {
    double sum = 0.0;
    for (const SplatParams& p : cloud.splats)
        sum += detail::density_contribution(detail::make_density_splat(p), x);
    return sum;
}

// Default sampling box: bounding box of splat means expanded by three times
// the largest realized scale, so no level set of interest is clipped.
inline std::pair<Vec3, Vec3> default_grid_bounds(const GaussianCloud& cloud) {
    if (cloud.empty()) throw InvalidArgument("default_grid_bounds: empty cloud");
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    double max_scale = 0.0;
    for (const SplatParams& p : cloud.splats) {
        lo = lo.cwiseMin(p.position);
        hi = hi.cwiseMax(p.position);
        max_scale = std::max(max_scale, p.log_scale.array().exp().maxCoeff());
    }
    const Vec3 pad = Vec3::Constant(3.0 * max_scale);
    return {lo - pad, hi + pad};
}

// Density sampled over a (blocks*sub)^3 lattice, evaluated block by block.
// Each block only visits splats whose 3-sigma axis-aligned bound intersects
// the block padded by that same bound; anything culled lies at least six
// sigma away along some axis and contributes < exp(-18) per splat, far
// inside the 1e-4 agreement tolerance with the unblocked sum.
inline DensityGrid blocked_density_grid(const GaussianCloud& cloud, const Vec3& lo,
                                        const Vec3& hi, int blocks = 16, int sub = 8,
                                        int workers = 0) {
    if (blocks < 1 || sub < 1)
        throw InvalidArgument("blocked_density_grid: blocks and sub must be >= 1");
    if (!((hi - lo).minCoeff() > 0.0))
        throw InvalidArgument("blocked_density_grid: degenerate bounds");
    DensityGrid grid;
    grid.resolution = blocks * sub;
    if (grid.resolution < 2)
        throw InvalidArgument("blocked_density_grid: resolution must be >= 2");
    grid.lo = lo;
    grid.hi = hi;
    grid.values.assign(static_cast<std::size_t>(grid.resolution) * grid.resolution *
                           grid.resolution,
                       0.0);
    if (cloud.empty()) return grid;

    const std::vector<detail::DensitySplat> splats = detail::make_density_splats(cloud);
    const Vec3 step = grid.spacing();
    const int total_blocks = blocks * blocks * blocks;

    detail::parallel_for(total_blocks, workers, [&](int block) {
        const int bx = block % blocks;
        const int by = (block / blocks) % blocks;
        const int bz = block / (blocks * blocks);
        const int x0 = bx * sub, y0 = by * sub, z0 = bz * sub;
        // World-space box of the lattice points owned by this block.
        const Vec3 blo = grid.lo + Vec3(x0 * step.x(), y0 * step.y(), z0 * step.z());
        const Vec3 bhi = grid.lo + Vec3((x0 + sub - 1) * step.x(), (y0 + sub - 1) * step.y(),
                                        (z0 + sub - 1) * step.z());
        std::vector<const detail::DensitySplat*> local;
        for (const detail::DensitySplat& s : splats) {
            const Vec3 pad_lo = blo - 2.0 * s.halfwidth;
            const Vec3 pad_hi = bhi + 2.0 * s.halfwidth;
            if ((s.mean.array() >= pad_lo.array()).all() &&
                (s.mean.array() <= pad_hi.array()).all())
                local.push_back(&s);
        }
        if (local.empty()) return;
        for (int z = z0; z < z0 + sub; ++z)
            for (int y = y0; y < y0 + sub; ++y)
                for (int x = x0; x < x0 + sub; ++x) {
                    const Vec3 p = grid.world_point(x, y, z);
                    double sum = 0.0;
                    for (const detail::DensitySplat* s : local)
                        sum += detail::density_contribution(*s, p);
                    grid.at(x, y, z) = sum;
                }
    });
    return grid;
}

namespace detail {

// Global lattice key of a cube edge: the edge's axis (0=x,1=y,2=z) plus the
// lattice coordinate of its lower corner. Both cubes sharing an edge derive
// the same key, which is what welds their vertices together.
inline std::uint64_t edge_key(int axis, int x, int y, int z, int resolution) {
    const std::uint64_t r = static_cast<std::uint64_t>(resolution);
    return ((static_cast<std::uint64_t>(axis) * r + static_cast<std::uint64_t>(z)) * r +
            static_cast<std::uint64_t>(y)) *
               r +
           static_cast<std::uint64_t>(x);
}

}  // namespace detail

// Isosurface of the grid at the given threshold, via the 256-case triangle
// table with linear edge interpolation. Vertices are welded through lattice
// edge keys so the result is watertight wherever the field is; triangles are
// wound so normals point away from the dense interior (positive signed
// volume for closed surfaces). A grid entirely on one side of the threshold
// yields an empty mesh.
inline TriangleMesh marching_cubes(const DensityGrid& grid, double threshold,
                                   int workers = 0) {
    if (!(threshold > 0.0) || !std::isfinite(threshold))
        throw InvalidArgument("marching_cubes: threshold must be finite and > 0");
    const int res = grid.resolution;
    if (res < 2) return {};
    if (grid.values.size() !=
        static_cast<std::size_t>(res) * static_cast<std::size_t>(res) * static_cast<std::size_t>(res))
        throw ShapeError("marching_cubes: grid value count does not match resolution^3");

    struct Wedge {
        std::uint64_t key;
        Vec3 pos;
    };
    const int cells = res - 1;
    // Pass 1, parallel over z-slabs: classify cells and interpolate crossing
    // points. Each slab appends wedges in (y, x) cell order, three per
    // triangle, already wound for outward-facing normals.
    std::vector<std::vector<Wedge>> slabs(static_cast<std::size_t>(cells));
    detail::parallel_for(cells, workers, [&](int z) {
        std::vector<Wedge>& out = slabs[static_cast<std::size_t>(z)];
        std::array<double, 8> value{};
        std::array<Wedge, 12> edge{};
        for (int y = 0; y < cells; ++y)
            for (int x = 0; x < cells; ++x) {
                int cube = 0;
                for (int c = 0; c < 8; ++c) {
                    value[static_cast<std::size_t>(c)] =
                        grid.at(x + detail::kMcCorner[c][0], y + detail::kMcCorner[c][1],
                                z + detail::kMcCorner[c][2]);
                    if (value[static_cast<std::size_t>(c)] < threshold) cube |= 1 << c;
                }
                if (cube == 0 || cube == 255) continue;
                const std::int8_t* tri = detail::kMcTriTable[cube];
                // Interpolate each referenced edge once, low corner to high
                // corner along its axis so both incident cubes agree bitwise.
                std::uint32_t done = 0;
                for (int i = 0; tri[i] >= 0; ++i) {
                    const int e = tri[i];
                    if (done & (1u << e)) continue;
                    done |= 1u << e;
                    int ca = detail::kMcEdge[e][0], cb = detail::kMcEdge[e][1];
                    int axis = 0;
                    for (int a = 0; a < 3; ++a)
                        if (detail::kMcCorner[ca][a] != detail::kMcCorner[cb][a]) axis = a;
                    if (detail::kMcCorner[ca][axis] > detail::kMcCorner[cb][axis])
                        std::swap(ca, cb);
                    const double va = value[static_cast<std::size_t>(ca)];
                    const double vb = value[static_cast<std::size_t>(cb)];
                    const double t = (threshold - va) / (vb - va);
                    const Vec3 pa = grid.world_point(x + detail::kMcCorner[ca][0],
                                                     y + detail::kMcCorner[ca][1],
                                                     z + detail::kMcCorner[ca][2]);
                    const Vec3 pb = grid.world_point(x + detail::kMcCorner[cb][0],
                                                     y + detail::kMcCorner[cb][1],
                                                     z + detail::kMcCorner[cb][2]);
                    edge[static_cast<std::size_t>(e)].key = detail::edge_key(
                        axis, x + detail::kMcCorner[ca][0], y + detail::kMcCorner[ca][1],
                        z + detail::kMcCorner[ca][2], res);
                    edge[static_cast<std::size_t>(e)].pos = pa + t * (pb - pa);
                }
                // The raw table winds toward the dense side under our
                // "below threshold" bit convention; emit reversed.
                for (int i = 0; tri[i] >= 0; i += 3) {
                    out.push_back(edge[static_cast<std::size_t>(tri[i])]);
                    out.push_back(edge[static_cast<std::size_t>(tri[i + 2])]);
                    out.push_back(edge[static_cast<std::size_t>(tri[i + 1])]);
                }
            }
    });

    // Pass 2, sequential in slab order: assign vertex indices on first use of
    // each edge key. Output is identical for any worker count.
    TriangleMesh mesh;
    std::unordered_map<std::uint64_t, int> index_of;
    std::array<int, 3> tri{};
    int filled = 0;
    for (const std::vector<Wedge>& slab : slabs)
        for (const Wedge& w : slab) {
            auto [it, inserted] = index_of.try_emplace(w.key, static_cast<int>(mesh.vertices.size()));
            if (inserted) mesh.vertices.push_back(w.pos);
            tri[static_cast<std::size_t>(filled++)] = it->second;
            if (filled == 3) {
                mesh.triangles.push_back(tri);
                filled = 0;
            }
        }
    return mesh;
}

// Area-weighted per-vertex normals (cross-product accumulation).
inline void recompute_vertex_normals(TriangleMesh& mesh) {
    mesh.normals.assign(mesh.vertices.size(), Vec3::Zero());
    for (const auto& t : mesh.triangles) {
        const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
        const Vec3& b = mesh.vertices[static_cast<std::size_t>(t[1])];
        const Vec3& c = mesh.vertices[static_cast<std::size_t>(t[2])];
        const Vec3 n = (b - a).cross(c - a);  // magnitude = 2 * area
        for (int k = 0; k < 3; ++k) mesh.normals[static_cast<std::size_t>(t[static_cast<std::size_t>(k)])] += n;
    }
    for (Vec3& n : mesh.normals) {
        const double len = n.norm();
        n = len > 0.0 ? Vec3(n / len) : Vec3(0, 0, 1);
    }
}

// Signed volume via the divergence theorem; positive for closed meshes wound
// outward around their interior.
inline double mesh_signed_volume(const TriangleMesh& mesh) {
    double six_v = 0.0;
    for (const auto& t : mesh.triangles) {
        const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
        const Vec3& b = mesh.vertices[static_cast<std::size_t>(t[1])];
        const Vec3& c = mesh.vertices[static_cast<std::size_t>(t[2])];
        six_v += a.dot(b.cross(c));
    }
    return six_v / 6.0;
}

inline double mesh_surface_area(const TriangleMesh& mesh) {
    double area = 0.0;
    for (const auto& t : mesh.triangles) {
        const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
        const Vec3& b = mesh.vertices[static_cast<std::size_t>(t[1])];
        const Vec3& c = mesh.vertices[static_cast<std::size_t>(t[2])];
        area += 0.5 * (b - a).cross(c - a).norm();
    }
    return area;
}

// Mesh hygiene: weld near-coincident vertices (tolerance 1e-6 of the bounding
// box diagonal), drop zero-area triangles, remove connected components with
// fewer than min_component_fraction of all triangles, drop unreferenced
// vertices, and recompute normals. Wedge UVs follow their triangles.
inline TriangleMesh mesh_cleanup(const TriangleMesh& mesh,
                                 double min_component_fraction = 0.1) {
    if (min_component_fraction < 0.0 || min_component_fraction > 1.0)
        throw InvalidArgument("mesh_cleanup: min_component_fraction must be in [0,1]");
    if (mesh.triangles.empty()) return {};
    const bool has_uvs = !mesh.uvs.empty();
    if (has_uvs && mesh.uvs.size() != 3 * mesh.triangles.size())
        throw ShapeError("mesh_cleanup: wedge UV count must be 3 * triangle count");

    // Positional weld: map each vertex to the first one within tolerance,
    // found through a quantized spatial hash (sequential, deterministic).
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const Vec3& v : mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const double tol = 1e-6 * (hi - lo).norm();
    std::vector<int> remap(mesh.vertices.size());
    if (tol > 0.0) {
        const double inv_cell = 1.0 / tol;
        std::unordered_map<std::uint64_t, std::vector<int>> cells;
        auto cell_key = [](std::int64_t cx, std::int64_t cy, std::int64_t cz) {
            const std::uint64_t m = (1ull << 21) - 1;
            return ((static_cast<std::uint64_t>(cx) & m) << 42) |
                   ((static_cast<std::uint64_t>(cy) & m) << 21) |
                   (static_cast<std::uint64_t>(cz) & m);
        };
        for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
            const Vec3& p = mesh.vertices[i];
            const std::int64_t cx = static_cast<std::int64_t>(std::floor(p.x() * inv_cell));
            const std::int64_t cy = static_cast<std::int64_t>(std::floor(p.y() * inv_cell));
            const std::int64_t cz = static_cast<std::int64_t>(std::floor(p.z() * inv_cell));
            int target = -1;
            for (std::int64_t dz = -1; dz <= 1 && target < 0; ++dz)
                for (std::int64_t dy = -1; dy <= 1 && target < 0; ++dy)
                    for (std::int64_t dx = -1; dx <= 1 && target < 0; ++dx) {
                        auto it = cells.find(cell_key(cx + dx, cy + dy, cz + dz));
                        if (it == cells.end()) continue;
                        for (int j : it->second)
                            if ((mesh.vertices[static_cast<std::size_t>(j)] - p).norm() <= tol) {
                                target = j;
                                break;
                            }
                    }
            if (target < 0) {
                target = static_cast<int>(i);
                cells[cell_key(cx, cy, cz)].push_back(target);
            }
            remap[i] = target;
        }
    } else {
        for (std::size_t i = 0; i < mesh.vertices.size(); ++i) remap[i] = static_cast<int>(i);
    }

    // Drop degenerate triangles (repeated indices or negligible area).
    const double area_floor = 1e-14 * (hi - lo).squaredNorm();
    std::vector<std::array<int, 3>> tris;
    std::vector<std::size_t> kept_src;  // original triangle index, for UVs
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
        std::array<int, 3> t{remap[static_cast<std::size_t>(mesh.triangles[i][0])],
                             remap[static_cast<std::size_t>(mesh.triangles[i][1])],
                             remap[static_cast<std::size_t>(mesh.triangles[i][2])]};
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
        const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
        const Vec3& b = mesh.vertices[static_cast<std::size_t>(t[1])];
        const Vec3& c = mesh.vertices[static_cast<std::size_t>(t[2])];
        if (0.5 * (b - a).cross(c - a).norm() <= area_floor) continue;
        tris.push_back(t);
        kept_src.push_back(i);
    }
    if (tris.empty()) return {};

    // Connected components over shared vertices (union-find).
    std::vector<int> parent(mesh.vertices.size());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
    auto find = [&](int v) {
        while (parent[static_cast<std::size_t>(v)] != v) {
            parent[static_cast<std::size_t>(v)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
            v = parent[static_cast<std::size_t>(v)];
        }
        return v;
    };
    for (const auto& t : tris) {
        const int r0 = find(t[0]);
        const int r1 = find(t[1]);
        parent[static_cast<std::size_t>(r1)] = r0;
        const int r2 = find(t[2]);
        parent[static_cast<std::size_t>(r2)] = find(t[0]);
    }
    std::unordered_map<int, std::size_t> component_tris;
    for (const auto& t : tris) component_tris[find(t[0])]++;
    const double min_tris = min_component_fraction * static_cast<double>(tris.size());

    TriangleMesh out;
    std::vector<int> vertex_map(mesh.vertices.size(), -1);
    for (std::size_t i = 0; i < tris.size(); ++i) {
        const auto& t = tris[i];
        if (static_cast<double>(component_tris[find(t[0])]) < min_tris) continue;
        std::array<int, 3> nt{};
        for (int k = 0; k < 3; ++k) {
            int& slot = vertex_map[static_cast<std::size_t>(t[static_cast<std::size_t>(k)])];
            if (slot < 0) {
                slot = static_cast<int>(out.vertices.size());
                out.vertices.push_back(mesh.vertices[static_cast<std::size_t>(t[static_cast<std::size_t>(k)])]);
            }
            nt[static_cast<std::size_t>(k)] = slot;
        }
        out.triangles.push_back(nt);
        if (has_uvs)
            for (int k = 0; k < 3; ++k)
                out.uvs.push_back(mesh.uvs[3 * kept_src[i] + static_cast<std::size_t>(k)]);
    }
    if (out.triangles.empty()) return {};
    recompute_vertex_normals(out);
    return out;
}

namespace detail {

// Cumulative-area table for uniform surface sampling.
struct SurfaceSampler {
    const TriangleMesh& mesh;
    std::vector<double> cumulative;

    explicit SurfaceSampler(const TriangleMesh& m) : mesh(m) {
        cumulative.reserve(m.triangles.size());
        double total = 0.0;
        for (const auto& t : m.triangles) {
            const Vec3& a = m.vertices[static_cast<std::size_t>(t[0])];
            const Vec3& b = m.vertices[static_cast<std::size_t>(t[1])];
            const Vec3& c = m.vertices[static_cast<std::size_t>(t[2])];
            total += 0.5 * (b - a).cross(c - a).norm();
            cumulative.push_back(total);
        }
        if (!(total > 0.0))
            throw InvalidArgument("surface sampling: mesh has zero total area");
    }

    Vec3 sample(Rng& rng) const {
        const double u = rng.uniform() * cumulative.back();
        const std::size_t idx = static_cast<std::size_t>(
            std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
        const auto& t = mesh.triangles[std::min(idx, mesh.triangles.size() - 1)];
        // Square-root warp gives uniform barycentric coordinates.
        const double su = std::sqrt(rng.uniform());
        const double v = rng.uniform();
        const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
        const Vec3& b = mesh.vertices[static_cast<std::size_t>(t[1])];
        const Vec3& c = mesh.vertices[static_cast<std::size_t>(t[2])];
        return (1.0 - su) * a + su * (1.0 - v) * b + su * v * c;
    }
};

}  // namespace detail

// Symmetric chamfer distance: mean distance from points sampled uniformly on
// one surface to the other surface, averaged over both directions.
// Deterministic for a given seed.
inline double chamfer_distance(const TriangleMesh& a, const TriangleMesh& b,
                               int samples = 20000, std::uint64_t seed = 0x5eed) {
    if (a.triangles.empty() || b.triangles.empty())
        throw InvalidArgument("chamfer_distance: both meshes must be non-empty");
    if (samples < 1) throw InvalidArgument("chamfer_distance: samples must be >= 1");
    // Each direction reseeds, so swapping the arguments computes the exact
    // same two one-way terms: the metric is symmetric bit-for-bit.
    auto one_way = [&](const TriangleMesh& from, const TriangleMesh& to) {
        detail::Rng rng(seed);
        const detail::SurfaceSampler sampler(from);
        const detail::TriangleBvh bvh(to.vertices, to.triangles);
        double sum = 0.0;
        for (int i = 0; i < samples; ++i) sum += bvh.distance(sampler.sample(rng));
        return sum / static_cast<double>(samples);
    };
    return 0.5 * (one_way(a, b) + one_way(b, a));
}

}  // namespace splat
