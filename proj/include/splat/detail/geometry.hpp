#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace splat::detail {

using Vec3g = Eigen::Vector3d;

// Closest point on triangle abc to p (Ericson, "Real-Time Collision
// Detection" §5.1.5): classify p against the vertex/edge/face Voronoi regions.
inline Vec3g closest_point_on_triangle(const Vec3g& p, const Vec3g& a, const Vec3g& b,
                                       const Vec3g& c) {
    const Vec3g ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    const Vec3g bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

    const Vec3g cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);

    const double denom = va + vb + vc;
    if (denom <= 0.0) return a;  // degenerate triangle: fall back to a vertex
    return a + (vb / denom) * ab + (vc / denom) * ac;
}

// Median-split bounding-volume hierarchy for point-to-surface distances.
class TriangleBvh {
public:
    TriangleBvh(const std::vector<Vec3g>& vertices,
                const std::vector<std::array<int, 3>>& triangles)
        : vertices_(vertices), triangles_(triangles) {
        tri_order_.resize(triangles.size());
        for (std::size_t i = 0; i < triangles.size(); ++i) tri_order_[i] = static_cast<int>(i);
        if (!triangles.empty()) build(0, static_cast<int>(triangles.size()));
    }

    double distance(const Vec3g& p) const {
        double best2 = std::numeric_limits<double>::infinity();
        if (!nodes_.empty()) query(0, p, best2);
        return std::sqrt(best2);
    }

private:
    struct Node {
        Vec3g lo, hi;
        int left = -1, right = -1;  // children, or leaf when left < 0
        int begin = 0, end = 0;     // tri_order_ range for leaves
    };

    Vec3g centroid(int t) const {
        const auto& tri = triangles_[static_cast<std::size_t>(t)];
        return (vertices_[static_cast<std::size_t>(tri[0])] +
                vertices_[static_cast<std::size_t>(tri[1])] +
                vertices_[static_cast<std::size_t>(tri[2])]) /
               3.0;
    }

    int build(int begin, int end) {
        Node node;
        node.lo = Vec3g::Constant(std::numeric_limits<double>::infinity());
        node.hi = -node.lo;
        for (int i = begin; i < end; ++i) {
            const auto& tri = triangles_[static_cast<std::size_t>(tri_order_[static_cast<std::size_t>(i)])];
            for (int c = 0; c < 3; ++c) {
                node.lo = node.lo.cwiseMin(vertices_[static_cast<std::size_t>(tri[static_cast<std::size_t>(c)])]);
                node.hi = node.hi.cwiseMax(vertices_[static_cast<std::size_t>(tri[static_cast<std::size_t>(c)])]);
            }
        }
        const int index = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        if (end - begin <= 4) {
            nodes_[static_cast<std::size_t>(index)].begin = begin;
            nodes_[static_cast<std::size_t>(index)].end = end;
            return index;
        }
        int axis = 0;
        const Vec3g extent = node.hi - node.lo;
        if (extent.y() > extent.x()) axis = 1;
        if (extent.z() > extent[axis]) axis = 2;
        const int mid = (begin + end) / 2;
        std::nth_element(tri_order_.begin() + begin, tri_order_.begin() + mid,
                         tri_order_.begin() + end, [&](int a, int b) {
                             const double ca = centroid(a)[axis], cb = centroid(b)[axis];
                             if (ca != cb) return ca < cb;
                             return a < b;  // deterministic tie-break
                         });
        const int left = build(begin, mid);
        const int right = build(mid, end);
        nodes_[static_cast<std::size_t>(index)].left = left;
        nodes_[static_cast<std::size_t>(index)].right = right;
        return index;
    }

    double box_dist2(const Node& n, const Vec3g& p) const {
        const Vec3g d = (n.lo - p).cwiseMax(0.0).cwiseMax(p - n.hi);
        return d.squaredNorm();
    }

    void query(int index, const Vec3g& p, double& best2) const {
        const Node& n = nodes_[static_cast<std::size_t>(index)];
        if (box_dist2(n, p) >= best2) return;
        if (n.left < 0) {
            for (int i = n.begin; i < n.end; ++i) {
                const auto& tri = triangles_[static_cast<std::size_t>(tri_order_[static_cast<std::size_t>(i)])];
                const Vec3g q = closest_point_on_triangle(
                    p, vertices_[static_cast<std::size_t>(tri[0])],
                    vertices_[static_cast<std::size_t>(tri[1])],
                    vertices_[static_cast<std::size_t>(tri[2])]);
                best2 = std::min(best2, (p - q).squaredNorm());
            }
            return;
        }
        const double dl = box_dist2(nodes_[static_cast<std::size_t>(n.left)], p);
        const double dr = box_dist2(nodes_[static_cast<std::size_t>(n.right)], p);
        if (dl <= dr) {
            query(n.left, p, best2);
            query(n.right, p, best2);
        } else {
            query(n.right, p, best2);
            query(n.left, p, best2);
        }
    }

    const std::vector<Vec3g>& vertices_;
    const std::vector<std::array<int, 3>>& triangles_;
    std::vector<int> tri_order_;
    std::vector<Node> nodes_;
};

}  // namespace splat::detail
