#pragma once

#include <span>
#include <vector>

#include "boltpipe/types.hpp"

namespace boltpipe {

struct Neighbor {
    PointId id;
    double sq_distance;

    friend bool operator<(const Neighbor& a, const Neighbor& b) {
        return a.sq_distance < b.sq_distance || (a.sq_distance == b.sq_distance && a.id < b.id);
    }
    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Exact kd-tree over a fixed set of points. The index owns a reordered copy of
/// the coordinates, so the source cloud is never touched. Immutable after
/// construction; all queries are safe to run concurrently.
class SpatialIndex {
public:
    explicit SpatialIndex(std::span<const Vec3> points, std::size_t leaf_size = 12);

    std::size_t size() const { return points_.size(); }

    /// Ids with distance <= r from `center`, ascending. Throws DomainError if r <= 0.
    std::vector<PointId> radius_query(const Vec3& center, double r) const;

    std::size_t count_in_radius(const Vec3& center, double r) const;

    /// Visits every point with squared distance <= r*r, in tree order.
    template <class Visit>
    void for_each_in_radius(const Vec3& center, double r, Visit&& visit) const;

    /// The k nearest points sorted by (distance, id). Throws DomainError if k > size().
    std::vector<Neighbor> knn_query(const Vec3& center, std::size_t k) const;

    /// Same as knn_query but reuses `out` to avoid allocation in hot loops.
    void knn_query(const Vec3& center, std::size_t k, std::vector<Neighbor>& out) const;

private:
    struct Node {
        Vec3 lo;
        Vec3 hi;
        std::uint32_t begin;
        std::uint32_t end;
        std::int32_t left = -1;
        std::int32_t right = -1;
        bool leaf() const { return left < 0; }
    };

    std::int32_t build(std::uint32_t begin, std::uint32_t end, std::size_t leaf_size);
    static double box_sq_distance(const Node& n, const Vec3& p);
    void knn_recurse(std::int32_t node, const Vec3& c, std::size_t k, std::vector<Neighbor>& heap) const;

    std::vector<Vec3> points_;
    std::vector<PointId> ids_;
    std::vector<Node> nodes_;
};

template <class Visit>
void SpatialIndex::for_each_in_radius(const Vec3& center, double r, Visit&& visit) const {
    if (nodes_.empty()) return;
    const double r2 = r * r;
    // Explicit stack; the tree depth is bounded by log2(n / leaf_size) + 1.
    std::int32_t stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node& n = nodes_[static_cast<std::size_t>(stack[--top])];
        if (box_sq_distance(n, center) > r2) continue;
        if (n.leaf()) {
            for (std::uint32_t i = n.begin; i < n.end; ++i) {
                const double d2 = squared_distance(points_[i], center);
                if (d2 <= r2) visit(ids_[i], d2);
            }
        } else {
            stack[top++] = n.right;
            stack[top++] = n.left;
        }
    }
}

} // namespace boltpipe
