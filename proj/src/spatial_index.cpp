#include "boltpipe/spatial_index.hpp"

#include <algorithm>
#include <numeric>

namespace boltpipe {

SpatialIndex::SpatialIndex(std::span<const Vec3> points, std::size_t leaf_size) {
    if (points.size() > std::size_t{0xFFFFFFFFu}) throw DomainError("cloud too large for 32-bit point ids");
    ids_.resize(points.size());
    std::iota(ids_.begin(), ids_.end(), PointId{0});
    points_.assign(points.begin(), points.end());
    if (points.empty()) return;
    nodes_.reserve(2 * points.size() / std::max<std::size_t>(leaf_size, 1) + 2);
    build(0, static_cast<std::uint32_t>(points.size()), std::max<std::size_t>(leaf_size, 1));
    // Lay the coordinates out in tree order for locality.
    std::vector<Vec3> ordered(points.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) ordered[i] = points[ids_[i]];
    points_ = std::move(ordered);
}

std::int32_t SpatialIndex::build(std::uint32_t begin, std::uint32_t end, std::size_t leaf_size) {
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo = node.hi = points_[ids_[begin]];
    for (std::uint32_t i = begin; i < end; ++i) {
        const Vec3& p = points_[ids_[i]];
        node.lo = {std::min(node.lo.x, p.x), std::min(node.lo.y, p.y), std::min(node.lo.z, p.z)};
        node.hi = {std::max(node.hi.x, p.x), std::max(node.hi.y, p.y), std::max(node.hi.z, p.z)};
    }
    const auto index = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(node);
    const Vec3 ext = node.hi - node.lo;
    if (end - begin <= leaf_size || (ext.x == 0.0 && ext.y == 0.0 && ext.z == 0.0)) return index;

    const std::size_t axis = ext.x >= ext.y ? (ext.x >= ext.z ? 0 : 2) : (ext.y >= ext.z ? 1 : 2);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(ids_.begin() + begin, ids_.begin() + mid, ids_.begin() + end, [&](PointId a, PointId b) {
        const double ca = points_[a][axis];
        const double cb = points_[b][axis];
        return ca < cb || (ca == cb && a < b);
    });
    const std::int32_t left = build(begin, mid, leaf_size);
    const std::int32_t right = build(mid, end, leaf_size);
    nodes_[static_cast<std::size_t>(index)].left = left;
    nodes_[static_cast<std::size_t>(index)].right = right;
    return index;
}

double SpatialIndex::box_sq_distance(const Node& n, const Vec3& p) {
    const double dx = p.x < n.lo.x ? n.lo.x - p.x : (p.x > n.hi.x ? p.x - n.hi.x : 0.0);
    const double dy = p.y < n.lo.y ? n.lo.y - p.y : (p.y > n.hi.y ? p.y - n.hi.y : 0.0);
    const double dz = p.z < n.lo.z ? n.lo.z - p.z : (p.z > n.hi.z ? p.z - n.hi.z : 0.0);
    return dx * dx + dy * dy + dz * dz;
}

std::vector<PointId> SpatialIndex::radius_query(const Vec3& center, double r) const {
    if (!(r > 0.0)) throw DomainError("radius_query requires r > 0");
    std::vector<PointId> out;
    for_each_in_radius(center, r, [&](PointId id, double) { out.push_back(id); });
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t SpatialIndex::count_in_radius(const Vec3& center, double r) const {
    std::size_t n = 0;
    for_each_in_radius(center, r, [&](PointId, double) { ++n; });
    return n;
}

std::vector<Neighbor> SpatialIndex::knn_query(const Vec3& center, std::size_t k) const {
    std::vector<Neighbor> out;
    knn_query(center, k, out);
    return out;
}

void SpatialIndex::knn_query(const Vec3& center, std::size_t k, std::vector<Neighbor>& out) const {
    if (k > points_.size()) {
        throw DomainError("knn_query: k = " + std::to_string(k) + " exceeds point count " +
                          std::to_string(points_.size()));
    }
    out.clear();
    if (k == 0) return;
    out.reserve(k + 1);
    knn_recurse(0, center, k, out);
    std::sort_heap(out.begin(), out.end());
}

void SpatialIndex::knn_recurse(std::int32_t node_index, const Vec3& c, std::size_t k,
                               std::vector<Neighbor>& heap) const {
    const Node& n = nodes_[static_cast<std::size_t>(node_index)];
    if (n.leaf()) {
        for (std::uint32_t i = n.begin; i < n.end; ++i) {
            const Neighbor cand{ids_[i], squared_distance(points_[i], c)};
            if (heap.size() < k) {
                heap.push_back(cand);
                std::push_heap(heap.begin(), heap.end());
            } else if (cand < heap.front()) {
                std::pop_heap(heap.begin(), heap.end());
                heap.back() = cand;
                std::push_heap(heap.begin(), heap.end());
            }
        }
        return;
    }
    const Node& l = nodes_[static_cast<std::size_t>(n.left)];
    const Node& r = nodes_[static_cast<std::size_t>(n.right)];
    const double dl = box_sq_distance(l, c);
    const double dr = box_sq_distance(r, c);
    const std::int32_t first = dl <= dr ? n.left : n.right;
    const std::int32_t second = dl <= dr ? n.right : n.left;
    const double d_first = std::min(dl, dr);
    const double d_second = std::max(dl, dr);
    // Equal distance is not pruned: a tie with a lower id may still be inside.
    if (heap.size() < k || d_first <= heap.front().sq_distance) knn_recurse(first, c, k, heap);
    if (heap.size() < k || d_second <= heap.front().sq_distance) knn_recurse(second, c, k, heap);
}

} // namespace boltpipe
