#include "boltpipe/cloud_ops.hpp"

#include <algorithm>
#include <cmath>

namespace boltpipe {

double mean_point_spacing(const PointCloud& cloud, Execution exec) {
    if (cloud.size() < 2) throw DomainError("mean_point_spacing needs at least 2 points");
    const SpatialIndex index(cloud.positions());
    return mean_point_spacing(cloud, index, exec);
}

double mean_point_spacing(const PointCloud& cloud, const SpatialIndex& index, Execution exec) {
    const auto n = static_cast<std::int64_t>(cloud.size());
    if (n < 2) throw DomainError("mean_point_spacing needs at least 2 points");
    std::vector<double> nn(static_cast<std::size_t>(n));
    auto one = [&](std::int64_t i, std::vector<Neighbor>& buf) {
        index.knn_query(cloud.position(static_cast<std::size_t>(i)), 2, buf);
        // A duplicate may precede the point itself in (distance, id) order.
        const Neighbor& other = buf[0].id == static_cast<PointId>(i) ? buf[1] : buf[0];
        nn[static_cast<std::size_t>(i)] = std::sqrt(other.sq_distance);
    };
    if (exec == Execution::serial) {
        std::vector<Neighbor> buf;
        for (std::int64_t i = 0; i < n; ++i) one(i, buf);
    } else {
#pragma omp parallel
        {
            std::vector<Neighbor> buf;
#pragma omp for schedule(static)
            for (std::int64_t i = 0; i < n; ++i) one(i, buf);
        }
    }
    // Fixed-order sum keeps the result independent of the thread count.
    double sum = 0.0;
    for (double d : nn) sum += d;
    return sum / static_cast<double>(n);
}

Bounds bounding_box(std::span<const Vec3> points) {
    Bounds b;
    if (points.empty()) return b;
    b.lo = b.hi = points[0];
    for (const Vec3& p : points) {
        b.lo = {std::min(b.lo.x, p.x), std::min(b.lo.y, p.y), std::min(b.lo.z, p.z)};
        b.hi = {std::max(b.hi.x, p.x), std::max(b.hi.y, p.y), std::max(b.hi.z, p.z)};
    }
    return b;
}

} // namespace boltpipe
