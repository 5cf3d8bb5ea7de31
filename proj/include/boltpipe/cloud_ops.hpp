#pragma once

#include "boltpipe/parallel.hpp"
#include "boltpipe/point_cloud.hpp"
#include "boltpipe/spatial_index.hpp"

namespace boltpipe {

/// Mean over all points of the distance to the nearest other point.
/// Throws DomainError for fewer than two points.
double mean_point_spacing(const PointCloud& cloud, Execution exec = Execution::parallel);
double mean_point_spacing(const PointCloud& cloud, const SpatialIndex& index, Execution exec = Execution::parallel);

struct Bounds {
    Vec3 lo;
    Vec3 hi;
};

Bounds bounding_box(std::span<const Vec3> points);

} // namespace boltpipe
