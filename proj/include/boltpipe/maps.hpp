#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "boltpipe/parallel.hpp"
#include "boltpipe/point_cloud.hpp"

namespace boltpipe {

/// Mean position of each bolt instance (DBSCAN over label-1 points).
std::vector<Vec3> bolt_centroids(const PointCloud& cloud, std::span<const std::uint8_t> labels, double eps = 0.1,
                                 std::size_t min_pts = 50);

/// Distance from every cloud point to its nearest bolt point. DomainError when
/// `bolt_points` is empty.
std::vector<double> distance_map(const PointCloud& cloud, std::span<const Vec3> bolt_points,
                                 Execution exec = Execution::parallel);

/// Number of centroids within `radius` (inclusive) of every cloud point.
std::vector<std::uint32_t> distribution_map(const PointCloud& cloud, std::span<const Vec3> centroids,
                                            double radius = 2.0, Execution exec = Execution::parallel);

struct ColorBins {
    double distance_near = 0.6;  // at or below: blue
    double distance_far = 1.4;   // at or above: red
    double count_sparse = 6.0;   // at or below: red
    double count_dense = 16.0;   // at or above: blue
};

/// Linear blue-to-red ramp, t clamped to [0, 1].
Rgb ramp_color(double t);

std::vector<Rgb> distance_colors(std::span<const double> distance, const ColorBins& bins = {});
std::vector<Rgb> distribution_colors(std::span<const std::uint32_t> counts, const ColorBins& bins = {});

} // namespace boltpipe
