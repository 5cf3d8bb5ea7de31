#include "boltpipe/maps.hpp"

#include <algorithm>
#include <cmath>

#include "boltpipe/metrics.hpp"
#include "boltpipe/spatial_index.hpp"

namespace boltpipe {

std::vector<Vec3> bolt_centroids(const PointCloud& cloud, std::span<const std::uint8_t> labels, double eps,
                                 std::size_t min_pts) {
    std::vector<Vec3> out;
    for (const Instance& inst : extract_instances(cloud, labels, eps, min_pts)) {
        Vec3 sum{};
        for (PointId id : inst) sum += cloud.position(id);
        out.push_back(sum / static_cast<double>(inst.size()));
    }
    return out;
}

std::vector<double> distance_map(const PointCloud& cloud, std::span<const Vec3> bolt_points, Execution exec) {
    if (bolt_points.empty()) throw DomainError("distance_map: no bolt points");
    const SpatialIndex index(bolt_points);
    std::vector<double> out(cloud.size());
    const auto n = static_cast<std::int64_t>(cloud.size());
#pragma omp parallel if (exec == Execution::parallel)
    {
        std::vector<Neighbor> nn;
#pragma omp for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            index.knn_query(cloud.position(static_cast<std::size_t>(i)), 1, nn);
            out[static_cast<std::size_t>(i)] = std::sqrt(nn.front().sq_distance);
        }
    }
    return out;
}

std::vector<std::uint32_t> distribution_map(const PointCloud& cloud, std::span<const Vec3> centroids, double radius,
                                            Execution exec) {
    if (!(radius > 0.0)) throw DomainError("distribution_map: radius must be > 0");
    std::vector<std::uint32_t> out(cloud.size(), 0);
    if (centroids.empty()) return out;
    const SpatialIndex index(centroids);
    const auto n = static_cast<std::int64_t>(cloud.size());
#pragma omp parallel for schedule(static) if (exec == Execution::parallel)
    for (std::int64_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] =
            static_cast<std::uint32_t>(index.count_in_radius(cloud.position(static_cast<std::size_t>(i)), radius));
    }
    return out;
}

Rgb ramp_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const auto r = static_cast<std::uint8_t>(std::lround(255.0 * t));
    const auto b = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - t)));
    return {r, 0, b};
}

std::vector<Rgb> distance_colors(std::span<const double> distance, const ColorBins& bins) {
    std::vector<Rgb> out(distance.size());
    const double span = bins.distance_far - bins.distance_near;
    std::transform(distance.begin(), distance.end(), out.begin(),
                   [&](double d) { return ramp_color((d - bins.distance_near) / span); });
    return out;
}

std::vector<Rgb> distribution_colors(std::span<const std::uint32_t> counts, const ColorBins& bins) {
    std::vector<Rgb> out(counts.size());
    const double span = bins.count_dense - bins.count_sparse;
    std::transform(counts.begin(), counts.end(), out.begin(),
                   [&](std::uint32_t c) { return ramp_color((bins.count_dense - static_cast<double>(c)) / span); });
    return out;
}

} // namespace boltpipe
