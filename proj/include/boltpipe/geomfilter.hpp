#pragma once

#include <span>
#include <vector>

#include "boltpipe/geomfeat.hpp"
#include "boltpipe/point_cloud.hpp"
#include "boltpipe/spatial_index.hpp"

namespace boltpipe {

struct FilterConfig {
    double percentile = 90.0;
    double dbscan_eps = 0.1;
    std::size_t dbscan_min_pts = 50;
    std::size_t g_th = 400;
    double roi_radius = 0.1;

    void validate() const;
};

struct ClusterSet {
    static constexpr std::int32_t kNoise = -1;
    std::vector<std::int32_t> assignment;  // per point: cluster id or kNoise
    std::size_t cluster_count = 0;

    /// Member ids of every cluster, ascending within each cluster.
    std::vector<std::vector<PointId>> members() const;
};

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value (at least the 1st).
double curvature_threshold(std::span<const double> values, double percentile);

struct CurvatureSplit {
    std::vector<PointId> high;  // curvature > threshold
    std::vector<PointId> low;
};

CurvatureSplit split_by_curvature(const PointCloud& cloud, double c_th);

/// DBSCAN. A point is core when at least min_pts points (itself included) lie
/// within eps. Clusters are grown breadth-first from the lowest unvisited core
/// id; a border point joins the first cluster that reaches it.
ClusterSet dbscan(std::span<const Vec3> points, double eps, std::size_t min_pts);

/// For each cluster: more than g_th members keeps the members; otherwise every
/// point of the full cloud within roi_radius of the cluster centroid. Returns
/// the sorted, deduplicated union. `cluster_ids` maps cluster-point index to
/// full-cloud id.
std::vector<PointId> roi_refine(const ClusterSet& clusters, std::span<const Vec3> cluster_points,
                                std::span<const PointId> cluster_ids, const SpatialIndex& full_index,
                                std::size_t g_th, double roi_radius);

struct FilterStats {
    std::size_t points_in = 0;
    std::size_t points_out = 0;
    double point_spacing = 0.0;
    double support_radius = 0.0;
    double curvature_threshold = 0.0;
    std::size_t high_points = 0;
    std::size_t clusters = 0;
    std::size_t large_clusters = 0;
    double eigen_seconds = 0.0;
    double dbscan_seconds = 0.0;
    double roi_seconds = 0.0;
    // Only meaningful when the input carries labels.
    double background_removed_pct = 0.0;
    double bolt_points_preserved_pct = 0.0;
};

struct FilterResult {
    PointCloud cloud;            // subset with labels, lambda and feature channels
    std::vector<PointId> kept;  // input ids, ascending
    FilterStats stats;
};

/// Point spacing, support radius, eigenvalues, curvature percentile split,
/// DBSCAN over the high-curvature points and ROI refinement, in that order.
FilterResult geometry_sensitive_filter(const PointCloud& cloud, const FilterConfig& cfg);

} // namespace boltpipe
