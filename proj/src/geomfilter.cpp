#include "boltpipe/geomfilter.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>

#include "boltpipe/cloud_ops.hpp"

namespace boltpipe {

void FilterConfig::validate() const {
    if (!(percentile > 0.0 && percentile < 100.0)) throw ConfigError("percentile must be in (0, 100)");
    if (!(dbscan_eps > 0.0)) throw ConfigError("dbscan eps must be > 0");
    if (dbscan_min_pts < 1) throw ConfigError("dbscan min_pts must be >= 1");
    if (g_th < 1) throw ConfigError("g_th must be >= 1");
    if (!(roi_radius > 0.0)) throw ConfigError("roi radius must be > 0");
}

std::vector<std::vector<PointId>> ClusterSet::members() const {
    std::vector<std::vector<PointId>> out(cluster_count);
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i] != kNoise) out[static_cast<std::size_t>(assignment[i])].push_back(static_cast<PointId>(i));
    }
    return out;
}

double curvature_threshold(std::span<const double> values, double percentile) {
    if (values.empty()) throw DomainError("curvature_threshold: empty sequence");
    if (!(percentile > 0.0 && percentile <= 100.0)) throw DomainError("curvature_threshold: percentile outside (0, 100]");
    const auto n = values.size();
    auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    std::vector<double> v(values.begin(), values.end());
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank - 1), v.end());
    return v[rank - 1];
}

CurvatureSplit split_by_curvature(const PointCloud& cloud, double c_th) {
    if (!cloud.has_channel("curvature")) throw ContractError("split_by_curvature: cloud has no curvature channel");
    const auto curv = cloud.channel("curvature");
    CurvatureSplit s;
    for (std::size_t i = 0; i < curv.size(); ++i) {
        (curv[i] > c_th ? s.high : s.low).push_back(static_cast<PointId>(i));
    }
    return s;
}

ClusterSet dbscan(std::span<const Vec3> points, double eps, std::size_t min_pts) {
    if (!(eps > 0.0)) throw DomainError("dbscan: eps must be > 0");
    if (min_pts < 1) throw DomainError("dbscan: min_pts must be >= 1");
    ClusterSet out;
    out.assignment.assign(points.size(), ClusterSet::kNoise);
    if (points.empty()) return out;

    const SpatialIndex index(points);
    const auto n = static_cast<std::int64_t>(points.size());
    std::vector<std::uint8_t> core(points.size(), 0);
#pragma omp parallel for schedule(dynamic, 1024)
    for (std::int64_t i = 0; i < n; ++i) {
        core[static_cast<std::size_t>(i)] =
            index.count_in_radius(points[static_cast<std::size_t>(i)], eps) >= min_pts ? 1 : 0;
    }

    std::deque<PointId> frontier;
    std::int32_t next_cluster = 0;
    for (std::size_t seed = 0; seed < points.size(); ++seed) {
        if (!core[seed] || out.assignment[seed] != ClusterSet::kNoise) continue;
        const std::int32_t c = next_cluster++;
        out.assignment[seed] = c;
        frontier.push_back(static_cast<PointId>(seed));
        while (!frontier.empty()) {
            const PointId p = frontier.front();
            frontier.pop_front();
            if (!core[p]) continue;
            index.for_each_in_radius(points[p], eps, [&](PointId q, double) {
                if (out.assignment[q] == ClusterSet::kNoise) {
                    out.assignment[q] = c;
                    frontier.push_back(q);
                }
            });
        }
    }
    out.cluster_count = static_cast<std::size_t>(next_cluster);
    return out;
}

std::vector<PointId> roi_refine(const ClusterSet& clusters, std::span<const Vec3> cluster_points,
                                std::span<const PointId> cluster_ids, const SpatialIndex& full_index,
                                std::size_t g_th, double roi_radius) {
    if (cluster_points.size() != clusters.assignment.size() || cluster_ids.size() != clusters.assignment.size()) {
        throw ContractError("roi_refine: cluster arrays disagree in length");
    }
    std::vector<PointId> out;
    for (const auto& members : clusters.members()) {
        if (members.size() > g_th) {
            for (PointId m : members) out.push_back(cluster_ids[m]);
            continue;
        }
        Vec3 centroid;
        for (PointId m : members) centroid += cluster_points[m];
        centroid = centroid / static_cast<double>(members.size());
        full_index.for_each_in_radius(centroid, roi_radius, [&](PointId id, double) { out.push_back(id); });
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

FilterResult geometry_sensitive_filter(const PointCloud& cloud, const FilterConfig& cfg) {
    cfg.validate();
    if (cloud.size() < 2) throw DomainError("geometry_sensitive_filter needs at least 2 points");
    using clock = std::chrono::steady_clock;
    auto seconds = [](clock::time_point a, clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };

    FilterResult res;
    FilterStats& st = res.stats;
    st.points_in = cloud.size();

    const auto t0 = clock::now();
    const SpatialIndex index(cloud.positions());
    st.point_spacing = mean_point_spacing(cloud, index);
    st.support_radius = influence_radius(st.point_spacing);
    const std::vector<EigenTriple> eig = local_eigenvalues(cloud, index, st.support_radius);
    PointCloud work = cloud;
    attach_feature_channels(work, eig);
    const auto t1 = clock::now();

    st.curvature_threshold = curvature_threshold(work.channel("curvature"), cfg.percentile);
    const CurvatureSplit split = split_by_curvature(work, st.curvature_threshold);
    st.high_points = split.high.size();
    std::vector<Vec3> high_pts;
    high_pts.reserve(split.high.size());
    for (PointId id : split.high) high_pts.push_back(cloud.position(id));
    const ClusterSet clusters = dbscan(high_pts, cfg.dbscan_eps, cfg.dbscan_min_pts);
    st.clusters = clusters.cluster_count;
    const auto t2 = clock::now();

    for (const auto& m : clusters.members()) {
        if (m.size() > cfg.g_th) ++st.large_clusters;
    }
    res.kept = roi_refine(clusters, high_pts, split.high, index, cfg.g_th, cfg.roi_radius);
    res.cloud = work.subset(res.kept);
    const auto t3 = clock::now();

    st.points_out = res.kept.size();
    st.eigen_seconds = seconds(t0, t1);
    st.dbscan_seconds = seconds(t1, t2);
    st.roi_seconds = seconds(t2, t3);
    if (cloud.has_labels()) {
        const double bg_in = static_cast<double>(cloud.count_label(0));
        const double bolt_in = static_cast<double>(cloud.count_label(1));
        const double bg_out = static_cast<double>(res.cloud.count_label(0));
        const double bolt_out = static_cast<double>(res.cloud.count_label(1));
        st.background_removed_pct = bg_in > 0 ? 100.0 * (1.0 - bg_out / bg_in) : 0.0;
        st.bolt_points_preserved_pct = bolt_in > 0 ? 100.0 * bolt_out / bolt_in : 100.0;
    }
    return res;
}

} // namespace boltpipe
