#pragma once

#include <vector>

#include "boltpipe/parallel.hpp"
#include "boltpipe/point_cloud.hpp"

namespace boltpipe {

struct PreprocessConfig {
    std::size_t knn_k = 6;
    double knn_sigma_mult = 1.0;
    double csf_grid = 0.4;
    std::size_t csf_iterations = 500;
    double csf_threshold = 0.5;
    int csf_rigidness = 2;
    double cc_voxel = 0.016;
    std::size_t cc_min_points = 10000;
    bool keep_floor = false;

    /// Throws ConfigError naming the first out-of-range field.
    void validate() const;
};

/// Each point's orthogonal distance to the least-squares plane through its k
/// nearest neighbors (itself excluded). Collinear or coincident neighborhoods
/// give 0.
std::vector<double> plane_residuals(const PointCloud& cloud, std::size_t k, Execution exec = Execution::parallel);

/// Drops points whose plane residual exceeds mean + sigma_mult * std, taken
/// over the residuals of the whole cloud (population std). Requires k in
/// [4, 15] and more than k points.
PointCloud knn_outlier_filter(const PointCloud& cloud, std::size_t k, double sigma_mult,
                              std::vector<PointId>* kept_ids = nullptr);

struct CsfResult {
    PointCloud ground;
    PointCloud offground;
    std::vector<PointId> ground_ids;
    std::vector<PointId> offground_ids;
    std::size_t iterations_run = 0;
};

/// Cloth simulation floor extraction: mirror the cloud in Z, drop a grid cloth
/// of spacing csf_grid onto it, and call every point within csf_threshold of
/// the settled cloth ground. Gravity is -Z of the scan frame.
CsfResult cloth_simulation_filter(const PointCloud& cloud, const PreprocessConfig& cfg);

/// Keeps the points of 26-connected voxel components (pitch `voxel`) holding
/// at least `min_points` points. Output preserves input order.
PointCloud connected_component_filter(const PointCloud& cloud, double voxel, std::size_t min_points,
                                      std::vector<PointId>* kept_ids = nullptr);

struct PreprocessTimings {
    double knn_seconds = 0.0;
    double csf_seconds = 0.0;
    double cc_seconds = 0.0;
};

/// k-NN filter, then CSF (unless keep_floor), then connected components.
PointCloud preprocess(const PointCloud& cloud, const PreprocessConfig& cfg, PreprocessTimings* timings = nullptr);

} // namespace boltpipe
