#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "boltpipe/point_cloud.hpp"

namespace boltpipe {

/// |P ∩ G| / |P ∪ G| over points whose label equals class_id; 1 when both sets
/// are empty. ContractError on length mismatch.
double iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, std::uint8_t class_id);

using Instance = std::vector<PointId>;  // ascending ids into one cloud

/// One instance per DBSCAN cluster of the label-1 points.
std::vector<Instance> extract_instances(const PointCloud& cloud, std::span<const std::uint8_t> labels,
                                        double eps = 0.1, std::size_t min_pts = 50);

struct MatchCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

/// A ground-truth instance is detected when at least `threshold` of its points
/// fall inside the union of predicted instances; a predicted instance is
/// spurious when less than `threshold` of its points fall inside the union of
/// ground-truth instances.
MatchCounts match_instances(const std::vector<Instance>& pred, const std::vector<Instance>& gt,
                            double threshold = 0.5);

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Zero wherever a denominator vanishes.
PrecisionRecall precision_recall_f1(std::size_t tp, std::size_t fp, std::size_t fn);

struct EvalConfig {
    double match_threshold = 0.5;
    double instance_eps = 0.1;
    std::size_t instance_min_pts = 50;
};

struct EvalReport {
    std::size_t points = 0;
    std::size_t unmatched_pred_points = 0;  // prediction points absent from the ground truth
    double iou_bolt = 0.0;
    double iou_background = 0.0;
    std::size_t gt_instances = 0;
    std::size_t pred_instances = 0;
    std::size_t tp = 0, fp = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

/// Scores a prediction against ground truth. When the clouds differ, points
/// are matched by exact coordinates and ground-truth points the prediction
/// lacks count as predicted background.
EvalReport evaluate(const PointCloud& pred, const PointCloud& gt, const EvalConfig& cfg = {});

/// Ground-truth-aligned prediction labels, as used by evaluate().
std::vector<std::uint8_t> align_labels(const PointCloud& pred, const PointCloud& gt,
                                       std::size_t* unmatched_pred = nullptr);

} // namespace boltpipe
