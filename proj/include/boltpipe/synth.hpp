#pragma once

#include <cstdint>
#include <vector>

#include "boltpipe/point_cloud.hpp"

namespace boltpipe {

/// Where a synthetic point came from; stored in the "source" channel.
enum class SourceKind : int { surface = 0, floor = 1, bolt = 2, clutter = 3, debris = 4, outlier = 5 };

struct SynthConfig {
    double length = 12.0;            // tunnel length along +X (m)
    double tunnel_radius = 2.2;      // half-cylinder radius (m); floor strip spans [-r, r] in Y
    double point_spacing = 0.008;    // wall, roof and floor sampling pitch (m)
    std::size_t bolt_count = 50;
    double bolt_radius = 0.012;
    double bolt_protrusion_min = 0.05;
    double bolt_protrusion_max = 0.2;
    // Sampling pitch on bolt surfaces. Protruding steel returns denser than the
    // shotcrete behind it; 4.7 mm gives ~450 points for a mid-length bolt.
    double bolt_point_spacing = 0.0047;
    double bolt_max_tilt_deg = 10.0;
    double bolt_min_separation = 0.5;
    double bolt_min_height = 1.0;    // above the floor; keeps bolts clear of the floor band
    double noise_sigma = 0.005;      // range noise along the local normal
    double roughness_amplitude = 0.03;
    std::size_t stray_cluster_count = 12;  // boxes and knobs attached to the wall
    std::size_t debris_count = 6;          // floating blobs, disconnected from the surface
    double outlier_fraction = 0.002;
    std::uint64_t seed = 7;

    void validate() const;
};

struct PlantedBolt {
    Vec3 base;   // axis origin on the wall surface
    Vec3 axis;   // unit, pointing into the tunnel
    double protrusion = 0.0;
    double radius = 0.0;
    std::size_t point_count = 0;
};

struct SynthScan {
    PointCloud cloud;  // labels, plus "source" and "bolt_id" channels (-1 off-bolt)
    std::vector<PlantedBolt> bolts;
};

/// Deterministic under cfg.seed. Output order: surface, floor, bolts, clutter,
/// debris, outliers. Throws ConfigError when the bolts cannot be placed.
SynthScan generate_scan(const SynthConfig& cfg);

struct ScanStats {
    std::size_t points = 0;
    std::size_t bolt_points = 0;
    std::size_t background_points = 0;
    std::size_t bolt_count = 0;  // DBSCAN(0.1, 50) instances over label-1 points
    double background_per_bolt_point = 0.0;  // the N in a 1:N ratio
    double mean_spacing = 0.0;
};

ScanStats scan_stats(const PointCloud& cloud);

} // namespace boltpipe
