#pragma once

#include <array>

#include "boltpipe/types.hpp"

namespace boltpipe {

// Upper triangle of a symmetric 3x3 matrix: xx, xy, xz, yy, yz, zz.
using Sym3 = std::array<double, 6>;

struct Eigen3 {
    std::array<double, 3> values;  // descending
    std::array<Vec3, 3> vectors;   // unit, vectors[i] pairs with values[i]
};

/// Cyclic Jacobi rotations to full convergence. Accurate to a few ulps of the
/// largest eigenvalue, which matters for the tiny lambda3 of planar patches.
Eigen3 eigen_symmetric3(const Sym3& m);

/// Population covariance (divide by N) of the points, two-pass about the mean.
template <class PointAt>
Sym3 covariance(std::size_t n, PointAt&& at, Vec3* mean_out = nullptr) {
    Vec3 mean;
    for (std::size_t i = 0; i < n; ++i) mean += at(i);
    mean = mean / static_cast<double>(n);
    Sym3 c{0, 0, 0, 0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 d = at(i) - mean;
        c[0] += d.x * d.x;
        c[1] += d.x * d.y;
        c[2] += d.x * d.z;
        c[3] += d.y * d.y;
        c[4] += d.y * d.z;
        c[5] += d.z * d.z;
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (double& v : c) v *= inv;
    if (mean_out) *mean_out = mean;
    return c;
}

} // namespace boltpipe
