#pragma once

#include <vector>

#include "boltpipe/parallel.hpp"
#include "boltpipe/point_cloud.hpp"
#include "boltpipe/spatial_index.hpp"

namespace boltpipe {

/// Local covariance eigenvalues, lambda1 >= lambda2 >= lambda3 >= 0 (m^2).
struct EigenTriple {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double lambda3 = 0.0;
};

struct GeomFeatures {
    double planarity = 0.0;
    double omnivariance = 0.0;
    double curvature = 0.0;
};

/// PCA support radius from the mean point spacing: 5 ps - 16 ps^2.
/// Throws DomainError unless 0 < ps < 5/16, where the formula is positive.
double influence_radius(double point_spacing);

/// Eigenvalues of the 3x3 covariance of the points within `r` of each point
/// (the point itself included). Neighborhoods with fewer than 3 points give
/// the zero triple. Output is indexed by point id.
std::vector<EigenTriple> local_eigenvalues(const PointCloud& cloud, const SpatialIndex& index, double r,
                                           Execution exec = Execution::parallel);

/// planarity = (l2 - l3) / l1, omnivariance = cbrt(l1 l2 l3),
/// curvature = l3 / (l1 + l2 + l3). Zero denominators give zero.
GeomFeatures geometric_features(const EigenTriple& e);

/// Adds lambda1..3, planarity, omnivariance and curvature channels.
void attach_feature_channels(PointCloud& cloud, const std::vector<EigenTriple>& eig);

/// Reads lambda1..3 back out of a cloud's channels. Throws ContractError when absent.
std::vector<EigenTriple> eigen_channels(const PointCloud& cloud);

} // namespace boltpipe
