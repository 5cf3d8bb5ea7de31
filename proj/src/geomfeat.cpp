#include "boltpipe/geomfeat.hpp"

#include <algorithm>
#include <cmath>

#include "boltpipe/linalg3.hpp"

namespace boltpipe {

double influence_radius(double ps) {
    if (!(ps > 0.0 && ps < 5.0 / 16.0)) {
        throw DomainError("influence_radius: point spacing " + std::to_string(ps) + " m outside (0, 5/16)");
    }
    return 5.0 * ps - 16.0 * ps * ps;
}

namespace {

EigenTriple eigen_of_neighborhood(const PointCloud& cloud, const std::vector<PointId>& nbrs) {
    if (nbrs.size() < 3) return {};
    const auto pts = cloud.positions();
    const Sym3 cov = covariance(nbrs.size(), [&](std::size_t i) { return pts[nbrs[i]]; });
    const Eigen3 e = eigen_symmetric3(cov);
    // Rounding can push a zero eigenvalue slightly negative.
    return {std::max(e.values[0], 0.0), std::max(e.values[1], 0.0), std::max(e.values[2], 0.0)};
}

} // namespace

std::vector<EigenTriple> local_eigenvalues(const PointCloud& cloud, const SpatialIndex& index, double r,
                                           Execution exec) {
    if (!(r > 0.0)) throw DomainError("local_eigenvalues requires r > 0");
    const auto n = static_cast<std::int64_t>(cloud.size());
    std::vector<EigenTriple> out(cloud.size());
    auto one = [&](std::int64_t i, std::vector<PointId>& nbrs) {
        nbrs.clear();
        index.for_each_in_radius(cloud.position(static_cast<std::size_t>(i)), r,
                                 [&](PointId id, double) { nbrs.push_back(id); });
        // Canonical order so the covariance sums are identical for every traversal.
        std::sort(nbrs.begin(), nbrs.end());
        out[static_cast<std::size_t>(i)] = eigen_of_neighborhood(cloud, nbrs);
    };
    if (exec == Execution::serial) {
        std::vector<PointId> nbrs;
        for (std::int64_t i = 0; i < n; ++i) one(i, nbrs);
    } else {
#pragma omp parallel
        {
            std::vector<PointId> nbrs;
#pragma omp for schedule(dynamic, 1024)
            for (std::int64_t i = 0; i < n; ++i) one(i, nbrs);
        }
    }
    return out;
}

GeomFeatures geometric_features(const EigenTriple& e) {
    GeomFeatures f;
    f.planarity = e.lambda1 > 0.0 ? (e.lambda2 - e.lambda3) / e.lambda1 : 0.0;
    f.omnivariance = std::cbrt(e.lambda1 * e.lambda2 * e.lambda3);
    const double sum = e.lambda1 + e.lambda2 + e.lambda3;
    f.curvature = sum > 0.0 ? e.lambda3 / sum : 0.0;
    return f;
}

void attach_feature_channels(PointCloud& cloud, const std::vector<EigenTriple>& eig) {
    const std::size_t n = eig.size();
    std::vector<double> l1(n), l2(n), l3(n), plan(n), omni(n), curv(n);
    for (std::size_t i = 0; i < n; ++i) {
        l1[i] = eig[i].lambda1;
        l2[i] = eig[i].lambda2;
        l3[i] = eig[i].lambda3;
        const GeomFeatures f = geometric_features(eig[i]);
        plan[i] = f.planarity;
        omni[i] = f.omnivariance;
        curv[i] = f.curvature;
    }
    cloud.set_channel("lambda1", std::move(l1));
    cloud.set_channel("lambda2", std::move(l2));
    cloud.set_channel("lambda3", std::move(l3));
    cloud.set_channel("planarity", std::move(plan));
    cloud.set_channel("omnivariance", std::move(omni));
    cloud.set_channel("curvature", std::move(curv));
}

std::vector<EigenTriple> eigen_channels(const PointCloud& cloud) {
    const auto l1 = cloud.channel("lambda1");
    const auto l2 = cloud.channel("lambda2");
    const auto l3 = cloud.channel("lambda3");
    std::vector<EigenTriple> out(cloud.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {l1[i], l2[i], l3[i]};
    return out;
}

} // namespace boltpipe
