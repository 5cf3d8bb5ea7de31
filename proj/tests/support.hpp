#pragma once
// Brute-force references and fixtures shared by the test executables.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "boltpipe/geomfeat.hpp"
#include "boltpipe/geomfilter.hpp"
#include "boltpipe/point_cloud.hpp"
#include "boltpipe/spatial_index.hpp"

namespace testsupport {

using boltpipe::Neighbor;
using boltpipe::PointCloud;
using boltpipe::PointId;
using boltpipe::Vec3;

inline std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed, double extent = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, extent);
    std::vector<Vec3> pts(n);
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    return pts;
}

inline std::vector<Vec3> ball(std::size_t n, const Vec3& center, double radius, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vec3> pts;
    while (pts.size() < n) {
        const Vec3 d{u(rng), u(rng), u(rng)};
        if (d.dot(d) <= 1.0) pts.push_back(center + d * radius);
    }
    return pts;
}

inline std::vector<Neighbor> brute_knn(std::span<const Vec3> pts, const Vec3& c, std::size_t k) {
    std::vector<Neighbor> all;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        all.push_back({static_cast<PointId>(i), boltpipe::squared_distance(pts[i], c)});
    }
    std::sort(all.begin(), all.end());
    all.resize(std::min(k, all.size()));
    return all;
}

inline std::vector<PointId> brute_radius(std::span<const Vec3> pts, const Vec3& c, double r) {
    std::vector<PointId> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (boltpipe::squared_distance(pts[i], c) <= r * r) out.push_back(static_cast<PointId>(i));
    }
    return out;
}

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

/// Dense self-adjoint eigensolve of the radius-r neighborhood covariance.
inline boltpipe::EigenTriple brute_eigen(std::span<const Vec3> pts, const Vec3& c, double r, double* trace = nullptr) {
    const auto ids = brute_radius(pts, c, r);
    if (ids.size() < 3) return {};
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (PointId i : ids) mean += Eigen::Vector3d(pts[i].x, pts[i].y, pts[i].z);
    mean /= double(ids.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (PointId i : ids) {
        const Eigen::Vector3d d = Eigen::Vector3d(pts[i].x, pts[i].y, pts[i].z) - mean;
        cov += d * d.transpose();
    }
    cov /= double(ids.size());
    if (trace) *trace = cov.trace();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    const auto v = es.eigenvalues();
    return {std::max(v(2), 0.0), std::max(v(1), 0.0), std::max(v(0), 0.0)};
}

/// O(n^2) DBSCAN: core components by union-find, each border point attached
/// to the adjacent component whose lowest core id is smallest (the component
/// a lowest-id-first expansion reaches first). Returns per-point labels with
/// -1 for noise; cluster labels are the lowest core id of the component.
inline std::vector<std::int64_t> brute_dbscan(std::span<const Vec3> pts, double eps, std::size_t min_pts) {
    const std::size_t n = pts.size();
    std::vector<std::vector<std::size_t>> nbr(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (boltpipe::squared_distance(pts[i], pts[j]) <= eps * eps) nbr[i].push_back(j);
        }
    }
    std::vector<bool> core(n);
    for (std::size_t i = 0; i < n; ++i) core[i] = nbr[i].size() >= min_pts;
    UnionFind uf(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i]) continue;
        for (std::size_t j : nbr[i]) {
            if (core[j]) uf.unite(i, j);
        }
    }
    std::vector<std::int64_t> label(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) label[i] = static_cast<std::int64_t>(uf.find(i));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) continue;
        std::int64_t best = -1;
        for (std::size_t j : nbr[i]) {
            if (core[j] && (best < 0 || label[j] < best)) best = label[j];
        }
        label[i] = best;
    }
    return label;
}

/// True when the two labelings describe the same partition (noise fixed at -1).
template <typename A, typename B>
bool same_partition(const std::vector<A>& a, const std::vector<B>& b) {
    if (a.size() != b.size()) return false;
    std::map<A, B> fwd;
    std::map<B, A> back;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if ((a[i] < 0) != (b[i] < 0)) return false;
        if (a[i] < 0) continue;
        auto [f, fnew] = fwd.emplace(a[i], b[i]);
        auto [r, rnew] = back.emplace(b[i], a[i]);
        if (f->second != b[i] || r->second != a[i]) return false;
    }
    return true;
}

inline bool bitwise_equal(std::span<const Vec3> a, std::span<const Vec3> b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(Vec3)) == 0;
}

inline bool same_cloud(const PointCloud& a, const PointCloud& b) {
    if (!bitwise_equal(a.positions(), b.positions())) return false;
    if (a.has_labels() != b.has_labels()) return false;
    if (a.has_labels() && !std::equal(a.labels().begin(), a.labels().end(), b.labels().begin())) return false;
    if (a.channels().size() != b.channels().size()) return false;
    for (const auto& ch : a.channels()) {
        if (!b.has_channel(ch.name)) return false;
        const auto other = b.channel(ch.name);
        if (std::memcmp(ch.values.data(), other.data(), other.size() * sizeof(double)) != 0) return false;
    }
    return true;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("boltpipe_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

} // namespace testsupport
