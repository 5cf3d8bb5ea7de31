#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <set>

#include "../support.hpp"
#include "boltpipe/cloud_ops.hpp"
#include "boltpipe/log.hpp"
#include "boltpipe/metrics.hpp"
#include "boltpipe/preprocess.hpp"
#include "boltpipe/synth.hpp"

using namespace boltpipe;
using namespace testsupport;

namespace {

// Least-squares plane through the k nearest other points, via a dense
// symmetric eigensolver.
std::vector<double> brute_residuals(std::span<const Vec3> pts, std::size_t k) {
    std::vector<double> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        auto nn = brute_knn(pts, pts[i], k + 1);
        nn.erase(std::remove_if(nn.begin(), nn.end(), [&](const Neighbor& n) { return n.id == i; }), nn.end());
        nn.resize(k);
        Eigen::Matrix<double, Eigen::Dynamic, 3> m(static_cast<Eigen::Index>(k), 3);
        for (std::size_t t = 0; t < k; ++t) {
            const Vec3& p = pts[nn[t].id];
            m.row(static_cast<Eigen::Index>(t)) << p.x, p.y, p.z;
        }
        const Eigen::RowVector3d mean = m.colwise().mean();
        const Eigen::Matrix3d cov = (m.rowwise() - mean).transpose() * (m.rowwise() - mean) / double(k);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
        const Eigen::Vector3d normal = es.eigenvectors().col(0);
        const Eigen::Vector3d d(pts[i].x - mean(0), pts[i].y - mean(1), pts[i].z - mean(2));
        out[i] = std::abs(normal.dot(d));
    }
    return out;
}

std::vector<Vec3> plane_grid(std::size_t side, double pitch, double z = 0.0) {
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < side; ++i) {
        for (std::size_t j = 0; j < side; ++j) pts.push_back({double(i) * pitch, double(j) * pitch, z});
    }
    return pts;
}

std::set<std::vector<double>> as_set(const PointCloud& c) {
    std::set<std::vector<double>> s;
    for (const auto& p : c.positions()) s.insert({p.x, p.y, p.z});
    return s;
}

// Component sizes by brute union-find over occupied voxels anchored at the
// bounding-box corner, 26-connected.
std::vector<PointId> brute_components(std::span<const Vec3> pts, double voxel, std::size_t min_points) {
    const Bounds box = bounding_box(pts);
    std::map<std::array<long, 3>, std::size_t> voxel_index;
    std::vector<std::array<long, 3>> cells;
    std::vector<std::size_t> of(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vec3 d = pts[i] - box.lo;
        const std::array<long, 3> key{long(std::floor(d.x / voxel)), long(std::floor(d.y / voxel)),
                                      long(std::floor(d.z / voxel))};
        auto [it, fresh] = voxel_index.emplace(key, cells.size());
        if (fresh) cells.push_back(key);
        of[i] = it->second;
    }
    UnionFind uf(cells.size());
    for (std::size_t a = 0; a < cells.size(); ++a) {
        for (std::size_t b = a + 1; b < cells.size(); ++b) {
            bool adj = true;
            for (int ax = 0; ax < 3; ++ax) adj = adj && std::abs(cells[a][ax] - cells[b][ax]) <= 1;
            if (adj) uf.unite(a, b);
        }
    }
    std::map<std::size_t, std::size_t> size;
    for (std::size_t i = 0; i < pts.size(); ++i) ++size[uf.find(of[i])];
    std::vector<PointId> keep;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (size[uf.find(of[i])] >= min_points) keep.push_back(static_cast<PointId>(i));
    }
    return keep;
}

} // namespace

TEST_CASE("preprocess config ranges") {
    PreprocessConfig c;
    CHECK_NOTHROW(c.validate());
    c.knn_k = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.knn_k = 16;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.csf_iterations = 399;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.cc_voxel = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.csf_grid = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("plane residuals match dense plane fits") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 0.01);
    auto pts = plane_grid(20, 0.1);
    for (auto& p : pts) p.z += g(rng);
    const auto extra = random_points(100, 4);
    pts.insert(pts.end(), extra.begin(), extra.end());
    const PointCloud c(pts);
    for (std::size_t k : {4u, 6u, 15u}) {
        const auto got = plane_residuals(c, k, Execution::serial);
        const auto want = brute_residuals(pts, k);
        for (std::size_t i = 0; i < pts.size(); ++i) REQUIRE(got[i] == doctest::Approx(want[i]).epsilon(1e-9).scale(1e-12));
        CHECK(got == plane_residuals(c, k, Execution::parallel));
    }
}

TEST_CASE("plane residuals: collinear neighborhoods give zero") {
    std::vector<Vec3> line;
    for (int i = 0; i < 30; ++i) line.push_back({0.1 * i, 0.0, 0.0});
    for (double r : plane_residuals(PointCloud(line), 6)) CHECK(r == 0.0);
}

TEST_CASE("knn outlier filter") {
    SUBCASE("exact plane keeps everything") {
        const PointCloud c(plane_grid(10, 0.1));
        CHECK(knn_outlier_filter(c, 6, 1.0).size() == 100);
    }
    SUBCASE("one point a meter off the plane is the only one removed") {
        auto pts = plane_grid(10, 0.1);
        pts.push_back({0.45, 0.45, 1.0});
        std::vector<PointId> kept;
        const PointCloud out = knn_outlier_filter(PointCloud(pts), 6, 1.0, &kept);
        CHECK(out.size() == 100);
        CHECK(std::find(kept.begin(), kept.end(), PointId{100}) == kept.end());
    }
    SUBCASE("k outside [4, 15]") {
        const PointCloud c(plane_grid(10, 0.1));
        CHECK_THROWS_AS(knn_outlier_filter(c, 3, 1.0), DomainError);
        CHECK_THROWS_AS(knn_outlier_filter(c, 16, 1.0), DomainError);
        CHECK_THROWS_AS(knn_outlier_filter(PointCloud(plane_grid(2, 0.1)), 6, 1.0), DomainError);
    }
    SUBCASE("labels and channels of survivors are carried") {
        auto pts = plane_grid(10, 0.1);
        pts.push_back({0.45, 0.45, 1.0});
        PointCloud c(pts);
        std::vector<std::uint8_t> labels(pts.size(), 0);
        std::vector<double> ch(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) ch[i] = double(i);
        labels[3] = 1;
        c.set_labels(labels);
        c.set_channel("id", ch);
        std::vector<PointId> kept;
        const PointCloud out = knn_outlier_filter(c, 6, 1.0, &kept);
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(out.channel("id")[i] == double(kept[i]));
            CHECK(out.labels()[i] == labels[kept[i]]);
        }
    }
}

TEST_CASE("cloth simulation: flat floor is all ground") {
    const PointCloud floor(plane_grid(100, 0.05));
    const CsfResult r = cloth_simulation_filter(floor, PreprocessConfig{});
    CHECK(r.ground.size() == floor.size());
    CHECK(r.offground.empty());
}

TEST_CASE("cloth simulation on a synthetic tunnel") {
    SynthConfig sc;
    sc.length = 3.0;
    sc.bolt_count = 8;
    const SynthScan scan = generate_scan(sc);
    const CsfResult r = cloth_simulation_filter(scan.cloud, PreprocessConfig{});
    CHECK(r.ground.size() + r.offground.size() == scan.cloud.size());
    std::vector<PointId> all = r.ground_ids;
    all.insert(all.end(), r.offground_ids.begin(), r.offground_ids.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) REQUIRE(all[i] == i);

    const auto source = scan.cloud.channel("source");
    std::size_t floor_total = 0, floor_ground = 0, bolt_ground = 0;
    for (double s : source) floor_total += s == double(SourceKind::floor);
    for (PointId id : r.ground_ids) {
        floor_ground += source[id] == double(SourceKind::floor);
        bolt_ground += scan.cloud.labels()[id] == 1;
    }
    CHECK(double(floor_ground) >= 0.99 * double(floor_total));
    CHECK(bolt_ground == 0);
}

TEST_CASE("cloth simulation without a floor settles on the lowest band only") {
    // With the floor gone, the cloth comes to rest on the lowest wall points.
    // Captured points lie within the threshold plus one cloth cell of the base.
    SynthConfig sc;
    sc.length = 3.0;
    sc.bolt_count = 8;
    const SynthScan scan = generate_scan(sc);
    std::vector<PointId> keep;
    const auto source = scan.cloud.channel("source");
    for (std::size_t i = 0; i < scan.cloud.size(); ++i) {
        if (source[i] != double(SourceKind::floor)) keep.push_back(static_cast<PointId>(i));
    }
    const PointCloud nofloor = scan.cloud.subset(keep);
    const PreprocessConfig cfg;
    const CsfResult r = cloth_simulation_filter(nofloor, cfg);
    const double base = bounding_box(nofloor.positions()).lo.z;
    for (const auto& p : r.ground.positions()) REQUIRE(p.z <= base + cfg.csf_threshold + cfg.csf_grid);
    CHECK(r.ground.count_label(1) == 0);
    CHECK(double(r.ground.size()) < 0.25 * double(nofloor.size()));
}

TEST_CASE("cloth simulation: footprint below one cell") {
    std::vector<std::string> warnings;
    auto old = log::set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
    const CsfResult r = cloth_simulation_filter(PointCloud(plane_grid(3, 0.01)), PreprocessConfig{});
    log::set_warning_sink(old);
    CHECK(r.ground.empty());
    CHECK(r.offground.size() == 9);
    CHECK(warnings.size() == 1);
}

TEST_CASE("connected components") {
    const auto blob = ball(20000, {0, 0, 0}, 0.1, 1);
    SUBCASE("single dense blob unchanged") {
        CHECK(connected_component_filter(PointCloud(blob), 0.016, 10000).size() == blob.size());
    }
    SUBCASE("isolated cluster a meter away is removed") {
        auto pts = blob;
        const auto island = ball(500, {1.0, 0, 0}, 0.03, 2);
        pts.insert(pts.end(), island.begin(), island.end());
        std::vector<PointId> kept;
        connected_component_filter(PointCloud(pts), 0.016, 10000, &kept);
        CHECK(kept == brute_components(pts, 0.016, 10000));
        CHECK(kept.size() == blob.size());
    }
    SUBCASE("threshold one is the identity") {
        const auto pts = random_points(3000, 6);
        CHECK(connected_component_filter(PointCloud(pts), 0.016, 1).size() == pts.size());
    }
    SUBCASE("random sparse clouds agree with the voxel oracle") {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto pts = random_points(1500, 50 + seed, 0.5);
            for (std::size_t m : {2u, 5u, 20u}) {
                std::vector<PointId> kept;
                connected_component_filter(PointCloud(pts), 0.03, m, &kept);
                REQUIRE(kept == brute_components(pts, 0.03, m));
            }
        }
    }
    SUBCASE("invariant under input permutation") {
        auto pts = random_points(4000, 7, 0.6);
        const PointCloud a = connected_component_filter(PointCloud(pts), 0.03, 8);
        std::mt19937_64 rng(1);
        std::shuffle(pts.begin(), pts.end(), rng);
        const PointCloud b = connected_component_filter(PointCloud(pts), 0.03, 8);
        CHECK(as_set(a) == as_set(b));
    }
}

TEST_CASE("preprocess chain is subtractive and keeps every bolt") {
    SynthConfig sc;
    sc.length = 4.0;
    sc.bolt_count = 16;
    const SynthScan scan = generate_scan(sc);
    const PointCloud out = preprocess(scan.cloud, PreprocessConfig{});
    const auto in_set = as_set(scan.cloud);
    for (const auto& p : out.positions()) REQUIRE(in_set.count({p.x, p.y, p.z}) == 1);
    CHECK(out.count_label(1) >= 0.95 * double(scan.cloud.count_label(1)));
    // Every planted bolt survives as an instance.
    CHECK(extract_instances(out, out.labels()).size() == sc.bolt_count);
    // No floor points remain.
    for (double s : out.channel("source")) REQUIRE(s != double(SourceKind::floor));
    CHECK(out.count_label(1) > 0);
}
