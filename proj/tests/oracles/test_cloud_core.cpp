#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "../support.hpp"
#include "boltpipe/cloud_ops.hpp"
#include "boltpipe/log.hpp"
#include "boltpipe/ply.hpp"

using namespace boltpipe;
using namespace testsupport;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream(path, std::ios::binary) << text;
}

std::size_t format_error_line(const std::string& path) {
    try {
        load_ply(path);
    } catch (const FormatError& e) {
        return e.line();
    }
    return 0;
}

} // namespace

TEST_CASE("point cloud rejects broken invariants") {
    CHECK_THROWS_AS(PointCloud({{0, 0, std::numeric_limits<double>::quiet_NaN()}}), ValidationError);
    CHECK_THROWS_AS(PointCloud({{std::numeric_limits<double>::infinity(), 0, 0}}), ValidationError);
    PointCloud c({{0, 0, 0}, {1, 0, 0}});
    CHECK_THROWS_AS(c.set_labels({0, 2}), ValidationError);
    CHECK_THROWS_AS(c.set_labels({0}), ValidationError);
    CHECK_THROWS_AS(c.set_channel("curvature", {1.0}), ValidationError);
    c.set_labels({0, 1});
    c.set_channel("curvature", {0.5, 0.25});
    CHECK(c.count_label(1) == 1);
    const PointId keep[] = {1};
    const PointCloud s = c.subset(keep);
    REQUIRE(s.size() == 1);
    CHECK(s.labels()[0] == 1);
    CHECK(s.channel("curvature")[0] == 0.25);
}

TEST_CASE("ply: minimal ascii file without labels") {
    TempDir dir("ply");
    const auto path = dir.file("a.ply");
    write_text(path,
               "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
               "end_header\n0 0 0\n1 0 0\n0 1 0.5\n");
    const PointCloud c = load_ply(path);
    CHECK(c.size() == 3);
    CHECK_FALSE(c.has_labels());
    CHECK(c.position(2).z == 0.5);
}

TEST_CASE("ply: labels pass through") {
    TempDir dir("ply");
    const auto path = dir.file("a.ply");
    write_text(path,
               "ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\nproperty double y\nproperty double z\n"
               "property uchar label\nend_header\n0 0 0 0\n1 0 0 1\n0 1 0 0\n");
    const PointCloud c = load_ply(path);
    REQUIRE(c.has_labels());
    CHECK(std::vector<std::uint8_t>(c.labels().begin(), c.labels().end()) == std::vector<std::uint8_t>{0, 1, 0});
}

TEST_CASE("ply: errors") {
    TempDir dir("ply");
    const std::string head =
        "ply\nformat ascii 1.0\nelement vertex 5\nproperty double x\nproperty double y\nproperty double z\n";
    SUBCASE("body shorter than declared") {
        write_text(dir.file("a.ply"), head + "end_header\n0 0 0\n1 0 0\n2 0 0\n3 0 0\n");
        CHECK_THROWS_AS(load_ply(dir.file("a.ply")), FormatError);
        CHECK(format_error_line(dir.file("a.ply")) > 7);
    }
    SUBCASE("malformed header reports its line") {
        write_text(dir.file("a.ply"), "ply\nformat ascii 1.0\nelement vertex 1\nproperty blob x\nend_header\n0\n");
        CHECK(format_error_line(dir.file("a.ply")) == 4);
    }
    SUBCASE("missing magic") {
        write_text(dir.file("a.ply"), "plx\n");
        CHECK(format_error_line(dir.file("a.ply")) == 1);
    }
    SUBCASE("label outside {0,1}") {
        write_text(dir.file("a.ply"),
                   "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\n"
                   "property double z\nproperty uchar label\nend_header\n0 0 0 2\n");
        CHECK_THROWS_AS(load_ply(dir.file("a.ply")), ValidationError);
    }
    SUBCASE("binary body truncated") {
        PointCloud c(random_points(10, 1));
        save_ply(c, dir.file("b.ply"));
        const auto size = std::filesystem::file_size(dir.file("b.ply"));
        std::filesystem::resize_file(dir.file("b.ply"), size - 5);
        CHECK_THROWS_AS(load_ply(dir.file("b.ply")), FormatError);
    }
    SUBCASE("unreadable and unwritable paths") {
        CHECK_THROWS_AS(load_ply(dir.file("missing.ply")), IoError);
        CHECK_THROWS_AS(save_ply(PointCloud{}, dir.file("no/such/dir/x.ply")), IoError);
    }
}

TEST_CASE("ply: unknown properties are skipped with a warning") {
    TempDir dir("ply");
    write_text(dir.file("a.ply"),
               "ply\nformat ascii 1.0\ncomment hello\nelement vertex 2\nproperty double x\nproperty double y\n"
               "property double z\nproperty int flags\nproperty float intensity\nelement face 1\n"
               "property list uchar int vertex_indices\nend_header\n0 0 0 7 0.5\n1 1 1 3 0.25\n3 0 1 1\n");
    std::vector<std::string> warnings;
    auto old = log::set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
    const PointCloud c = load_ply(dir.file("a.ply"));
    log::set_warning_sink(old);
    CHECK(c.size() == 2);
    CHECK(c.has_channel("intensity"));
    CHECK_FALSE(c.has_channel("flags"));
    CHECK(warnings.size() >= 2);
}

TEST_CASE("ply: binary roundtrip is bit exact") {
    TempDir dir("ply");
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    std::vector<Vec3> pts(1000);
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    PointCloud c(pts);
    SUBCASE("positions only") {
        save_ply(c, dir.file("a.ply"));
        CHECK(bitwise_equal(load_ply(dir.file("a.ply")).positions(), c.positions()));
    }
    SUBCASE("labels, a channel and colors") {
        std::vector<std::uint8_t> labels(pts.size());
        std::vector<double> channel(pts.size());
        std::vector<Rgb> colors(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            labels[i] = i % 7 == 0;
            // Channels are stored as 32-bit floats; use values that survive that.
            channel[i] = static_cast<double>(static_cast<float>(u(rng)));
            colors[i] = {static_cast<std::uint8_t>(i), 0, static_cast<std::uint8_t>(255 - i % 256)};
        }
        c.set_labels(labels);
        c.set_channel("curvature", channel);
        c.set_colors(colors);
        save_ply(c, dir.file("a.ply"));
        const PointCloud back = load_ply(dir.file("a.ply"));
        CHECK(same_cloud(c, back));
        REQUIRE(back.has_colors());
        CHECK(std::equal(colors.begin(), colors.end(), back.colors().begin()));
    }
    SUBCASE("ascii keeps 17 significant digits") {
        save_ply(c, dir.file("a.ply"), PlyFormat::ascii);
        CHECK(bitwise_equal(load_ply(dir.file("a.ply")).positions(), c.positions()));
    }
}

TEST_CASE("ply: 64-bit channel values round through float") {
    TempDir dir("ply");
    PointCloud c({{0, 0, 0}});
    c.set_channel("distance", {0.1});
    save_ply(c, dir.file("a.ply"));
    CHECK(load_ply(dir.file("a.ply")).channel("distance")[0] == static_cast<double>(0.1f));
}

TEST_CASE("ply: empty cloud") {
    TempDir dir("ply");
    save_ply(PointCloud{}, dir.file("a.ply"));
    CHECK(load_ply(dir.file("a.ply")).empty());
    save_ply(PointCloud{}, dir.file("b.ply"), PlyFormat::ascii);
    CHECK(load_ply(dir.file("b.ply")).empty());
}

TEST_CASE("ply: big endian body") {
    TempDir dir("ply");
    std::string text = "ply\nformat binary_big_endian 1.0\nelement vertex 1\nproperty double x\nproperty double y\n"
                       "property double z\nproperty uchar label\nend_header\n";
    for (double v : {1.5, -2.0, 0.25}) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int b = 7; b >= 0; --b) text += static_cast<char>((bits >> (8 * b)) & 0xff);
    }
    text += '\1';
    write_text(dir.file("a.ply"), text);
    const PointCloud c = load_ply(dir.file("a.ply"));
    CHECK(c.position(0).x == 1.5);
    CHECK(c.position(0).y == -2.0);
    CHECK(c.position(0).z == 0.25);
    CHECK(c.labels()[0] == 1);
}

TEST_CASE("mean point spacing") {
    std::vector<Vec3> grid;
    for (int i = 0; i < 10; ++i) {
        for (int j = 0; j < 10; ++j) {
            for (int k = 0; k < 10; ++k) grid.push_back({double(i), double(j), double(k)});
        }
    }
    CHECK(mean_point_spacing(PointCloud(grid)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mean_point_spacing(PointCloud({{0, 0, 0}, {0.5, 0, 0}})) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(mean_point_spacing(PointCloud({{0, 0, 0}})), DomainError);

    const PointCloud r(random_points(3000, 9));
    double brute = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (j != i) best = std::min(best, squared_distance(r.position(i), r.position(j)));
        }
        brute += std::sqrt(best);
    }
    brute /= static_cast<double>(r.size());
    CHECK(mean_point_spacing(r, Execution::serial) == doctest::Approx(brute).epsilon(1e-12));
    CHECK(mean_point_spacing(r, Execution::serial) == mean_point_spacing(r, Execution::parallel));
}

TEST_CASE("radius query") {
    const auto pts = random_points(200, 3);
    const SpatialIndex index(pts);
    CHECK(index.radius_query(pts[17], 1e-9) == std::vector<PointId>{17});
    CHECK(index.radius_query(pts[0], 2.0).size() == pts.size());
    CHECK_THROWS_AS(index.radius_query(pts[0], 0.0), DomainError);
    for (std::size_t q = 0; q < pts.size(); ++q) {
        const auto got = index.radius_query(pts[q], 0.3);
        CHECK(got == brute_radius(pts, pts[q], 0.3));
        CHECK(index.count_in_radius(pts[q], 0.3) == got.size());
    }
}

TEST_CASE("radius query matches brute force across clouds and radii") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto pts = random_points(2000, 100 + seed);
        const SpatialIndex index(pts);
        const auto queries = random_points(50, 200 + seed, 1.2);
        for (double r : {0.01, 0.05, 0.2, 0.7}) {
            for (const auto& c : queries) REQUIRE(index.radius_query(c, r) == brute_radius(pts, c, r));
        }
    }
}

TEST_CASE("knn query") {
    const auto pts = random_points(500, 4);
    const SpatialIndex index(pts);
    CHECK(index.knn_query(pts[42], 1).front().id == 42);
    const auto all = index.knn_query(pts[7], pts.size());
    CHECK(all == brute_knn(pts, pts[7], pts.size()));
    CHECK_THROWS_AS(index.knn_query(pts[0], pts.size() + 1), DomainError);
    for (std::size_t q = 0; q < pts.size(); q += 5) CHECK(index.knn_query(pts[q], 20) == brute_knn(pts, pts[q], 20));
    const auto off = random_points(100, 44, 1.5);
    for (const auto& c : off) CHECK(index.knn_query(c, 20) == brute_knn(pts, c, 20));
}

TEST_CASE("knn ties break by ascending id") {
    // Integer lattice with duplicates: many exactly equal distances.
    std::vector<Vec3> pts;
    for (int rep = 0; rep < 2; ++rep) {
        for (int i = 0; i < 6; ++i) {
            for (int j = 0; j < 6; ++j) pts.push_back({double(i), double(j), 0.0});
        }
    }
    const SpatialIndex index(pts, 4);
    for (std::size_t q = 0; q < pts.size(); ++q) {
        for (std::size_t k : {1u, 5u, 13u, 72u}) REQUIRE(index.knn_query(pts[q], k) == brute_knn(pts, pts[q], k));
    }
}

TEST_CASE("index construction leaves the cloud untouched") {
    const auto pts = random_points(1500, 8);
    const auto copy = pts;
    const SpatialIndex index(pts);
    for (const auto& p : pts) index.knn_query(p, 4);
    CHECK(std::memcmp(pts.data(), copy.data(), pts.size() * sizeof(Vec3)) == 0);
}
