#include "boltpipe/preprocess.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <numeric>

#include "boltpipe/cloud_ops.hpp"
#include "boltpipe/linalg3.hpp"
#include "boltpipe/log.hpp"
#include "boltpipe/spatial_index.hpp"

namespace boltpipe {

void PreprocessConfig::validate() const {
    if (knn_k < 4 || knn_k > 15) throw ConfigError("knn_k must be in [4, 15], got " + std::to_string(knn_k));
    if (!(knn_sigma_mult > 0.0)) throw ConfigError("knn_sigma_mult must be > 0");
    if (!(csf_grid > 0.0)) throw ConfigError("csf_grid must be > 0");
    if (csf_iterations < 400 || csf_iterations > 500) {
        throw ConfigError("csf_iterations must be in [400, 500], got " + std::to_string(csf_iterations));
    }
    if (!(csf_threshold > 0.0)) throw ConfigError("csf_threshold must be > 0");
    if (csf_rigidness < 1 || csf_rigidness > 3) throw ConfigError("csf_rigidness must be 1, 2 or 3");
    if (!(cc_voxel > 0.0)) throw ConfigError("cc_voxel must be > 0");
}

// ---------------------------------------------------------------- k-NN filter

std::vector<double> plane_residuals(const PointCloud& cloud, std::size_t k, Execution exec) {
    if (cloud.size() <= k) throw DomainError("plane_residuals needs more than k points");
    const SpatialIndex index(cloud.positions());
    const auto pts = cloud.positions();
    const auto n = static_cast<std::int64_t>(cloud.size());
    std::vector<double> res(cloud.size(), 0.0);

    auto one = [&](std::int64_t i, std::vector<Neighbor>& buf, std::vector<Vec3>& nbr) {
        const auto self = static_cast<PointId>(i);
        index.knn_query(pts[static_cast<std::size_t>(i)], k + 1, buf);
        nbr.clear();
        for (const auto& nb : buf) {
            if (nb.id != self && nbr.size() < k) nbr.push_back(pts[nb.id]);
        }
        Vec3 centroid;
        const Sym3 cov = covariance(nbr.size(), [&](std::size_t j) { return nbr[j]; }, &centroid);
        const Eigen3 e = eigen_symmetric3(cov);
        // Rank < 2: the plane is underdetermined, keep the point.
        if (!(e.values[0] > 0.0) || e.values[1] <= 1e-12 * e.values[0]) return;
        res[static_cast<std::size_t>(i)] = std::fabs((pts[static_cast<std::size_t>(i)] - centroid).dot(e.vectors[2]));
    };

    if (exec == Execution::serial) {
        std::vector<Neighbor> buf;
        std::vector<Vec3> nbr;
        for (std::int64_t i = 0; i < n; ++i) one(i, buf, nbr);
    } else {
#pragma omp parallel
        {
            std::vector<Neighbor> buf;
            std::vector<Vec3> nbr;
#pragma omp for schedule(dynamic, 2048)
            for (std::int64_t i = 0; i < n; ++i) one(i, buf, nbr);
        }
    }
    return res;
}

PointCloud knn_outlier_filter(const PointCloud& cloud, std::size_t k, double sigma_mult,
                              std::vector<PointId>* kept_ids) {
    if (k < 4 || k > 15) throw DomainError("knn_outlier_filter: k must be in [4, 15], got " + std::to_string(k));
    if (cloud.size() <= k) throw DomainError("knn_outlier_filter: cloud must have more than k points");
    const std::vector<double> res = plane_residuals(cloud, k);

    double mean = 0.0;
    for (double r : res) mean += r;
    mean /= static_cast<double>(res.size());
    double var = 0.0;
    for (double r : res) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / static_cast<double>(res.size()));
    const double limit = mean + sigma_mult * sd;

    std::vector<PointId> keep;
    keep.reserve(cloud.size());
    for (std::size_t i = 0; i < res.size(); ++i) {
        if (!(res[i] > limit)) keep.push_back(static_cast<PointId>(i));
    }
    PointCloud out = cloud.subset(keep);
    if (kept_ids) *kept_ids = std::move(keep);
    return out;
}

// ------------------------------------------------------------ cloth simulation

namespace {

// Constraint relaxation factors per rigidness level, from the reference cloth
// simulation filter: one movable end, both ends movable.
constexpr double kSingleMove[4] = {0.0, 0.3, 0.51, 0.657};
constexpr double kDoubleMove[4] = {0.0, 0.3, 0.42, 0.468};
constexpr double kTimeStep = 0.65;
constexpr double kGravity = 0.2;
constexpr double kDamping = 0.01;
constexpr double kSettleTolerance = 0.005;

struct Cloth {
    std::size_t nx = 0;
    std::size_t ny = 0;
    double x0 = 0.0;
    double y0 = 0.0;
    double spacing = 0.0;
    std::vector<double> pos;
    std::vector<double> old;
    std::vector<double> floor;   // collision height per node (mirrored frame)
    std::vector<std::uint8_t> movable;

    std::size_t at(std::size_t i, std::size_t j) const { return j * nx + i; }

    double height_at(double x, double y) const {
        const double fx = std::clamp((x - x0) / spacing, 0.0, static_cast<double>(nx - 1));
        const double fy = std::clamp((y - y0) / spacing, 0.0, static_cast<double>(ny - 1));
        const auto i = std::min(static_cast<std::size_t>(fx), nx - 2);
        const auto j = std::min(static_cast<std::size_t>(fy), ny - 2);
        const double tx = fx - static_cast<double>(i);
        const double ty = fy - static_cast<double>(j);
        const double h00 = pos[at(i, j)], h10 = pos[at(i + 1, j)];
        const double h01 = pos[at(i, j + 1)], h11 = pos[at(i + 1, j + 1)];
        return (1 - ty) * ((1 - tx) * h00 + tx * h10) + ty * ((1 - tx) * h01 + tx * h11);
    }
};

void relax(Cloth& c, std::size_t a, std::size_t b, int rigidness) {
    const double corr = c.pos[b] - c.pos[a];
    if (c.movable[a] && c.movable[b]) {
        const double m = corr * kDoubleMove[rigidness];
        c.pos[a] += m;
        c.pos[b] -= m;
    } else if (c.movable[a]) {
        c.pos[a] += corr * kSingleMove[rigidness];
    } else if (c.movable[b]) {
        c.pos[b] -= corr * kSingleMove[rigidness];
    }
}

} // namespace

CsfResult cloth_simulation_filter(const PointCloud& cloud, const PreprocessConfig& cfg) {
    if (cloud.empty()) throw DomainError("cloth_simulation_filter: empty cloud");
    if (!(cfg.csf_grid > 0.0)) throw ConfigError("csf_grid must be > 0");
    if (cfg.csf_rigidness < 1 || cfg.csf_rigidness > 3) throw ConfigError("csf_rigidness must be 1, 2 or 3");
    CsfResult result;
    const auto pts = cloud.positions();
    const Bounds box = bounding_box(pts);
    const double ext_x = box.hi.x - box.lo.x;
    const double ext_y = box.hi.y - box.lo.y;
    if (ext_x < cfg.csf_grid || ext_y < cfg.csf_grid) {
        log::warn("cloth simulation: footprint smaller than one grid cell, no ground extracted");
        result.offground = cloud;
        result.offground_ids.resize(cloud.size());
        std::iota(result.offground_ids.begin(), result.offground_ids.end(), PointId{0});
        return result;
    }

    Cloth c;
    c.spacing = cfg.csf_grid;
    c.x0 = box.lo.x - c.spacing;
    c.y0 = box.lo.y - c.spacing;
    c.nx = static_cast<std::size_t>(std::ceil(ext_x / c.spacing)) + 3;
    c.ny = static_cast<std::size_t>(std::ceil(ext_y / c.spacing)) + 3;
    const std::size_t nodes = c.nx * c.ny;

    // Collision heights: highest mirrored point (lowest original) nearest each node.
    constexpr double kUnset = -std::numeric_limits<double>::infinity();
    c.floor.assign(nodes, kUnset);
    for (const Vec3& p : pts) {
        const auto i = static_cast<std::size_t>(std::lround((p.x - c.x0) / c.spacing));
        const auto j = static_cast<std::size_t>(std::lround((p.y - c.y0) / c.spacing));
        double& h = c.floor[c.at(i, j)];
        h = std::max(h, -p.z);
    }
    // Empty nodes take the height of the nearest populated node (breadth-first).
    {
        std::deque<std::size_t> queue;
        for (std::size_t n = 0; n < nodes; ++n) {
            if (c.floor[n] != kUnset) queue.push_back(n);
        }
        while (!queue.empty()) {
            const std::size_t n = queue.front();
            queue.pop_front();
            const std::size_t i = n % c.nx, j = n / c.nx;
            const std::size_t nb[4] = {i > 0 ? n - 1 : n, i + 1 < c.nx ? n + 1 : n, j > 0 ? n - c.nx : n,
                                       j + 1 < c.ny ? n + c.nx : n};
            for (std::size_t m : nb) {
                if (c.floor[m] == kUnset) {
                    c.floor[m] = c.floor[n];
                    queue.push_back(m);
                }
            }
        }
    }

    double top = kUnset;
    for (const Vec3& p : pts) top = std::max(top, -p.z);
    c.pos.assign(nodes, top + 0.05);
    c.old = c.pos;
    c.movable.assign(nodes, 1);

    const double accel = -kGravity * kTimeStep * kTimeStep;
    const auto n_nodes = static_cast<std::int64_t>(nodes);
    std::size_t iter = 0;
    for (; iter < cfg.csf_iterations; ++iter) {
#pragma omp parallel for schedule(static)
        for (std::int64_t n = 0; n < n_nodes; ++n) {
            const auto u = static_cast<std::size_t>(n);
            if (!c.movable[u]) continue;
            const double cur = c.pos[u];
            c.pos[u] = cur + (cur - c.old[u]) * (1.0 - kDamping) + accel;
            c.old[u] = cur;
        }
        for (std::size_t j = 0; j < c.ny; ++j) {
            for (std::size_t i = 0; i < c.nx; ++i) {
                if (i + 1 < c.nx) relax(c, c.at(i, j), c.at(i + 1, j), cfg.csf_rigidness);
                if (j + 1 < c.ny) relax(c, c.at(i, j), c.at(i, j + 1), cfg.csf_rigidness);
            }
        }
        double max_move = 0.0;
        for (std::size_t u = 0; u < nodes; ++u) {
            if (!c.movable[u]) continue;
            if (c.pos[u] < c.floor[u]) {
                c.pos[u] = c.floor[u];
                c.old[u] = c.floor[u];
                c.movable[u] = 0;
            }
            max_move = std::max(max_move, std::fabs(c.pos[u] - c.old[u]));
        }
        if (max_move < kSettleTolerance) {
            ++iter;
            break;
        }
    }
    result.iterations_run = iter;

    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double dz = std::fabs(-pts[i].z - c.height_at(pts[i].x, pts[i].y));
        (dz < cfg.csf_threshold ? result.ground_ids : result.offground_ids).push_back(static_cast<PointId>(i));
    }
    result.ground = cloud.subset(result.ground_ids);
    result.offground = cloud.subset(result.offground_ids);
    return result;
}

// ------------------------------------------------------- connected components

namespace {

constexpr int kAxisBits = 21;
constexpr std::int64_t kAxisMax = (std::int64_t{1} << kAxisBits) - 1;

std::uint64_t pack(std::int64_t x, std::int64_t y, std::int64_t z) {
    return (static_cast<std::uint64_t>(x) << (2 * kAxisBits)) | (static_cast<std::uint64_t>(y) << kAxisBits) |
           static_cast<std::uint64_t>(z);
}

struct DisjointSet {
    std::vector<std::uint32_t> parent;
    explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
    std::uint32_t find(std::uint32_t a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    }
    void unite(std::uint32_t a, std::uint32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) parent[b] = a;
        else parent[a] = b;
    }
};

} // namespace

PointCloud connected_component_filter(const PointCloud& cloud, double voxel, std::size_t min_points,
                                      std::vector<PointId>* kept_ids) {
    if (!(voxel > 0.0)) throw DomainError("connected_component_filter: voxel must be > 0");
    const auto pts = cloud.positions();
    const Bounds box = bounding_box(pts);
    const auto n = static_cast<std::int64_t>(pts.size());

    std::vector<std::uint64_t> keys(pts.size());
    bool overflow = false;
#pragma omp parallel for schedule(static) reduction(|| : overflow)
    for (std::int64_t i = 0; i < n; ++i) {
        const Vec3 d = pts[static_cast<std::size_t>(i)] - box.lo;
        const auto ix = static_cast<std::int64_t>(std::floor(d.x / voxel));
        const auto iy = static_cast<std::int64_t>(std::floor(d.y / voxel));
        const auto iz = static_cast<std::int64_t>(std::floor(d.z / voxel));
        // Keep one voxel of headroom so +1 neighbor offsets stay packable.
        if (ix >= kAxisMax || iy >= kAxisMax || iz >= kAxisMax) overflow = true;
        // Shift by one so neighbor offsets of -1 remain non-negative.
        keys[static_cast<std::size_t>(i)] = pack(ix + 1, iy + 1, iz + 1);
    }
    if (overflow) throw DomainError("connected_component_filter: cloud extent too large for voxel pitch");

    std::vector<std::uint64_t> voxels = keys;
    std::sort(voxels.begin(), voxels.end());
    voxels.erase(std::unique(voxels.begin(), voxels.end()), voxels.end());
    auto voxel_of = [&](std::uint64_t key) -> std::int64_t {
        const auto it = std::lower_bound(voxels.begin(), voxels.end(), key);
        return (it != voxels.end() && *it == key) ? it - voxels.begin() : -1;
    };

    DisjointSet ds(voxels.size());
    const std::uint64_t mask = static_cast<std::uint64_t>(kAxisMax);
    for (std::size_t v = 0; v < voxels.size(); ++v) {
        const auto x = static_cast<std::int64_t>((voxels[v] >> (2 * kAxisBits)) & mask);
        const auto y = static_cast<std::int64_t>((voxels[v] >> kAxisBits) & mask);
        const auto z = static_cast<std::int64_t>(voxels[v] & mask);
        for (int dx = -1; dx <= 1; ++dx) {
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dz = -1; dz <= 1; ++dz) {
                    // Each unordered pair once: only offsets that are lexicographically positive.
                    if (dx < 0 || (dx == 0 && (dy < 0 || (dy == 0 && dz <= 0)))) continue;
                    const std::int64_t w = voxel_of(pack(x + dx, y + dy, z + dz));
                    if (w >= 0) ds.unite(static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(w));
                }
            }
        }
    }

    std::vector<std::uint32_t> point_voxel(pts.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        point_voxel[static_cast<std::size_t>(i)] =
            static_cast<std::uint32_t>(voxel_of(keys[static_cast<std::size_t>(i)]));
    }
    std::vector<std::size_t> comp_points(voxels.size(), 0);
    for (std::size_t i = 0; i < pts.size(); ++i) ++comp_points[ds.find(point_voxel[i])];

    std::vector<PointId> keep;
    keep.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (comp_points[ds.find(point_voxel[i])] >= min_points) keep.push_back(static_cast<PointId>(i));
    }
    PointCloud out = cloud.subset(keep);
    if (kept_ids) *kept_ids = std::move(keep);
    return out;
}

// ------------------------------------------------------------------- chain

PointCloud preprocess(const PointCloud& cloud, const PreprocessConfig& cfg, PreprocessTimings* timings) {
    cfg.validate();
    using clock = std::chrono::steady_clock;
    auto seconds = [](clock::time_point a, clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };

    auto t0 = clock::now();
    PointCloud stage = knn_outlier_filter(cloud, cfg.knn_k, cfg.knn_sigma_mult);
    auto t1 = clock::now();
    if (!cfg.keep_floor) stage = std::move(cloth_simulation_filter(stage, cfg).offground);
    auto t2 = clock::now();
    stage = connected_component_filter(stage, cfg.cc_voxel, cfg.cc_min_points);
    auto t3 = clock::now();
    if (timings) {
        timings->knn_seconds = seconds(t0, t1);
        timings->csf_seconds = seconds(t1, t2);
        timings->cc_seconds = seconds(t2, t3);
    }
    return stage;
}

} // namespace boltpipe
