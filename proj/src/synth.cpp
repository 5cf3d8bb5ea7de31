#include "boltpipe/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "boltpipe/cloud_ops.hpp"
#include "boltpipe/geomfilter.hpp"

namespace boltpipe {

void SynthConfig::validate() const {
    if (!(length > 0.5)) throw ConfigError("synth length must be > 0.5 m");
    if (!(tunnel_radius > bolt_min_height + 0.3)) throw ConfigError("tunnel radius too small for the bolt height band");
    if (!(point_spacing > 0.0) || !(bolt_point_spacing > 0.0)) throw ConfigError("sampling pitches must be > 0");
    if (!(bolt_radius > 0.0)) throw ConfigError("bolt radius must be > 0");
    if (!(bolt_protrusion_min > 0.0) || bolt_protrusion_min > bolt_protrusion_max) {
        throw ConfigError("bolt protrusion range is empty");
    }
    if (bolt_protrusion_max > 0.2) throw ConfigError("bolt protrusion must not exceed 0.2 m");
    if (noise_sigma < 0.0) throw ConfigError("noise sigma must be >= 0");
    if (roughness_amplitude < 0.0 || roughness_amplitude > 0.05) throw ConfigError("roughness amplitude must be in [0, 0.05] m");
    if (outlier_fraction < 0.0 || outlier_fraction > 0.5) throw ConfigError("outlier fraction must be in [0, 0.5]");
}

namespace {

constexpr double kPi = std::numbers::pi;

struct Builder {
    std::vector<Vec3> pos;
    std::vector<std::uint8_t> label;
    std::vector<double> source;
    std::vector<double> bolt_id;

    void add(const Vec3& p, SourceKind kind, int bolt = -1) {
        pos.push_back(p);
        label.push_back(kind == SourceKind::bolt ? 1 : 0);
        source.push_back(static_cast<double>(kind));
        bolt_id.push_back(bolt);
    }
};

struct Roughness {
    struct Term {
        double amp, kx, ktheta, phase_x, phase_t;
    };
    std::vector<Term> terms;

    double operator()(double x, double theta) const {
        double r = 0.0;
        for (const auto& t : terms) r += t.amp * std::sin(t.kx * x + t.phase_x) * std::cos(t.ktheta * theta + t.phase_t);
        return r;
    }
};

// Orthonormal pair spanning the plane perpendicular to unit n.
void basis(const Vec3& n, Vec3& u, Vec3& v) {
    const Vec3 ref = std::fabs(n.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    u = n.cross(ref).normalized();
    v = n.cross(u);
}

} // namespace

SynthScan generate_scan(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };
    auto noise = [&] { return cfg.noise_sigma > 0.0 ? cfg.noise_sigma * gauss(rng) : 0.0; };

    const double R = cfg.tunnel_radius;
    const double s = cfg.point_spacing;

    Roughness rough;
    for (int m = 0; m < 4; ++m) {
        rough.terms.push_back({cfg.roughness_amplitude / 4.0 * uniform(0.5, 1.0), 2.0 * kPi / uniform(1.5, 4.0),
                               static_cast<double>(1 + m % 3), uniform(0.0, 2.0 * kPi), uniform(0.0, 2.0 * kPi)});
    }
    auto wall_point = [&](double x, double theta, double radial_offset) {
        const double rho = R + rough(x, theta) + radial_offset;
        return Vec3{x, rho * std::cos(theta), rho * std::sin(theta)};
    };
    auto wall_normal = [](double theta) { return Vec3{0.0, -std::cos(theta), -std::sin(theta)}; };

    Builder b;
    const auto nx = static_cast<std::size_t>(cfg.length / s);
    const auto ns = static_cast<std::size_t>(kPi * R / s);
    b.pos.reserve(nx * (ns + 2 * static_cast<std::size_t>(R / s)) + 64 * 1024);

    // Walls and roof: a grid in (x, arc length) with small tangential jitter.
    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < ns; ++j) {
            const double x = (static_cast<double>(i) + 0.5 + uniform(-0.15, 0.15)) * s;
            const double arc = (static_cast<double>(j) + 0.5 + uniform(-0.15, 0.15)) * s;
            b.add(wall_point(x, arc / R, noise()), SourceKind::surface);
        }
    }
    // Floor strip under the half-cylinder.
    const auto ny = static_cast<std::size_t>(2.0 * R / s);
    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < ny; ++j) {
            const double x = (static_cast<double>(i) + 0.5 + uniform(-0.15, 0.15)) * s;
            const double y = -R + (static_cast<double>(j) + 0.5 + uniform(-0.15, 0.15)) * s;
            b.add({x, y, noise()}, SourceKind::floor);
        }
    }

    // Bolts.
    SynthScan scan;
    const double theta_lo = std::asin(cfg.bolt_min_height / R);
    const double theta_hi = kPi - theta_lo;
    const double x_margin = std::min(0.3, cfg.length / 4.0);
    std::size_t attempts = 0;
    const std::size_t max_attempts = 2000 * (cfg.bolt_count + 1);
    while (scan.bolts.size() < cfg.bolt_count) {
        if (++attempts > max_attempts) {
            throw ConfigError("cannot place " + std::to_string(cfg.bolt_count) + " bolts " +
                              std::to_string(cfg.bolt_min_separation) + " m apart on this tunnel");
        }
        const double x = uniform(x_margin, cfg.length - x_margin);
        const double theta = uniform(theta_lo, theta_hi);
        const Vec3 base = wall_point(x, theta, 0.0);
        bool clear = true;
        for (const auto& other : scan.bolts) {
            if (distance(other.base, base) < cfg.bolt_min_separation) {
                clear = false;
                break;
            }
        }
        if (!clear) continue;
        const Vec3 n0 = wall_normal(theta);
        Vec3 t1{1, 0, 0};
        const Vec3 t2 = n0.cross(t1);
        const double tilt = uniform(0.0, cfg.bolt_max_tilt_deg) * kPi / 180.0;
        const double dir = uniform(0.0, 2.0 * kPi);
        const Vec3 axis = (n0 * std::cos(tilt) + (t1 * std::cos(dir) + t2 * std::sin(dir)) * std::sin(tilt)).normalized();
        scan.bolts.push_back({base, axis, uniform(cfg.bolt_protrusion_min, cfg.bolt_protrusion_max), cfg.bolt_radius, 0});
    }

    const double bs = cfg.bolt_point_spacing;
    for (std::size_t k = 0; k < scan.bolts.size(); ++k) {
        PlantedBolt& bolt = scan.bolts[k];
        const std::size_t before = b.pos.size();
        Vec3 u, v;
        basis(bolt.axis, u, v);
        const auto rings = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(bolt.protrusion / bs)));
        const auto around =
            std::max<std::size_t>(6, static_cast<std::size_t>(std::lround(2.0 * kPi * bolt.radius / bs)));
        const double spin = uniform(0.0, 2.0 * kPi);
        for (std::size_t r = 0; r < rings; ++r) {
            const double t = (static_cast<double>(r) + 0.5) * bolt.protrusion / static_cast<double>(rings);
            for (std::size_t a = 0; a < around; ++a) {
                const double phi =
                    spin + 2.0 * kPi * (static_cast<double>(a) + 0.5 * static_cast<double>(r % 2)) / static_cast<double>(around);
                const Vec3 radial = u * std::cos(phi) + v * std::sin(phi);
                b.add(bolt.base + bolt.axis * t + radial * (bolt.radius + noise()), SourceKind::bolt, static_cast<int>(k));
            }
        }
        // End cap.
        const Vec3 tip = bolt.base + bolt.axis * bolt.protrusion;
        b.add(tip + bolt.axis * noise(), SourceKind::bolt, static_cast<int>(k));
        for (double rho = bs; rho < bolt.radius; rho += bs) {
            const auto count = std::max<std::size_t>(3, static_cast<std::size_t>(std::lround(2.0 * kPi * rho / bs)));
            for (std::size_t a = 0; a < count; ++a) {
                const double phi = spin + 2.0 * kPi * static_cast<double>(a) / static_cast<double>(count);
                b.add(tip + (u * std::cos(phi) + v * std::sin(phi)) * rho + bolt.axis * noise(), SourceKind::bolt,
                      static_cast<int>(k));
            }
        }
        bolt.point_count = b.pos.size() - before;
    }

    // Attached clutter: boxes and hemispherical knobs flush with the wall.
    auto clear_of_bolts = [&](const Vec3& p, double margin) {
        for (const auto& bolt : scan.bolts) {
            if (distance(bolt.base, p) < margin) return false;
        }
        return true;
    };
    auto sample_face = [&](const Vec3& origin, const Vec3& e1, double len1, const Vec3& e2, double len2,
                           const Vec3& normal) {
        const auto n1 = std::max<std::size_t>(1, static_cast<std::size_t>(len1 / s));
        const auto n2 = std::max<std::size_t>(1, static_cast<std::size_t>(len2 / s));
        for (std::size_t i = 0; i < n1; ++i) {
            for (std::size_t j = 0; j < n2; ++j) {
                const double a1 = (static_cast<double>(i) + 0.5) * len1 / static_cast<double>(n1);
                const double a2 = (static_cast<double>(j) + 0.5) * len2 / static_cast<double>(n2);
                b.add(origin + e1 * a1 + e2 * a2 + normal * noise(), SourceKind::clutter);
            }
        }
    };
    for (std::size_t c = 0, tries = 0; c < cfg.stray_cluster_count && tries < 200 * (cfg.stray_cluster_count + 1); ++tries) {
        const double x = uniform(0.4, cfg.length - 0.4);
        const double theta = uniform(0.3, kPi - 0.3);
        const Vec3 base = wall_point(x, theta, 0.0);
        if (!clear_of_bolts(base, 0.6)) continue;
        const Vec3 n = wall_normal(theta);
        const Vec3 e1{1, 0, 0};
        const Vec3 e2 = n.cross(e1);
        if (c % 2 == 0) {
            const double w = uniform(0.12, 0.35), d = uniform(0.12, 0.35), h = uniform(0.08, 0.25);
            const Vec3 corner = base - e1 * (w / 2) - e2 * (d / 2);
            sample_face(corner + n * h, e1, w, e2, d, n);         // front
            sample_face(corner, e1, w, n, h, e2 * -1.0);           // side -e2
            sample_face(corner + e2 * d, e1, w, n, h, e2);         // side +e2
            sample_face(corner, e2, d, n, h, e1 * -1.0);           // side -e1
            sample_face(corner + e1 * w, e2, d, n, h, e1);         // side +e1
        } else {
            const double rho = uniform(0.05, 0.1);
            const auto count = static_cast<std::size_t>(2.0 * kPi * rho * rho / (s * s));
            const double golden = kPi * (3.0 - std::sqrt(5.0));
            for (std::size_t i = 0; i < count; ++i) {
                const double h = (static_cast<double>(i) + 0.5) / static_cast<double>(count);  // cos of polar angle
                const double ring = std::sqrt(1.0 - h * h);
                const double phi = golden * static_cast<double>(i);
                const Vec3 dir = n * h + e1 * (ring * std::cos(phi)) + e2 * (ring * std::sin(phi));
                b.add(base + dir * (rho + noise()), SourceKind::clutter);
            }
        }
        ++c;
    }

    // Floating debris, well away from every surface.
    for (std::size_t d = 0; d < cfg.debris_count; ++d) {
        const double rho = uniform(0.04, 0.08);
        const double theta = uniform(0.5, kPi - 0.5);
        const double radial = uniform(0.5, R - 0.6);
        const Vec3 center{uniform(0.3, cfg.length - 0.3), radial * std::cos(theta), radial * std::sin(theta)};
        const auto count = static_cast<std::size_t>(4.0 * kPi * rho * rho / (s * s));
        const double golden = kPi * (3.0 - std::sqrt(5.0));
        for (std::size_t i = 0; i < count; ++i) {
            const double h = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(count);
            const double ring = std::sqrt(1.0 - h * h);
            const double phi = golden * static_cast<double>(i);
            b.add(center + Vec3{ring * std::cos(phi), ring * std::sin(phi), h} * (rho + noise()), SourceKind::debris);
        }
    }

    // Isolated outliers spread through the tunnel volume.
    const auto outliers = static_cast<std::size_t>(cfg.outlier_fraction * static_cast<double>(b.pos.size()));
    for (std::size_t o = 0; o < outliers; ++o) {
        const double radial = (R - 0.1) * std::sqrt(unit(rng));
        const double theta = uniform(0.05, kPi - 0.05);
        b.add({uniform(0.0, cfg.length), radial * std::cos(theta), radial * std::sin(theta)}, SourceKind::outlier);
    }

    scan.cloud = PointCloud(std::move(b.pos));
    scan.cloud.set_labels(std::move(b.label));
    scan.cloud.set_channel("source", std::move(b.source));
    scan.cloud.set_channel("bolt_id", std::move(b.bolt_id));
    return scan;
}

ScanStats scan_stats(const PointCloud& cloud) {
    ScanStats st;
    st.points = cloud.size();
    if (cloud.empty()) return st;
    st.bolt_points = cloud.count_label(1);
    st.background_points = cloud.size() - st.bolt_points;
    if (cloud.has_labels() && st.bolt_points > 0) {
        std::vector<Vec3> bolt_pts;
        bolt_pts.reserve(st.bolt_points);
        const auto labels = cloud.labels();
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            if (labels[i] == 1) bolt_pts.push_back(cloud.position(i));
        }
        st.bolt_count = dbscan(bolt_pts, 0.1, 50).cluster_count;
        st.background_per_bolt_point = static_cast<double>(st.background_points) / static_cast<double>(st.bolt_points);
    }
    if (cloud.size() >= 2) st.mean_spacing = mean_point_spacing(cloud);
    return st;
}

} // namespace boltpipe
