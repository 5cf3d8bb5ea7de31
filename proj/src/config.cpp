#include "boltpipe/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace boltpipe {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
    ConfigFile cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find_first_of("#;");
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        auto where = [&] { return origin + ":" + std::to_string(line_no) + ": "; };
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where() + "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) throw ConfigError(where() + "empty section name");
            cfg.data_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where() + "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError(where() + "missing key");
        auto& slot = cfg.data_[section];
        if (slot.count(key)) throw ConfigError(where() + "duplicate key '" + key + "'");
        slot[key] = Entry{trim(line.substr(eq + 1)), line_no};
    }
    return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse(text.str(), path);
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    const auto s = data_.find(section);
    return s != data_.end() && s->second.count(key) > 0;
}

const std::string& ConfigFile::get(const std::string& section, const std::string& key) const {
    if (!has(section, key)) throw ConfigError("config: missing [" + section + "] " + key);
    return data_.at(section).at(key).value;
}

void ConfigFile::set(const std::string& section, const std::string& key, const std::string& value) {
    data_[section][key] = Entry{value, 0};
}

std::vector<std::string> ConfigFile::keys(const std::string& section) const {
    std::vector<std::string> out;
    const auto s = data_.find(section);
    if (s != data_.end()) {
        for (const auto& [k, v] : s->second) out.push_back(k);
    }
    return out;
}

std::vector<std::string> ConfigFile::sections() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : data_) out.push_back(k);
    return out;
}

std::size_t ConfigFile::line_of(const std::string& section, const std::string& key) const {
    return has(section, key) ? data_.at(section).at(key).line : 0;
}

// ------------------------------------------------------------ value readers

namespace {

class SectionReader {
public:
    SectionReader(const ConfigFile& cfg, std::string section) : cfg_(cfg), section_(std::move(section)) {}

    // Rejects keys no reader asked for.
    void finish() const {
        for (const auto& key : cfg_.keys(section_)) {
            if (!known_.count(key)) throw ConfigError(where(key) + "unknown key '" + key + "'");
        }
    }

    void number(const std::string& key, double& out) {
        if (!take(key)) return;
        const std::string& v = cfg_.get(section_, key);
        double x = 0.0;
        const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (ec != std::errc() || p != v.data() + v.size()) throw bad(key, "a number");
        out = x;
    }
    template <typename Int>
    void integer(const std::string& key, Int& out) {
        if (!take(key)) return;
        const std::string& v = cfg_.get(section_, key);
        Int x{};
        const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (ec != std::errc() || p != v.data() + v.size()) throw bad(key, "an integer");
        out = x;
    }
    void boolean(const std::string& key, bool& out) {
        if (!take(key)) return;
        const std::string& v = cfg_.get(section_, key);
        if (v == "true" || v == "1" || v == "yes" || v == "on") {
            out = true;
        } else if (v == "false" || v == "0" || v == "no" || v == "off") {
            out = false;
        } else {
            throw bad(key, "a boolean");
        }
    }
    void list(const std::string& key, std::vector<std::size_t>& out) {
        if (!take(key)) return;
        std::vector<std::size_t> vals;
        std::stringstream ss(cfg_.get(section_, key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            std::size_t x = 0;
            const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
            if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
                throw bad(key, "a comma-separated list of integers");
            }
            vals.push_back(x);
        }
        out = std::move(vals);
    }
    void execution(const std::string& key, Execution& out) {
        bool par = out == Execution::parallel;
        boolean(key, par);
        out = par ? Execution::parallel : Execution::serial;
    }
    // true selects the running averages, false per-tile batch statistics.
    void norm(const std::string& key, segnet::Mode& out) {
        bool running = out == segnet::Mode::eval;
        boolean(key, running);
        out = running ? segnet::Mode::eval : segnet::Mode::train;
    }
    void ignore(const std::string& key) { known_.insert(key); }

private:
    bool take(const std::string& key) {
        known_.insert(key);
        return cfg_.has(section_, key);
    }
    std::string where(const std::string& key) const {
        const std::size_t line = cfg_.line_of(section_, key);
        return cfg_.origin() + (line ? ":" + std::to_string(line) : std::string()) + ": [" + section_ + "] ";
    }
    ConfigError bad(const std::string& key, const char* what) const {
        return ConfigError(where(key) + key + " must be " + what + ", got '" + cfg_.get(section_, key) + "'");
    }

    const ConfigFile& cfg_;
    std::string section_;
    std::set<std::string> known_;
};

} // namespace

void read_config(const ConfigFile& cfg, SynthConfig& o) {
    SectionReader r(cfg, "synth");
    r.number("length", o.length);
    r.number("radius", o.tunnel_radius);
    r.number("spacing", o.point_spacing);
    r.integer("bolts", o.bolt_count);
    r.number("bolt_radius", o.bolt_radius);
    r.number("protrusion_min", o.bolt_protrusion_min);
    r.number("protrusion_max", o.bolt_protrusion_max);
    r.number("bolt_spacing", o.bolt_point_spacing);
    r.number("max_tilt", o.bolt_max_tilt_deg);
    r.number("min_separation", o.bolt_min_separation);
    r.number("min_height", o.bolt_min_height);
    r.number("noise", o.noise_sigma);
    r.number("roughness", o.roughness_amplitude);
    r.integer("clutter", o.stray_cluster_count);
    r.integer("debris", o.debris_count);
    r.number("outlier_fraction", o.outlier_fraction);
    r.integer("seed", o.seed);
    r.finish();
}

void read_config(const ConfigFile& cfg, PreprocessConfig& o) {
    SectionReader r(cfg, "preprocess");
    r.integer("knn_k", o.knn_k);
    r.number("knn_sigma", o.knn_sigma_mult);
    r.number("csf_grid", o.csf_grid);
    r.integer("csf_iterations", o.csf_iterations);
    r.number("csf_threshold", o.csf_threshold);
    r.integer("csf_rigidness", o.csf_rigidness);
    r.number("cc_voxel", o.cc_voxel);
    r.integer("cc_min_points", o.cc_min_points);
    r.boolean("keep_floor", o.keep_floor);
    r.finish();
}

void read_config(const ConfigFile& cfg, FilterConfig& o) {
    SectionReader r(cfg, "filter");
    r.number("percentile", o.percentile);
    r.number("eps", o.dbscan_eps);
    r.integer("min_pts", o.dbscan_min_pts);
    r.integer("g_th", o.g_th);
    r.number("roi_radius", o.roi_radius);
    r.finish();
}

void read_config(const ConfigFile& cfg, segnet::ArchConfig& a, segnet::TrainConfig& t) {
    SectionReader r(cfg, "train");
    r.integer("epochs", t.max_epochs);
    r.number("lr", t.learning_rate);
    r.integer("batch", t.batch_size);
    r.integer("tile", t.tile_size);
    r.integer("seed", t.seed);
    r.number("w_pos", t.w_pos);
    r.number("w_neg", t.w_neg);
    r.number("lr_decay", t.lr_decay);
    r.integer("lr_decay_every", t.lr_decay_every);
    r.integer("folds", t.folds);
    r.execution("parallel", t.exec);
    r.norm("running_stats", t.val_norm);
    r.boolean("verbose", t.verbose);
    r.integer("k", a.k);
    r.list("tnet_edge", a.tnet_edge);
    r.integer("tnet_point", a.tnet_point);
    r.list("tnet_fc", a.tnet_fc);
    r.list("widths", a.edge_widths);
    r.integer("agg", a.agg);
    r.list("head", a.head);
    r.number("leaky_slope", a.leaky_slope);
    r.number("bn_momentum", a.bn_momentum);
    r.boolean("standardize_lambda", a.standardize_lambda);
    r.finish();
}

void read_config(const ConfigFile& cfg, segnet::PredictConfig& o) {
    SectionReader r(cfg, "predict");
    r.integer("tile", o.tile_size);
    r.integer("seed", o.seed);
    r.execution("parallel", o.exec);
    r.norm("running_stats", o.norm);
    r.finish();
}

void read_config(const ConfigFile& cfg, EvalConfig& o) {
    SectionReader r(cfg, "eval");
    r.number("match_thresh", o.match_threshold);
    r.number("eps", o.instance_eps);
    r.integer("min_pts", o.instance_min_pts);
    r.finish();
}

void read_config(const ConfigFile& cfg, MapsConfig& o) {
    SectionReader r(cfg, "maps");
    r.number("radius", o.radius);
    r.boolean("colors", o.colors);
    r.number("distance_near", o.bins.distance_near);
    r.number("distance_far", o.bins.distance_far);
    r.number("count_sparse", o.bins.count_sparse);
    r.number("count_dense", o.bins.count_dense);
    r.finish();
}

} // namespace boltpipe
