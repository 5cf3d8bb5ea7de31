#pragma once

#include <map>
#include <string>
#include <vector>

#include "boltpipe/geomfilter.hpp"
#include "boltpipe/maps.hpp"
#include "boltpipe/metrics.hpp"
#include "boltpipe/preprocess.hpp"
#include "boltpipe/segnet.hpp"
#include "boltpipe/synth.hpp"

namespace boltpipe {

/// `key = value` lines grouped under `[section]` headers. `#` and `;` start
/// comments. Keys before the first header belong to section "".
class ConfigFile {
public:
    static ConfigFile parse(const std::string& text, const std::string& origin = "<config>");
    static ConfigFile load(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    const std::string& get(const std::string& section, const std::string& key) const;
    void set(const std::string& section, const std::string& key, const std::string& value);
    std::vector<std::string> keys(const std::string& section) const;
    std::vector<std::string> sections() const;
    std::size_t line_of(const std::string& section, const std::string& key) const;  // 0 if set programmatically
    const std::string& origin() const { return origin_; }

private:
    struct Entry {
        std::string value;
        std::size_t line = 0;
    };
    std::string origin_;
    std::map<std::string, std::map<std::string, Entry>> data_;
};

// Per-stage readers. Each throws ConfigError on an unknown key in its section
// or an unparsable value, and leaves fields without a key untouched.
void read_config(const ConfigFile& cfg, SynthConfig& out);
void read_config(const ConfigFile& cfg, PreprocessConfig& out);
void read_config(const ConfigFile& cfg, FilterConfig& out);
void read_config(const ConfigFile& cfg, segnet::ArchConfig& arch, segnet::TrainConfig& train);
void read_config(const ConfigFile& cfg, segnet::PredictConfig& out);
void read_config(const ConfigFile& cfg, EvalConfig& out);

struct MapsConfig {
    double radius = 2.0;  // distribution-map neighborhood (m)
    bool colors = true;   // also write the blue-red ramp as RGB
    ColorBins bins;
};
void read_config(const ConfigFile& cfg, MapsConfig& out);

} // namespace boltpipe
