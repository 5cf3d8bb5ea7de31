#include "boltpipe/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "boltpipe/types.hpp"

namespace boltpipe {

void Report::add(const std::string& key, const std::string& value) {
    if (key.empty() || key.find_first_of("=\n") != std::string::npos) {
        throw ContractError("report: bad key '" + key + "'");
    }
    if (value.find('\n') != std::string::npos) throw ContractError("report: value for " + key + " spans lines");
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries_.emplace_back(key, value);
}

void Report::add(const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    add(key, std::string(buf));
}

void Report::add(const std::string& key, long long value) { add(key, std::to_string(value)); }

void Report::add(const std::string& key, unsigned long long value) { add(key, std::to_string(value)); }

void Report::merge(const Report& other, const std::string& prefix) {
    for (const auto& [k, v] : other.entries_) add(prefix + k, v);
}

std::string Report::text() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
    return out;
}

void Report::write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report " + path);
    out << text();
    if (!out) throw IoError("write failed: " + path);
}

Report Report::read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report " + path);
    Report r;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError(path + ": expected key=value", n);
        r.entries_.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    return r;
}

const std::string* Report::find(const std::string& key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return &v;
    }
    return nullptr;
}

std::string report_path(const std::string& out) { return out + ".report"; }

} // namespace boltpipe
