#pragma once

#include <string>
#include <utility>
#include <vector>

namespace boltpipe {

/// Ordered key=value pairs, written one per line to `<out>.report`.
class Report {
public:
    void add(const std::string& key, const std::string& value);
    void add(const std::string& key, double value);
    void add(const std::string& key, long long value);
    void add(const std::string& key, unsigned long long value);
    void add(const std::string& key, std::size_t value) { add(key, static_cast<unsigned long long>(value)); }
    void add(const std::string& key, int value) { add(key, static_cast<long long>(value)); }
    void add(const std::string& key, bool value) { add(key, std::string(value ? "true" : "false")); }
    void add(const std::string& key, const char* value) { add(key, std::string(value)); }

    void merge(const Report& other, const std::string& prefix = "");
    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    std::string text() const;
    void write(const std::string& path) const;

    static Report read(const std::string& path);
    const std::string* find(const std::string& key) const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

/// `path` + ".report".
std::string report_path(const std::string& out);

} // namespace boltpipe
