#include "boltpipe/log.hpp"

#include <iostream>
#include <mutex>

namespace boltpipe::log {
namespace {

std::mutex g_mutex;
bool g_quiet = false;
Sink g_sink = [](const std::string& m) { std::cerr << "boltpipe: warning: " << m << '\n'; };

} // namespace

Sink set_warning_sink(Sink sink) {
    std::lock_guard lock(g_mutex);
    std::swap(g_sink, sink);
    return sink;
}

void warn(const std::string& message) {
    std::lock_guard lock(g_mutex);
    if (g_sink) g_sink(message);
}

void info(const std::string& message) {
    std::lock_guard lock(g_mutex);
    if (!g_quiet) std::cerr << "boltpipe: " << message << '\n';
}

void set_quiet(bool quiet) {
    std::lock_guard lock(g_mutex);
    g_quiet = quiet;
}

} // namespace boltpipe::log
