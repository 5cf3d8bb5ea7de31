#pragma once

#include <functional>
#include <string>

namespace boltpipe::log {

using Sink = std::function<void(const std::string&)>;

// Replaces the warning sink (stderr by default). Returns the previous sink.
Sink set_warning_sink(Sink sink);

void warn(const std::string& message);
void info(const std::string& message);

// Silences info() output; warnings still go to the sink.
void set_quiet(bool quiet);

} // namespace boltpipe::log
