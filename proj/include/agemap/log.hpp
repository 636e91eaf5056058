#pragma once

#include <functional>
#include <string>

namespace agemap::log {

using Sink = std::function<void(const std::string&)>;

/// Replaces the warning sink (stderr by default). Returns the previous sink.
Sink set_warning_sink(Sink sink);

void warn(const std::string& message);

} // namespace agemap::log
