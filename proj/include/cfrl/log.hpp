#pragma once

#include <functional>
#include <string>

namespace cfrl {

/// Destination for library warnings; defaults to stderr. Pass an empty
/// function to silence.
void set_warning_sink(std::function<void(const std::string&)> sink);
void warn(const std::string& message);

}  // namespace cfrl
