#include "cfrl/log.hpp"

#include <iostream>

namespace cfrl {

namespace {
std::function<void(const std::string&)>& sink() {
  static std::function<void(const std::string&)> s = [](const std::string& m) {
    std::cerr << "warning: " << m << '\n';
  };
  return s;
}
}  // namespace

void set_warning_sink(std::function<void(const std::string&)> s) { sink() = std::move(s); }

void warn(const std::string& message) {
  if (sink()) sink()(message);
}

}  // namespace cfrl
