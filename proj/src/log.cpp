#include "telecouple/log.hpp"

#include <iostream>
#include <mutex>

namespace telecouple {

namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

WarningSink& sink() {
  static WarningSink s = [](const std::string& message) {
    std::cerr << "warning: " << message << '\n';
  };
  return s;
}

}  // namespace

WarningSink set_warning_sink(WarningSink s) {
  std::lock_guard lock(sink_mutex());
  std::swap(sink(), s);
  return s;
}

void warn(const std::string& message) {
  std::lock_guard lock(sink_mutex());
  if (sink()) sink()(message);
}

}  // namespace telecouple
