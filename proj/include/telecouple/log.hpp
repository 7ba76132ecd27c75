#pragma once

#include <functional>
#include <string>

namespace telecouple {

/// Receives warnings emitted by the library (degenerate inputs, dropped
/// columns, weak instruments). The default sink writes to stderr.
using WarningSink = std::function<void(const std::string&)>;

/// Installs `sink` and returns the previous one.
WarningSink set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace telecouple
