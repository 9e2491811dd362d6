#pragma once

#include <string_view>

namespace ibpt {

// Accepts trace|debug|info|warn|error|off. The default comes from the
// IBPT_LOG environment variable (falling back to "warn").
void set_log_level(std::string_view level);

}  // namespace ibpt
