#pragma once

#include <memory>

#include <spdlog/logger.h>

namespace rvrecon {

// Shared stderr logger. Lines are prefixed with the level in brackets,
// e.g. "[warning] day 2007-01-03 skipped: short day".
std::shared_ptr<spdlog::logger> logger();

} // namespace rvrecon
